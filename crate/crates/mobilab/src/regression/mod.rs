//! Dense OLS with absorbed fixed effects, robust standard errors and
//! Frisch-Waugh-Lovell residualization.
//!
//! The solver is QR on the (possibly demeaned) design; one-way person effects
//! are absorbed by within-person demeaning and recovered from group means.
//! A fit is read-only over the panel and deterministic regardless of how the
//! internal chunked factorization is parallelized.

pub mod design;
pub mod solve;

pub use design::{
    age_poly_terms, build_design, cat_by_age_terms, cont_by_age_terms, BuiltDesign, CatVar,
    Design, DesignContext, DesignSpec, Factor, FixedEffects, Response, Term,
};

use crate::error::{Error, Result};
use crate::exec;

/// Result of one regression: coefficients on the design columns, absorbed
/// effects, residuals (on the estimation scale) and fit statistics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Columns omitted because they carried no variation (coefficient 0).
    pub omitted: Vec<bool>,
    pub se: Vec<f64>,
    /// One residual per design row. For person-effect fits these are the
    /// within residuals, identical to the dummy-variable residuals.
    pub residuals: Vec<f64>,
    /// Absorbed effect per retained person (aligned with
    /// `BuiltDesign::retained_persons`), when person effects were requested.
    pub fixed_effects: Option<Vec<f64>>,
    pub r2: f64,
    pub n_obs: usize,
    /// Live columns plus absorbed group count.
    pub n_params: usize,
    pub rss: f64,
    pub robust: bool,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.se[i])
    }
}

/// Demean every column and the response by the design's person grouping,
/// in place. By Frisch-Waugh-Lovell, OLS on the residualized data yields the
/// same slopes as the joint fixed-effects fit. Returns the per-group means
/// of (columns..., y), one row per group.
pub fn residualize(built: &mut BuiltDesign) -> Vec<Vec<f64>> {
    let p = built.n_cols();
    let groups = built.groups.clone();
    let mut means: Vec<Vec<f64>> = vec![vec![0.0; p + 1]; groups.len()];

    for (g, r) in groups.iter().enumerate() {
        let k = (r.end - r.start) as f64;
        let m = &mut means[g];
        for row in r.clone() {
            for (j, v) in built.x[row * p..(row + 1) * p].iter().enumerate() {
                m[j] += v;
            }
            m[p] += built.y[row];
        }
        for v in m.iter_mut() {
            *v /= k;
        }
    }
    let x_ranges: Vec<std::ops::Range<usize>> =
        groups.iter().map(|g| g.start * p..g.end * p).collect();
    let means_ref = &means;
    design::for_each_range_mut(&mut built.x, &x_ranges, |g, slice| {
        let m = &means_ref[g];
        let rows = slice.len() / p;
        for r in 0..rows {
            for j in 0..p {
                slice[r * p + j] -= m[j];
            }
        }
    });
    for (g, r) in groups.iter().enumerate() {
        let ym = means[g][p];
        for row in r.clone() {
            built.y[row] -= ym;
        }
    }
    means
}

/// Fit the design by OLS.
///
/// With person effects the fit demeans the data in place (the built design is
/// consumed conceptually; its `x`/`y` hold residualized values afterwards).
/// Exact collinearity is an error naming a minimal dependent column set;
/// columns with no variation at all are omitted with coefficient zero.
pub fn fit(built: &mut BuiltDesign, robust: bool) -> Result<FitResult> {
    let p = built.n_cols();
    let n = built.n_rows();
    let absorbed = if built.design.fe == FixedEffects::Person { built.groups.len() } else { 0 };

    let (group_means, tss) = if built.design.fe == FixedEffects::Person {
        let means = residualize(built);
        let tss: f64 = built.y.iter().map(|v| v * v).sum();
        (Some(means), tss)
    } else {
        let has_const = built.design.cols.iter().any(|c| c.label == "const");
        let tss = if has_const {
            let ym = built.y.iter().sum::<f64>() / n as f64;
            built.y.iter().map(|v| (v - ym) * (v - ym)).sum()
        } else {
            built.y.iter().map(|v| v * v).sum()
        };
        (None, tss)
    };

    // Columns with no variation are omitted rather than treated as collinear.
    let mut live: Vec<usize> = Vec::with_capacity(p);
    for j in 0..p {
        let sumsq: f64 = (0..n).map(|r| built.x[r * p + j] * built.x[r * p + j]).sum();
        if sumsq > 1e-18 * n as f64 {
            live.push(j);
        }
    }
    let pl = live.len();
    if n <= pl + absorbed {
        return Err(Error::Underdetermined { n_obs: n, n_params: pl + absorbed });
    }
    let names_live: Vec<String> =
        live.iter().map(|&j| built.design.cols[j].label.clone()).collect();
    let (xw, stride): (&[f64], usize) = if pl == p {
        (&built.x, p)
    } else {
        // Compact the live columns into a scratch matrix.
        let mut xs = vec![0.0; n * pl];
        for r in 0..n {
            for (k, &j) in live.iter().enumerate() {
                xs[r * pl + k] = built.x[r * p + j];
            }
        }
        built.scratch = xs;
        (&built.scratch, pl)
    };

    let out = solve::least_squares(xw, &built.y, stride, &names_live)?;

    let k_dof = pl + absorbed;
    let sigma2 = out.rss / (n - k_dof) as f64;
    let se_live: Vec<f64> = if robust {
        let meat = solve::hc_meat(xw, &out.resid, stride);
        // HC1 small-sample factor n/(n-k).
        let c = n as f64 / (n - k_dof) as f64;
        (0..pl)
            .map(|i| {
                let mut v = 0.0;
                for a in 0..pl {
                    let mut am = 0.0;
                    for b in 0..pl {
                        am += meat[a * pl + b] * out.xtx_inv[b * pl + i];
                    }
                    v += out.xtx_inv[i * pl + a] * am;
                }
                (c * v).max(0.0).sqrt()
            })
            .collect()
    } else {
        (0..pl).map(|i| (sigma2 * out.xtx_inv[i * pl + i]).max(0.0).sqrt()).collect()
    };

    // Spread live results back over the full column list.
    let mut coefficients = vec![0.0; p];
    let mut se = vec![0.0; p];
    let mut omitted = vec![true; p];
    for (k, &j) in live.iter().enumerate() {
        coefficients[j] = out.beta[k];
        se[j] = se_live[k];
        omitted[j] = false;
    }

    // Absorbed person effects from stored group means.
    let fixed_effects = group_means.map(|means| {
        means
            .iter()
            .map(|m| {
                let mut fe = m[p];
                for (k, &j) in live.iter().enumerate() {
                    fe -= m[j] * out.beta[k];
                }
                fe
            })
            .collect::<Vec<f64>>()
    });

    let r2 = if tss > 0.0 { (1.0 - out.rss / tss).clamp(0.0, 1.0) } else { 0.0 };

    #[cfg(debug_assertions)]
    {
        let has_const = built.design.cols.iter().any(|c| c.label == "const");
        if has_const || built.design.fe == FixedEffects::Person {
            let s: f64 = out.resid.iter().sum();
            debug_assert!(s.abs() < 1e-8 * n as f64, "residuals sum {s} too large");
        }
    }

    Ok(FitResult {
        names: built.design.cols.iter().map(|c| c.label.clone()).collect(),
        coefficients,
        omitted,
        se,
        residuals: out.resid,
        fixed_effects,
        r2,
        n_obs: n,
        n_params: pl + absorbed,
        rss: out.rss,
        robust,
    })
}

/// Per-person predictions over requested ages.
pub struct Predictions {
    pub ages: Vec<u16>,
    /// One entry per panel person: `None` when the person was not in the
    /// estimation sample (no fixed effect / missing covariates).
    pub values: Vec<Option<Vec<f64>>>,
    pub n_excluded: usize,
    /// Rows evaluated at a calendar year outside the estimation sample.
    pub n_year_extrapolated: usize,
}

/// Evaluate the fitted surface for every person at each requested age,
/// adding the person's absorbed effect when present.
pub fn predict(
    built: &BuiltDesign,
    fitres: &FitResult,
    panel: &crate::panel::Panel,
    ages: &[u16],
) -> Predictions {
    let p = built.n_cols();
    let design = &built.design;
    // Fixed-effect lookup by person index.
    let mut fe_of: Vec<Option<f64>> = vec![None; panel.n_persons()];
    match &fitres.fixed_effects {
        Some(fes) => {
            for (k, &pi) in built.retained_persons.iter().enumerate() {
                fe_of[pi as usize] = Some(fes[k]);
            }
        }
        None => {
            for &pi in &built.retained_persons {
                fe_of[pi as usize] = Some(0.0);
            }
        }
    }
    let needs_parent = design.uses_parent_income();
    let results: Vec<(Option<Vec<f64>>, usize)> = exec::map_indexed(panel.n_persons(), |i| {
        let person = &panel.persons()[i];
        let fe = match fe_of[i] {
            Some(v) => v,
            None => return (None, 0),
        };
        if needs_parent && person.parent_log_income.is_none() {
            return (None, 0);
        }
        let mut row = vec![0.0; p];
        let mut vals = Vec::with_capacity(ages.len());
        let mut extrap_rows = 0usize;
        for &age in ages {
            let mut extrap = false;
            let year = person.cohort + i32::from(age);
            design.row_into(person, i, age, year, &mut row, &mut extrap);
            if extrap {
                extrap_rows += 1;
            }
            let mut v = fe;
            for j in 0..p {
                v += row[j] * fitres.coefficients[j];
            }
            vals.push(v);
        }
        (Some(vals), extrap_rows)
    });
    let mut values = Vec::with_capacity(panel.n_persons());
    let mut n_excluded = 0;
    let mut n_year_extrapolated = 0;
    for (v, ex) in results {
        if v.is_none() {
            n_excluded += 1;
        }
        n_year_extrapolated += ex;
        values.push(v);
    }
    Predictions { ages: ages.to_vec(), values, n_excluded, n_year_extrapolated }
}
