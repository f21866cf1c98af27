//! Growth-gradient regressions: how income *growth* varies with parental
//! income over the lifecycle, and how child growth relates to father growth.

use crate::error::{Error, Result};
use crate::panel::{AgeWindow, Panel};
use crate::regression::solve::least_squares;

/// Controls interacted with the age bins in the gradient regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientControl {
    EducByBin,
}

/// One age-bin row of the gradient table.
#[derive(Debug, Clone)]
pub struct GradientRow {
    pub bin: AgeWindow,
    /// Coefficient on (father log lifetime income / 100) for this bin.
    pub coefficient: f64,
    pub se: f64,
    pub n_obs: usize,
    /// Set when the bin had no usable observations and was omitted.
    pub omitted: bool,
}

#[derive(Debug, Clone)]
pub struct GradientTable {
    pub rows: Vec<GradientRow>,
    pub n_obs: usize,
    pub r2: f64,
}

/// Regress the five-year change in log income on (father log income / 100)
/// interacted with age bins, plus requested control-by-bin interactions.
///
/// Growth observations whose endpoint income falls below 20% of the
/// in-sample yearly median are excluded. Bins with no observations are
/// omitted and flagged.
pub fn growth_gradient_table(
    panel: &Panel,
    bins: &[AgeWindow],
    controls: &[GradientControl],
) -> Result<GradientTable> {
    if bins.is_empty() {
        return Err(Error::InvalidInput("no age bins requested".into()));
    }
    // Yearly in-sample medians of level income.
    let mut by_year: std::collections::BTreeMap<i32, Vec<f64>> = std::collections::BTreeMap::new();
    for o in panel.obs() {
        by_year.entry(o.year).or_default().push(o.income_level);
    }
    let year_floor: std::collections::BTreeMap<i32, f64> = by_year
        .into_iter()
        .map(|(y, mut v)| {
            v.sort_by(|a, b| a.total_cmp(b));
            let med = v[v.len() / 2];
            (y, 0.2 * med)
        })
        .collect();

    let educ_groups = usize::from(panel.meta.educ_groups.max(1));
    let use_educ = controls.contains(&GradientControl::EducByBin);

    // Gather growth observations: (bin, person, delta log income).
    struct GrowthObs {
        bin: usize,
        parent_centered: f64,
        educ: usize,
        delta: f64,
    }
    let mut rows: Vec<GrowthObs> = Vec::new();
    let mut bin_counts = vec![0usize; bins.len()];
    let parent_mean = {
        let vals: Vec<f64> = panel.persons().iter().filter_map(|p| p.parent_log_income).collect();
        if vals.is_empty() {
            return Err(Error::EmptySample("no person has parent_log_income".into()));
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    for i in 0..panel.n_persons() {
        let person = &panel.persons()[i];
        let Some(parent) = person.parent_log_income else { continue };
        let obs = panel.obs_for(i);
        for (b, bin) in bins.iter().enumerate() {
            let lo = obs.iter().find(|o| o.age == bin.lo);
            let hi = obs.iter().find(|o| o.age == bin.hi);
            let (Some(lo), Some(hi)) = (lo, hi) else { continue };
            if lo.income_level <= 0.0 || hi.income_level <= 0.0 {
                continue;
            }
            if lo.income_level < year_floor[&lo.year] || hi.income_level < year_floor[&hi.year] {
                continue;
            }
            bin_counts[b] += 1;
            rows.push(GrowthObs {
                bin: b,
                parent_centered: (parent - parent_mean) / 100.0,
                educ: usize::from(person.educ_group),
                delta: hi.income_level.ln() - lo.income_level.ln(),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptySample("no growth observations in the requested bins".into()));
    }

    let live_bins: Vec<usize> = (0..bins.len()).filter(|&b| bin_counts[b] > 0).collect();
    let bin_pos: Vec<Option<usize>> = {
        let mut v = vec![None; bins.len()];
        for (k, &b) in live_bins.iter().enumerate() {
            v[b] = Some(k);
        }
        v
    };
    let nb = live_bins.len();
    // Columns: per live bin a dummy, per live bin the parent slope, and
    // optionally per live bin educ dummies (reference group dropped).
    let educ_cols = if use_educ { educ_groups - 1 } else { 0 };
    let p = nb * (2 + educ_cols);
    let names: Vec<String> = {
        let mut v = Vec::with_capacity(p);
        for &b in &live_bins {
            v.push(format!("bin{}", bins[b]));
        }
        for &b in &live_bins {
            v.push(format!("bin{}:plinc", bins[b]));
        }
        for &b in &live_bins {
            for g in 1..educ_groups {
                if use_educ {
                    v.push(format!("bin{}:educ={g}", bins[b]));
                }
            }
        }
        v
    };
    let n = rows.len();
    let mut x = vec![0.0; n * p];
    let mut y = vec![0.0; n];
    for (r, g) in rows.iter().enumerate() {
        let k = bin_pos[g.bin].unwrap();
        x[r * p + k] = 1.0;
        x[r * p + nb + k] = g.parent_centered;
        if use_educ && g.educ >= 1 {
            x[r * p + 2 * nb + k * educ_cols + (g.educ - 1)] = 1.0;
        }
        y[r] = g.delta;
    }
    let out = least_squares(&x, &y, p, &names)?;

    // Robust (HC1) standard errors on the slope columns.
    let meat = crate::regression::solve::hc_meat(&x, &out.resid, p);
    let c = n as f64 / (n - p) as f64;
    let se_of = |j: usize| -> f64 {
        let mut v = 0.0;
        for a in 0..p {
            let mut am = 0.0;
            for b in 0..p {
                am += meat[a * p + b] * out.xtx_inv[b * p + j];
            }
            v += out.xtx_inv[j * p + a] * am;
        }
        (c * v).max(0.0).sqrt()
    };

    let ym = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
    let r2 = if tss > 0.0 { 1.0 - out.rss / tss } else { 0.0 };

    let table_rows = bins
        .iter()
        .enumerate()
        .map(|(b, bin)| match bin_pos[b] {
            Some(k) => GradientRow {
                bin: *bin,
                coefficient: out.beta[nb + k],
                se: se_of(nb + k),
                n_obs: bin_counts[b],
                omitted: false,
            },
            None => GradientRow { bin: *bin, coefficient: f64::NAN, se: f64::NAN, n_obs: 0, omitted: true },
        })
        .collect();
    Ok(GradientTable { rows: table_rows, n_obs: n, r2 })
}

/// Controls for the growth-on-growth regression.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct GrowthOnGrowthSpec {
    pub control_parent_income: bool,
    pub control_educ: bool,
}

/// One window row: child growth regressed on father growth over the same ages.
#[derive(Debug, Clone)]
pub struct GrowthOnGrowthRow {
    pub window: AgeWindow,
    pub slope_father_growth: f64,
    pub se_father_growth: f64,
    /// Coefficient on (father log lifetime income / 100), when controlled.
    pub coef_parent_income: Option<f64>,
    pub se_parent_income: Option<f64>,
    pub n_obs: usize,
    pub r2: f64,
}

/// Associate child income growth with father income growth over the same age
/// window. Requires a two-generation panel in which each child's `family_id`
/// equals the father's `person_id`.
pub fn growth_on_growth_table(
    panel: &Panel,
    windows: &[AgeWindow],
    spec: GrowthOnGrowthSpec,
) -> Result<Vec<GrowthOnGrowthRow>> {
    if windows.is_empty() {
        return Err(Error::InvalidInput("no windows requested".into()));
    }
    // Father lookup by person_id.
    let mut father_idx: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, p) in panel.persons().iter().enumerate() {
        father_idx.insert(p.person_id.as_str(), i);
    }
    let educ_groups = usize::from(panel.meta.educ_groups.max(1));
    let parent_mean = {
        let vals: Vec<f64> = panel.persons().iter().filter_map(|p| p.parent_log_income).collect();
        if vals.is_empty() {
            return Err(Error::EmptySample("no person has parent_log_income".into()));
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    };

    let mut out = Vec::with_capacity(windows.len());
    for window in windows {
        let mut xs: Vec<(f64, f64, usize, f64)> = Vec::new(); // (father_delta, parent/100, educ, child_delta)
        for i in 0..panel.n_persons() {
            let child = &panel.persons()[i];
            let Some(parent_log) = child.parent_log_income else { continue };
            let Some(&fi) = father_idx.get(child.family_id.as_str()) else { continue };
            if fi == i {
                continue;
            }
            let delta = |idx: usize| -> Option<f64> {
                let obs = panel.obs_for(idx);
                let lo = obs.iter().find(|o| o.age == window.lo)?;
                let hi = obs.iter().find(|o| o.age == window.hi)?;
                if lo.income_level <= 0.0 || hi.income_level <= 0.0 {
                    return None;
                }
                Some(hi.income_level.ln() - lo.income_level.ln())
            };
            let (Some(dc), Some(df)) = (delta(i), delta(fi)) else { continue };
            xs.push((df, (parent_log - parent_mean) / 100.0, usize::from(child.educ_group), dc));
        }
        if xs.len() < 10 {
            return Err(Error::EmptySample(format!(
                "window {window}: only {} father-child growth pairs",
                xs.len()
            )));
        }
        let educ_cols = if spec.control_educ { educ_groups - 1 } else { 0 };
        let p = 2 + usize::from(spec.control_parent_income) + educ_cols;
        let n = xs.len();
        let mut x = vec![0.0; n * p];
        let mut y = vec![0.0; n];
        let mut names = vec!["const".to_string(), "father_growth".to_string()];
        if spec.control_parent_income {
            names.push("plinc/100".into());
        }
        for g in 1..educ_groups {
            if spec.control_educ {
                names.push(format!("educ={g}"));
            }
        }
        for (r, (df, pc, educ, dc)) in xs.iter().enumerate() {
            x[r * p] = 1.0;
            x[r * p + 1] = *df;
            let mut c = 2;
            if spec.control_parent_income {
                x[r * p + c] = *pc;
                c += 1;
            }
            if spec.control_educ && *educ >= 1 {
                x[r * p + c + (educ - 1)] = 1.0;
            }
            y[r] = *dc;
        }
        let fit = least_squares(&x, &y, p, &names)?;
        let meat = crate::regression::solve::hc_meat(&x, &fit.resid, p);
        let c = n as f64 / (n - p) as f64;
        let se_of = |j: usize| -> f64 {
            let mut v = 0.0;
            for a in 0..p {
                let mut am = 0.0;
                for b in 0..p {
                    am += meat[a * p + b] * fit.xtx_inv[b * p + j];
                }
                v += fit.xtx_inv[j * p + a] * am;
            }
            (c * v).max(0.0).sqrt()
        };
        let ym = y.iter().sum::<f64>() / n as f64;
        let tss: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
        out.push(GrowthOnGrowthRow {
            window: *window,
            slope_father_growth: fit.beta[1],
            se_father_growth: se_of(1),
            coef_parent_income: spec.control_parent_income.then(|| fit.beta[2]),
            se_parent_income: spec.control_parent_income.then(|| se_of(2)),
            n_obs: n,
            r2: if tss > 0.0 { 1.0 - fit.rss / tss } else { 0.0 },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::income_process::{presets, simulate_panel};

    #[test]
    fn zero_loadings_no_noise_gradient_is_zero() {
        let mut cfg = presets::default_benchmark(3);
        cfg.n_persons = 400;
        cfg.link.load_intercept = 0.3; // pure level link only
        cfg.link.load_growth_linear = 0.0;
        cfg.link.load_growth_quad = 0.0;
        cfg.link.educ_probs_by_parent = vec![vec![0.25; 4]; 4];
        cfg.link.educ_profiles = vec![[0.0; 4]; 4];
        cfg.hip.sigma2_alpha = 0.0;
        cfg.hip.sigma2_beta = 0.0;
        cfg.hip.sigma_alpha_beta = 0.0;
        cfg.hip.sigma2_eta = 0.0;
        cfg.hip.sigma2_eps = 0.0;
        let panel = simulate_panel(&cfg).unwrap();
        let bins: Vec<AgeWindow> =
            [(25, 30), (30, 35), (35, 40)].iter().map(|&(a, b)| AgeWindow { lo: a, hi: b }).collect();
        let t = growth_gradient_table(&panel, &bins, &[]).unwrap();
        for row in &t.rows {
            assert!(!row.omitted);
            assert!(row.coefficient.abs() < 1e-10, "bin {}: {}", row.bin, row.coefficient);
        }
    }

    #[test]
    fn gradient_sign_pattern_follows_loadings() {
        // Positive linear, negative quadratic loading: first bin exceeds last.
        let mut cfg = presets::default_benchmark(4);
        cfg.n_persons = 4000;
        cfg.link.load_growth_linear = 0.012;
        cfg.link.load_growth_quad = -0.0003;
        let panel = simulate_panel(&cfg).unwrap();
        let bins: Vec<AgeWindow> = [(25, 30), (50, 55)]
            .iter()
            .map(|&(a, b)| AgeWindow { lo: a, hi: b })
            .collect();
        let t = growth_gradient_table(&panel, &bins, &[GradientControl::EducByBin]).unwrap();
        assert!(t.rows[0].coefficient > t.rows[1].coefficient);
    }

    #[test]
    fn growth_on_growth_recovers_generating_loading() {
        // Child growth = 0.1 * father growth + own noise, with father growth
        // heterogeneity the only father-side dispersion.
        let mut cfg = presets::two_generation(8);
        cfg.n_persons = 100_000;
        cfg.link.load_growth_on_growth = 0.10;
        cfg.link.load_intercept = 0.0;
        cfg.link.load_growth_linear = 0.0;
        cfg.link.load_growth_quad = 0.0;
        cfg.link.educ_probs_by_parent = vec![vec![0.25; 4]; 4];
        cfg.link.educ_profiles = vec![[0.0; 4]; 4];
        // Small transitory child noise so the construction is literally
        // child growth = 0.1 * father growth + noise.
        cfg.hip.sigma2_eta = 0.0;
        cfg.hip.sigma2_eps = 0.005;
        // Noise-free fathers with sizable growth dispersion: father growth
        // observed exactly.
        let f = cfg.fathers.as_mut().unwrap();
        f.hip.sigma2_eta = 0.0;
        f.hip.sigma2_eps = 0.0;
        f.hip.sigma2_alpha = 0.02;
        f.hip.sigma2_beta = 0.0008;
        f.hip.sigma_alpha_beta = 0.0;
        let panel = simulate_panel(&cfg).unwrap();
        let rows = growth_on_growth_table(
            &panel,
            &[AgeWindow { lo: 25, hi: 30 }],
            GrowthOnGrowthSpec::default(),
        )
        .unwrap();
        assert!(
            (rows[0].slope_father_growth - 0.10).abs() < 0.01,
            "slope {}",
            rows[0].slope_father_growth
        );
    }

    #[test]
    fn independent_generations_have_zero_slope() {
        let mut cfg = presets::two_generation(9);
        cfg.n_persons = 20_000;
        cfg.link.load_growth_on_growth = 0.0;
        cfg.link.load_intercept = 0.0;
        cfg.link.load_growth_linear = 0.0;
        cfg.link.load_growth_quad = 0.0;
        cfg.link.educ_probs_by_parent = vec![vec![0.25; 4]; 4];
        let panel = simulate_panel(&cfg).unwrap();
        let rows = growth_on_growth_table(
            &panel,
            &[AgeWindow { lo: 30, hi: 35 }],
            GrowthOnGrowthSpec::default(),
        )
        .unwrap();
        assert!(rows[0].slope_father_growth.abs() < 3.0 * rows[0].se_father_growth);
    }
}
