//! Independent oracles for the regression engine: explicit dummy-variable
//! least squares for the within estimator, joint fits for the
//! Frisch-Waugh-Lovell equivalence, and a brute-force sandwich for the
//! robust covariance. The oracles are solved with nalgebra, a separate code
//! path from the engine's own factorization.

use mobilab::panel::{IncomeObs, Panel, PanelMeta, PersonRecord};
use mobilab::regression::{
    age_poly_terms, build_design, cat_by_age_terms, fit, predict, residualize, CatVar,
    DesignContext, DesignSpec, Factor, FixedEffects, Response, Term,
};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// A panel with person-specific intercepts, education profiles and noise,
/// deterministic in `seed`.
fn synth_panel(n_persons: usize, ages: std::ops::RangeInclusive<u16>, seed: u64) -> Panel {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = mobilab::rng::substream(seed, "oracle-panel", 0);
    let mut persons = Vec::new();
    let mut obs = Vec::new();
    for i in 0..n_persons {
        let alpha: f64 = rng.sample::<f64, _>(StandardNormal) * 0.3;
        let px = 12.0 + rng.sample::<f64, _>(StandardNormal) * 0.5;
        persons.push(PersonRecord {
            person_id: format!("p{i}"),
            family_id: format!("f{i}"),
            cohort: 1950 + (i % 5) as i32,
            sex: 1,
            educ_group: (i % 4) as u8,
            parent_educ_group: ((i / 3) % 4) as u8,
            parent_log_income: Some(px),
            true_log_lifetime: None,
            group_tag: None,
            extras: BTreeMap::new(),
        });
        for age in ages.clone() {
            let h = f64::from(age - *ages.start());
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.2;
            let y = 11.0
                + alpha
                + 0.04 * h
                + 0.01 * h * (i % 4) as f64
                + 0.004 * h * (px - 12.0)
                + noise;
            obs.push(IncomeObs {
                person: i as u32,
                year: 1950 + (i % 5) as i32 + i32::from(age),
                age,
                income_level: y.exp(),
            });
        }
    }
    Panel::new(
        persons,
        obs,
        PanelMeta { age_min: *ages.start(), age_max: 58, educ_groups: 4, transforms: vec![] },
    )
    .unwrap()
}

fn spec_with_person_fe() -> DesignSpec {
    let mut terms = age_poly_terms(2);
    terms.extend(cat_by_age_terms(CatVar::Educ, 2));
    terms.push(Term(vec![Factor::ParentLogIncome, Factor::Age(1)]));
    DesignSpec { response: Response::LogIncome, terms, fe: FixedEffects::Person, robust_se: false }
}

/// nalgebra SVD solve of the explicit dummy-variable system.
fn lsdv_oracle(panel: &Panel, spec: &DesignSpec) -> (Vec<String>, Vec<f64>) {
    // Build the same slope columns (no FE) by evaluating the engine's design
    // on a no-FE version, then append person dummies and solve jointly.
    let mut nofe = spec.clone();
    nofe.fe = FixedEffects::None;
    let built = build_design(panel, &nofe, &DesignContext::default()).unwrap();
    let p = built.n_cols();
    let n = built.n_rows();
    // Drop the intercept column (absorbed by the full dummy set).
    let keep: Vec<usize> =
        (0..p).filter(|&j| built.design.cols[j].label != "const").collect();
    let n_persons = built.groups.len();
    let mut m = DMatrix::zeros(n, keep.len() + n_persons);
    for r in 0..n {
        for (c, &j) in keep.iter().enumerate() {
            m[(r, c)] = built.x[r * p + j];
        }
    }
    for (g, range) in built.groups.iter().enumerate() {
        for r in range.clone() {
            m[(r, keep.len() + g)] = 1.0;
        }
    }
    let y = DVector::from_column_slice(&built.y);
    let svd = m.svd(true, true);
    let beta = svd.solve(&y, 1e-12).unwrap();
    let names = keep.iter().map(|&j| built.design.cols[j].label.clone()).collect();
    (names, beta.iter().take(keep.len()).copied().collect())
}

#[test]
fn within_estimator_equals_lsdv() {
    let panel = synth_panel(50, 25..=29, 7);
    let spec = spec_with_person_fe();
    let mut built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    let res = fit(&mut built, false).unwrap();
    let (oracle_names, oracle_beta) = lsdv_oracle(&panel, &spec);
    for (name, ob) in oracle_names.iter().zip(&oracle_beta) {
        let got = res.coef(name).unwrap();
        assert!(
            (got - ob).abs() < 1e-8,
            "{name}: within {got} vs dummy-variable {ob}"
        );
    }
}

#[test]
fn fwl_residualized_slopes_equal_joint_fit() {
    let panel = synth_panel(20, 25..=29, 8);
    let spec = spec_with_person_fe();
    // Joint (within) fit.
    let mut joint = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    let joint_fit = fit(&mut joint, false).unwrap();
    // Explicit residualization, then a plain fit with no absorption.
    let mut resid = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    residualize(&mut resid);
    resid.design.fe = FixedEffects::None;
    let resid_fit = fit(&mut resid, false).unwrap();
    for (j, name) in joint_fit.names.iter().enumerate() {
        assert!(
            (joint_fit.coefficients[j] - resid_fit.coef(name).unwrap()).abs() < 1e-8,
            "{name}"
        );
    }
    // Residualized columns have zero group means.
    let p = resid.n_cols();
    for (g, range) in resid.groups.iter().enumerate() {
        for j in 0..p {
            let s: f64 = range.clone().map(|r| resid.x[r * p + j]).sum();
            assert!(
                s.abs() / (range.len() as f64) < 1e-10,
                "group {g} col {j} mean {s}"
            );
        }
    }
}

#[test]
fn hc1_matches_brute_force_sandwich() {
    // Plain regression (no absorption), n <= 500: the robust covariance must
    // equal (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-k) computed densely.
    let panel = synth_panel(100, 25..=29, 9);
    let mut terms = age_poly_terms(1);
    terms.push(Term(vec![Factor::Cat(CatVar::Educ)]));
    terms.push(Term(vec![Factor::ParentLogIncome]));
    let spec = DesignSpec {
        response: Response::LogIncome,
        terms,
        fe: FixedEffects::None,
        robust_se: true,
    };
    let mut built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    let x_copy = built.x.clone();
    let y_copy = built.y.clone();
    let res = fit(&mut built, true).unwrap();
    let n = y_copy.len();
    let p = res.names.len();
    assert!(n <= 500);
    let xm = DMatrix::from_row_slice(n, p, &x_copy);
    let y = DVector::from_column_slice(&y_copy);
    let xtx = xm.transpose() * &xm;
    let xtx_inv = xtx.try_inverse().unwrap();
    let beta = &xtx_inv * xm.transpose() * &y;
    let e = &y - &xm * &beta;
    let mut meat = DMatrix::zeros(p, p);
    for r in 0..n {
        let xr = xm.row(r).transpose();
        meat += &xr * xr.transpose() * (e[r] * e[r]);
    }
    let v = &xtx_inv * meat * &xtx_inv * (n as f64 / (n - p) as f64);
    for j in 0..p {
        let oracle = v[(j, j)].sqrt();
        assert!(
            (res.se[j] - oracle).abs() < 1e-8,
            "col {}: {} vs {}",
            res.names[j],
            res.se[j],
            oracle
        );
    }
}

#[test]
fn predict_reproduces_in_sample_and_matches_horner() {
    // Noise-free panel generated exactly from the fitted surface.
    let mut persons = Vec::new();
    let mut obs = Vec::new();
    for i in 0..30usize {
        persons.push(PersonRecord {
            person_id: format!("p{i}"),
            family_id: format!("f{i}"),
            cohort: 1955,
            sex: 1,
            educ_group: 0,
            parent_educ_group: 0,
            parent_log_income: Some(12.0 + 0.1 * (i % 5) as f64),
            true_log_lifetime: None,
            group_tag: None,
            extras: BTreeMap::new(),
        });
        for age in 25..=40u16 {
            let a = f64::from(age) - 41.5; // engine centers at panel mid-age
            let y = 11.0 + 0.02 * (i as f64) + 0.03 * a - 0.002 * a * a + 1e-4 * a * a * a
                - 2e-6 * a * a * a * a;
            obs.push(IncomeObs {
                person: i as u32,
                year: 1955 + i32::from(age),
                age,
                income_level: y.exp(),
            });
        }
    }
    let panel = Panel::new(
        persons,
        obs,
        PanelMeta { age_min: 25, age_max: 58, educ_groups: 4, transforms: vec![] },
    )
    .unwrap();
    let spec = DesignSpec {
        response: Response::LogIncome,
        terms: age_poly_terms(4),
        fe: FixedEffects::Person,
        robust_se: false,
    };
    let mut built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    let res = fit(&mut built, false).unwrap();

    // In-sample ages reproduce the observations.
    let preds = predict(&built, &res, &panel, &[25, 30, 40]);
    for i in 0..panel.n_persons() {
        let vals = preds.values[i].as_ref().unwrap();
        for (k, &age) in [25u16, 30, 40].iter().enumerate() {
            let o = panel.obs_for(i).iter().find(|o| o.age == age).unwrap();
            assert!(
                (vals[k] - o.income_level.ln()).abs() < 1e-10,
                "person {i} age {age}"
            );
        }
    }
    // Extrapolated ages match an independent Horner evaluation.
    let preds = predict(&built, &res, &panel, &[50, 58]);
    let b = |name: &str| res.coef(name).unwrap();
    let coeffs = [b("agec^1"), b("agec^2"), b("agec^3"), b("agec^4")];
    for i in 0..panel.n_persons() {
        let fe = res.fixed_effects.as_ref().unwrap()[i];
        let vals = preds.values[i].as_ref().unwrap();
        for (k, &age) in [50u16, 58].iter().enumerate() {
            let a = f64::from(age) - 41.5;
            let mut horner = 0.0;
            for &c in coeffs.iter().rev() {
                horner = horner * a + c;
            }
            horner = horner * a + fe;
            assert!((vals[k] - horner).abs() < 1e-12, "person {i} age {age}");
        }
    }
}

#[test]
fn response_shift_moves_only_intercept() {
    let panel = synth_panel(40, 25..=30, 11);
    let mut terms = age_poly_terms(2);
    terms.push(Term(vec![Factor::ParentLogIncome]));
    let spec = DesignSpec {
        response: Response::LogIncome,
        terms,
        fe: FixedEffects::None,
        robust_se: false,
    };
    let mut a = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    // Shift the response by a constant.
    let mut b = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    for v in b.y.iter_mut() {
        *v += 3.5;
    }
    let fa = fit(&mut a, false).unwrap();
    let fb = fit(&mut b, false).unwrap();
    for (j, name) in fa.names.iter().enumerate() {
        if name == "const" {
            assert!((fb.coefficients[j] - fa.coefficients[j] - 3.5).abs() < 1e-10);
        } else {
            assert!(
                (fb.coefficients[j] - fa.coefficients[j]).abs() < 1e-10,
                "{name} moved"
            );
        }
    }
}

#[test]
fn regressor_rescaling_scales_coefficient_inversely() {
    let panel = synth_panel(40, 25..=30, 12);
    let mut terms = age_poly_terms(1);
    terms.push(Term(vec![Factor::ParentLogIncome]));
    let spec = DesignSpec {
        response: Response::LogIncome,
        terms,
        fe: FixedEffects::None,
        robust_se: false,
    };
    let mut a = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    let mut b = build_design(&panel, &spec, &DesignContext::default()).unwrap();
    let p = b.n_cols();
    let j_plinc = b.design.cols.iter().position(|c| c.label == "plinc").unwrap();
    let k = 40.0;
    for r in 0..b.n_rows() {
        b.x[r * p + j_plinc] *= k;
    }
    let fa = fit(&mut a, false).unwrap();
    // Fitted values unchanged: compare residuals.
    let fb = fit(&mut b, false).unwrap();
    assert!((fb.coefficients[j_plinc] * k - fa.coefficients[j_plinc]).abs() < 1e-10);
    for (ra, rb) in fa.residuals.iter().zip(&fb.residuals) {
        assert!((ra - rb).abs() < 1e-10);
    }
}

#[test]
fn underdetermined_fit_is_an_error() {
    let panel = synth_panel(2, 25..=26, 13);
    let spec = DesignSpec {
        response: Response::LogIncome,
        terms: age_poly_terms(4),
        fe: FixedEffects::Person,
        robust_se: false,
    };
    // 4 rows, 2 absorbed groups, capped... degree 4 stays: 4 columns + 2
    // groups > 4 rows.
    let built = build_design(&panel, &spec, &DesignContext::default());
    match built {
        Ok(mut b) => assert!(fit(&mut b, false).is_err()),
        Err(_) => {}
    }
}
