//! Candidate-predictor construction for the penalized first step, and the
//! end-to-end penalized lifecycle estimator.
//!
//! Candidates are person-level covariates expanded into mains plus two-way
//! interactions with centered age and age squared, alongside the age terms
//! themselves. Person-constant mains carry no information once person
//! effects are residualized out, but they stay in the candidate count, which
//! mirrors how such sets are usually reported.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::estimators::{simple_ols, simple_slope_r2, EstimatorSpec, IgeEstimate, Variant};
use crate::panel::{restrict_window, AgeWindow, GroupTag, Panel};
use crate::regularization::{cd_fit_gram, gram_data, postselection_ols, PenaltyConfig};

/// One candidate variable and its encoding.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateVar {
    /// A continuous person covariate (panel field or extras key).
    Continuous { name: String },
    /// Categorical with declared levels; dummies for all but the first.
    Categorical { name: String, levels: Vec<i64> },
    /// Empirical quantile bins of a continuous covariate; dummies for all
    /// but the first bin.
    QuantileBins { name: String, bins: usize },
}

/// The candidate set: variables expanded against age and age squared.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CandidateTaxonomy {
    pub vars: Vec<CandidateVar>,
}

impl CandidateTaxonomy {
    /// The default wide set: fine and coarse child education, parental
    /// education, parental income (continuous and decile bins), birth
    /// cohort, family size, birth order, immigrant flag and the two skill
    /// scores.
    pub fn default_for(panel: &Panel) -> CandidateTaxonomy {
        let mut cohorts: Vec<i64> =
            panel.persons().iter().map(|p| i64::from(p.cohort)).collect();
        cohorts.sort_unstable();
        cohorts.dedup();
        CandidateTaxonomy {
            vars: vec![
                CandidateVar::Categorical {
                    name: "educ_fine".into(),
                    levels: (0..15).collect(),
                },
                CandidateVar::Categorical { name: "educ_group".into(), levels: (0..4).collect() },
                CandidateVar::Categorical {
                    name: "parent_educ_group".into(),
                    levels: (0..4).collect(),
                },
                CandidateVar::Continuous { name: "parent_log_income".into() },
                CandidateVar::QuantileBins { name: "parent_log_income".into(), bins: 10 },
                CandidateVar::Categorical { name: "cohort".into(), levels: cohorts },
                CandidateVar::Categorical {
                    name: "family_size".into(),
                    levels: (2..=16).collect(),
                },
                CandidateVar::Categorical { name: "birth_order".into(), levels: (1..=9).collect() },
                CandidateVar::Continuous { name: "immigrant".into() },
                CandidateVar::Categorical { name: "cognitive".into(), levels: (1..=9).collect() },
                CandidateVar::Categorical {
                    name: "noncognitive".into(),
                    levels: (1..=9).collect(),
                },
            ],
        }
    }

    /// Names of the parental-income age interactions, the columns exempted
    /// from the penalty in the "not penalized" variant.
    pub fn parental_interaction_names() -> Vec<String> {
        vec!["parent_log_income:agec".into(), "parent_log_income:agec2".into()]
    }
}

/// A built candidate design plus enough structure to predict profiles.
pub struct CandidateDesign {
    pub names: Vec<String>,
    /// Row-major n x p, built then residualized in place.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub person_of_row: Vec<u32>,
    pub groups: Vec<Range<usize>>,
    pub retained_persons: Vec<u32>,
    /// Per-group means of (columns..., y) stored before residualization.
    pub group_means: Vec<Vec<f64>>,
    /// Per-person base covariate values (the K person-level features).
    base: Vec<Vec<f64>>,
    age_center: f64,
}

impl CandidateDesign {
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    /// Evaluate the candidate row for (retained person k, age).
    fn row_into(&self, k: usize, age: u16, out: &mut [f64]) {
        let a = f64::from(age) - self.age_center;
        let b = &self.base[k];
        let kk = b.len();
        out[0] = a;
        out[1] = a * a;
        for (i, &v) in b.iter().enumerate() {
            out[2 + i] = v;
            out[2 + kk + i] = v * a;
            out[2 + 2 * kk + i] = v * a * a;
        }
    }
}

fn person_value(panel: &Panel, i: usize, name: &str) -> Option<f64> {
    let p = &panel.persons()[i];
    match name {
        "parent_log_income" => p.parent_log_income,
        "cohort" => Some(f64::from(p.cohort)),
        "educ_group" => Some(f64::from(p.educ_group)),
        "parent_educ_group" => Some(f64::from(p.parent_educ_group)),
        "sex" => Some(f64::from(p.sex)),
        other => p.extras.get(other).copied(),
    }
}

/// Build the candidate design on the panel: age, age squared, and each base
/// feature interacted with both. Persons missing any required covariate are
/// excluded (mirroring listwise deletion on incomplete scores).
pub fn build_candidates(panel: &Panel, taxonomy: &CandidateTaxonomy) -> Result<CandidateDesign> {
    // Expand the taxonomy into base features with value closures.
    enum Feat {
        Cont(String, f64),
        Dummy { var: String, level: i64 },
        Bin { var: String, lo: f64, hi: f64 },
    }
    let mut feats: Vec<(String, Feat)> = Vec::new();
    for v in &taxonomy.vars {
        match v {
            CandidateVar::Continuous { name } => {
                // Centered, so interactions with age are not collinear with
                // the age mains.
                let vals: Vec<f64> = (0..panel.n_persons())
                    .filter_map(|i| person_value(panel, i, name))
                    .collect();
                if vals.is_empty() {
                    return Err(Error::EmptySample(format!("no values for {name}")));
                }
                let center = vals.iter().sum::<f64>() / vals.len() as f64;
                feats.push((name.clone(), Feat::Cont(name.clone(), center)));
            }
            CandidateVar::Categorical { name, levels } => {
                for lv in levels.iter().skip(1) {
                    feats.push((
                        format!("{name}={lv}"),
                        Feat::Dummy { var: name.clone(), level: *lv },
                    ));
                }
            }
            CandidateVar::QuantileBins { name, bins } => {
                let mut vals: Vec<f64> = (0..panel.n_persons())
                    .filter_map(|i| person_value(panel, i, name))
                    .collect();
                if vals.is_empty() {
                    return Err(Error::EmptySample(format!("no values for {name}")));
                }
                vals.sort_by(|a, b| a.total_cmp(b));
                let q = |p: f64| vals[((vals.len() as f64 * p) as usize).min(vals.len() - 1)];
                for b in 1..*bins {
                    let lo = q(b as f64 / *bins as f64);
                    let hi = if b + 1 < *bins { q((b + 1) as f64 / *bins as f64) } else { f64::INFINITY };
                    feats.push((
                        format!("{name}@q{}/{}", b + 1, bins),
                        Feat::Bin { var: name.clone(), lo, hi },
                    ));
                }
            }
        }
    }
    let kk = feats.len();

    // Required underlying variables.
    let mut needed: Vec<String> = Vec::new();
    for (_, f) in &feats {
        let v = match f {
            Feat::Cont(v, _) => v,
            Feat::Dummy { var, .. } => var,
            Feat::Bin { var, .. } => var,
        };
        if !needed.contains(v) {
            needed.push(v.clone());
        }
    }

    let retained: Vec<u32> = (0..panel.n_persons() as u32)
        .filter(|&i| {
            !panel.obs_for(i as usize).is_empty()
                && needed.iter().all(|v| person_value(panel, i as usize, v).is_some())
        })
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptySample("no person has the full candidate covariates".into()));
    }

    // Base feature values per retained person.
    let base: Vec<Vec<f64>> = retained
        .iter()
        .map(|&i| {
            feats
                .iter()
                .map(|(_, f)| match f {
                    Feat::Cont(v, center) => person_value(panel, i as usize, v).unwrap() - center,
                    Feat::Dummy { var, level } => {
                        let x = person_value(panel, i as usize, var).unwrap();
                        f64::from((x - *level as f64).abs() < 0.5)
                    }
                    Feat::Bin { var, lo, hi } => {
                        let x = person_value(panel, i as usize, var).unwrap();
                        f64::from(x >= *lo && x < *hi)
                    }
                })
                .collect()
        })
        .collect();

    let mut names = vec!["agec".to_string(), "agec2".to_string()];
    names.extend(feats.iter().map(|(n, _)| n.clone()));
    names.extend(feats.iter().map(|(n, _)| format!("{n}:agec")));
    names.extend(feats.iter().map(|(n, _)| format!("{n}:agec2")));
    let p = names.len();
    debug_assert_eq!(p, 3 * kk + 2);

    let age_center = f64::from(panel.meta.age_min + panel.meta.age_max) / 2.0;
    let mut offsets = vec![0usize];
    for &i in &retained {
        offsets.push(offsets.last().unwrap() + panel.obs_for(i as usize).len());
    }
    let n = *offsets.last().unwrap();
    let mut x = vec![0.0; n * p];
    let mut y = vec![0.0; n];
    let mut person_of_row = vec![0u32; n];
    let groups: Vec<Range<usize>> =
        (0..retained.len()).map(|k| offsets[k]..offsets[k + 1]).collect();

    let design = CandidateDesign {
        names,
        x: Vec::new(),
        y: Vec::new(),
        person_of_row: Vec::new(),
        groups: Vec::new(),
        retained_persons: Vec::new(),
        group_means: Vec::new(),
        base,
        age_center,
    };
    for (k, &i) in retained.iter().enumerate() {
        for (j, o) in panel.obs_for(i as usize).iter().enumerate() {
            let r = offsets[k] + j;
            if o.income_level <= 0.0 {
                return Err(Error::NonpositiveIncome {
                    person_id: panel.persons()[i as usize].person_id.clone(),
                    age: o.age,
                });
            }
            y[r] = o.income_level.ln();
            person_of_row[r] = i;
            design.row_into(k, o.age, &mut x[r * p..(r + 1) * p]);
        }
    }

    Ok(CandidateDesign {
        names: design.names,
        x,
        y,
        person_of_row,
        groups,
        retained_persons: retained,
        group_means: Vec::new(),
        base: design.base,
        age_center,
    })
}

/// Residualize the candidate design against person effects, recording the
/// group means needed to recover the effects later.
pub fn residualize_candidates(d: &mut CandidateDesign) {
    let p = d.n_cols();
    let mut means = vec![vec![0.0f64; p + 1]; d.groups.len()];
    for (g, r) in d.groups.iter().enumerate() {
        let k = (r.end - r.start) as f64;
        for row in r.clone() {
            for j in 0..p {
                means[g][j] += d.x[row * p + j];
            }
            means[g][p] += d.y[row];
        }
        for v in means[g].iter_mut() {
            *v /= k;
        }
    }
    for (g, r) in d.groups.iter().enumerate() {
        for row in r.clone() {
            for j in 0..p {
                d.x[row * p + j] -= means[g][j];
            }
            d.y[row] -= means[g][p];
        }
    }
    d.group_means = means;
}

/// Result of the penalized lifecycle estimator.
#[derive(Debug, Clone)]
pub struct MlEstimate {
    pub ige: IgeEstimate,
    pub n_candidates: usize,
    pub n_selected: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub selected: Vec<String>,
}

/// Options for the penalized lifecycle estimator.
#[derive(Debug, Clone)]
pub struct MlOptions {
    pub penalty: PenaltyConfig,
    /// Refit the selected set by unpenalized OLS before predicting.
    pub postselection: bool,
    pub prediction_ages: AgeWindow,
}

/// Penalized two-step estimator: build the candidate design, residualize
/// against person effects, fit the elastic net, predict lifetime incomes
/// from the selected model plus recovered effects, and run the second step.
pub fn ml_lifecycle_estimate(
    panel: &Panel,
    window: AgeWindow,
    taxonomy: &CandidateTaxonomy,
    opts: &MlOptions,
) -> Result<MlEstimate> {
    let tagged = panel.persons().iter().any(|p| p.group_tag.is_some());
    let est = if tagged { panel.clone() } else { restrict_window(panel, window)?.panel };

    let mut d = build_candidates(&est, taxonomy)?;
    residualize_candidates(&mut d);
    let p = d.n_cols();
    let g = gram_data(&d.x, &d.y, p, &d.names, opts.penalty.standardize);
    let fit = cd_fit_gram(&g, &opts.penalty)?;
    let beta = if opts.postselection {
        postselection_ols(&d.x, &d.y, p, &d.names, &fit.selected, &opts.penalty.unpenalized)?
    } else {
        fit.coefficients.clone()
    };

    // Person effects on the original scale: mean(y) - mean(x) beta per group.
    let effects: Vec<f64> = d
        .group_means
        .iter()
        .map(|m| {
            let mut fe = m[p];
            for j in 0..p {
                fe -= m[j] * beta[j];
            }
            fe
        })
        .collect();

    // Predicted lifetime incomes over the prediction ages.
    let ages: Vec<u16> = (opts.prediction_ages.lo..=opts.prediction_ages.hi).collect();
    let mut log_lifetime: Vec<Option<f64>> = vec![None; est.n_persons()];
    let mut row = vec![0.0; p];
    for (k, &pi) in d.retained_persons.iter().enumerate() {
        let mut sum = 0.0;
        for &age in &ages {
            d.row_into(k, age, &mut row);
            let mut v = effects[k];
            for j in 0..p {
                v += row[j] * beta[j];
            }
            sum += v.exp();
        }
        log_lifetime[pi as usize] = Some(sum.ln());
    }

    // Second step over young pseudo-persons (split protocol) or everyone.
    let mut x2 = Vec::new();
    let mut y2 = Vec::new();
    let mut truth_pairs = Vec::new();
    let mut dropped = 0usize;
    for i in 0..est.n_persons() {
        let person = &est.persons()[i];
        if tagged && person.group_tag != Some(GroupTag::Young) {
            continue;
        }
        match (person.parent_log_income, log_lifetime[i]) {
            (Some(px), Some(ly)) => {
                x2.push(px);
                y2.push(ly);
                if let Some(t) = person.true_log_lifetime {
                    truth_pairs.push((ly, t));
                }
            }
            _ => dropped += 1,
        }
    }
    let ols = simple_ols(&x2, &y2)?;
    let r2_first = if truth_pairs.len() == y2.len() && !truth_pairs.is_empty() {
        let (pred, actual): (Vec<f64>, Vec<f64>) = truth_pairs.into_iter().unzip();
        simple_slope_r2(&pred, &actual).map(|(_, r2)| r2)
    } else {
        None
    };
    Ok(MlEstimate {
        ige: IgeEstimate {
            variant: Variant::ParentalQuadFe,
            window,
            slope: ols.slope,
            se: ols.se,
            r2_second_step: ols.r2,
            r2_first_step_lifetime: r2_first,
            n_persons: ols.n,
            n_dropped: dropped,
            spec: Some(EstimatorSpec::new(Variant::ParentalQuadFe)),
        },
        n_candidates: p,
        n_selected: fit.n_selected,
        lambda: fit.lambda,
        alpha: fit.alpha,
        selected: fit.selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::income_process::{presets, simulate_panel};
    use crate::panel::{split_young_old, SplitMode};

    #[test]
    fn default_taxonomy_yields_233_columns() {
        let mut cfg = presets::ml_lab(61);
        cfg.n_persons = 300;
        let panel = simulate_panel(&cfg).unwrap();
        let tax = CandidateTaxonomy::default_for(&panel);
        let d = build_candidates(&panel, &tax).unwrap();
        assert_eq!(d.n_cols(), 233);
    }

    #[test]
    fn count_is_stable_on_the_young_window() {
        let mut cfg = presets::ml_lab(62);
        cfg.n_persons = 300;
        let panel = simulate_panel(&cfg).unwrap();
        let split = split_young_old(&panel, 27, SplitMode::Duplicate, 1).unwrap().panel;
        let tax = CandidateTaxonomy::default_for(&split);
        let d = build_candidates(&split, &tax).unwrap();
        assert_eq!(d.n_cols(), 233);
    }
}
