//! Cohort-trend estimators: pooled first step across cohorts with
//! cohort-group interactions on a standardized age profile, per-group second
//! steps.

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_direct_annual, simple_ols, simple_slope_r2, EstimatorSpec, IgeEstimate, Variant,
};
use crate::panel::{AgeWindow, Panel};
use crate::regression::{
    self, age_poly_terms, build_design, cat_by_age_terms, CatVar, DesignContext, DesignSpec,
    Factor, FixedEffects, Response, Term,
};

/// First-step variants for the trends analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendsVariant {
    /// Person effects, year dummies, quartic age by education.
    BaselineFe,
    /// Adds quadratic age x parental income and linear age x parental
    /// education.
    ParentalFe,
    /// Adds cohort-group interactions with the standardized profile, alone
    /// and with parental income.
    ParentalCohortFe,
    /// As ParentalCohortFe without person effects; intercepts are linear in
    /// parental income (by cohort group).
    ParentalCohortNoFe,
}

/// Configuration of a trends run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrendsSpec {
    pub variant: TrendsVariant,
    pub prediction_ages: AgeWindow,
    pub smearing: bool,
}

impl TrendsSpec {
    pub fn new(variant: TrendsVariant) -> Self {
        TrendsSpec { variant, prediction_ages: AgeWindow { lo: 25, hi: 58 }, smearing: true }
    }
}

/// Result of a trends run: one estimate per cohort group plus the fitted
/// cohort-interaction coefficients.
#[derive(Debug)]
pub struct TrendsResult {
    /// Cohort group bounds (inclusive).
    pub groups: Vec<(i32, i32)>,
    pub estimates: Vec<IgeEstimate>,
    /// Coefficients on cohort-group x parental income x standardized-profile
    /// interactions (relative to the first group), when present.
    pub interaction_coefs: Vec<(String, f64)>,
    /// Predicted person-ages whose calendar year lies outside the estimation
    /// sample (extrapolated year effects).
    pub n_year_extrapolated: usize,
}

/// The standardized age profile: cross-person mean of year-effect-removed
/// log income by age, quartic-smoothed, normalized to 0 at the first age and
/// 1 at its maximum.
pub fn standardized_age_profile(panel: &Panel) -> Result<Vec<f64>> {
    // Year-demeaned log incomes (re-centered at the grand mean).
    let mut year_sum: std::collections::BTreeMap<i32, (f64, usize)> = Default::default();
    let mut grand = 0.0;
    for o in panel.obs() {
        if o.income_level <= 0.0 {
            return Err(Error::NonpositiveIncome {
                person_id: panel.persons()[o.person as usize].person_id.clone(),
                age: o.age,
            });
        }
        let l = o.income_level.ln();
        let e = year_sum.entry(o.year).or_insert((0.0, 0));
        e.0 += l;
        e.1 += 1;
        grand += l;
    }
    let n = panel.n_obs() as f64;
    let grand_mean = grand / n;
    let year_mean: std::collections::BTreeMap<i32, f64> =
        year_sum.into_iter().map(|(y, (s, c))| (y, s / c as f64)).collect();

    // Mean by age.
    let (age_min, age_max) = (panel.meta.age_min, panel.meta.age_max);
    let t = usize::from(age_max - age_min) + 1;
    let mut sums = vec![0.0; t];
    let mut counts = vec![0usize; t];
    for o in panel.obs() {
        let k = usize::from(o.age - age_min);
        sums[k] += o.income_level.ln() - year_mean[&o.year] + grand_mean;
        counts[k] += 1;
    }
    let present: Vec<usize> = (0..t).filter(|&k| counts[k] > 0).collect();
    if present.len() < 3 {
        return Err(Error::EmptySample("need at least 3 observed ages for the profile".into()));
    }

    // Quartic smoothing (degree capped by the number of observed ages).
    let degree = 4.min(present.len() - 1);
    let center = f64::from(age_min + age_max) / 2.0;
    let p = degree + 1;
    let mut x = Vec::with_capacity(present.len() * p);
    let mut y = Vec::with_capacity(present.len());
    for &k in &present {
        let a = f64::from(age_min) + k as f64 - center;
        for d in 0..p {
            x.push(a.powi(d as i32));
        }
        y.push(sums[k] / counts[k] as f64);
    }
    let names: Vec<String> = (0..p).map(|d| format!("age^{d}")).collect();
    let fit = crate::regression::solve::least_squares(&x, &y, p, &names)?;
    let eval = |age: u16| -> f64 {
        let a = f64::from(age) - center;
        (0..p).map(|d| fit.beta[d] * a.powi(d as i32)).sum()
    };
    let raw: Vec<f64> = (age_min..=age_max).map(eval).collect();
    let base = raw[0];
    let peak = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak - base <= 1e-12 {
        return Err(Error::InvalidInput(
            "standardized profile is flat or decreasing from the first age".into(),
        ));
    }
    Ok(raw.into_iter().map(|v| (v - base) / (peak - base)).collect())
}

fn cohort_group_bounds(panel: &Panel, breaks: &[i32]) -> Vec<(i32, i32)> {
    let max_cohort = panel.persons().iter().map(|p| p.cohort).max().unwrap_or(0);
    (0..breaks.len())
        .map(|g| {
            let lo = breaks[g];
            let hi = if g + 1 < breaks.len() { breaks[g + 1] - 1 } else { max_cohort };
            (lo, hi)
        })
        .collect()
}

/// Sub-panel of persons born in [lo, hi].
pub fn filter_by_cohort(panel: &Panel, lo: i32, hi: i32) -> Result<Panel> {
    let keep: Vec<usize> = (0..panel.n_persons())
        .filter(|&i| {
            let c = panel.persons()[i].cohort;
            c >= lo && c <= hi
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySample(format!("no persons born {lo}-{hi}")));
    }
    let mut persons = Vec::with_capacity(keep.len());
    let mut obs = Vec::new();
    for (new_idx, &i) in keep.iter().enumerate() {
        persons.push(panel.persons()[i].clone());
        for o in panel.obs_for(i) {
            obs.push(crate::panel::IncomeObs { person: new_idx as u32, ..*o });
        }
    }
    let mut meta = panel.meta.clone();
    meta.transforms.push(format!("filter_by_cohort({lo}-{hi})"));
    Panel::new(persons, obs, meta)
}

/// Pooled first step with cohort-group interactions, lifetime prediction,
/// and one second-step regression per cohort group.
///
/// Cohort groups with no late-age observations are predicted by
/// extrapolation; the count of extrapolated person-years is reported.
pub fn estimate_trends(
    panel: &Panel,
    cohort_breaks: &[i32],
    spec: &TrendsSpec,
) -> Result<TrendsResult> {
    if cohort_breaks.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 cohort groups".into()));
    }
    let groups = cohort_group_bounds(panel, cohort_breaks);

    let cohort_vars = matches!(
        spec.variant,
        TrendsVariant::ParentalCohortFe | TrendsVariant::ParentalCohortNoFe
    );
    let parental = !matches!(spec.variant, TrendsVariant::BaselineFe);
    let fe = match spec.variant {
        TrendsVariant::ParentalCohortNoFe => FixedEffects::ParentIncomeIntercept,
        _ => FixedEffects::Person,
    };

    let std_profile = standardized_age_profile(panel)?;
    let mut terms: Vec<Term> = Vec::new();
    terms.push(Term(vec![Factor::Cat(CatVar::Year)]));
    terms.push(Term(vec![Factor::Cat(CatVar::Educ)]));
    terms.push(Term(vec![Factor::Cat(CatVar::CohortGroup)]));
    terms.extend(age_poly_terms(4));
    terms.extend(cat_by_age_terms(CatVar::Educ, 4));
    if parental {
        terms.push(Term(vec![Factor::Cat(CatVar::ParentEduc)]));
        terms.push(Term(vec![Factor::ParentLogIncome, Factor::Age(1)]));
        terms.push(Term(vec![Factor::ParentLogIncome, Factor::Age(2)]));
        terms.push(Term(vec![Factor::Cat(CatVar::ParentEduc), Factor::Age(1)]));
    }
    if cohort_vars {
        terms.push(Term(vec![Factor::Cat(CatVar::CohortGroup), Factor::StdProfile]));
        terms.push(Term(vec![
            Factor::Cat(CatVar::CohortGroup),
            Factor::ParentLogIncome,
            Factor::StdProfile,
        ]));
        if spec.variant == TrendsVariant::ParentalCohortNoFe {
            terms.push(Term(vec![Factor::Cat(CatVar::CohortGroup), Factor::ParentLogIncome]));
        }
    }

    let ctx = DesignContext {
        cohort_breaks: cohort_breaks.to_vec(),
        std_profile: Some(std_profile),
        est_intercepts: None,
    };
    let dspec = DesignSpec { response: Response::LogIncome, terms, fe, robust_se: false };
    let mut built = build_design(panel, &dspec, &ctx)?;
    let fit = regression::fit(&mut built, false)?;
    built.x = Vec::new();
    built.scratch = Vec::new();

    let interaction_coefs: Vec<(String, f64)> = fit
        .names
        .iter()
        .zip(&fit.coefficients)
        .filter(|(n, _)| n.starts_with("cg=") && n.contains("plinc") && n.contains("sprof"))
        .map(|(n, c)| (n.clone(), *c))
        .collect();

    let profile = crate::estimators::ProfileFit {
        built,
        fit,
        window: AgeWindow { lo: panel.meta.age_min, hi: panel.meta.age_max },
        spec: EstimatorSpec::new(match spec.variant {
            TrendsVariant::ParentalCohortNoFe => Variant::ParentalQuadNoFe,
            TrendsVariant::BaselineFe => Variant::BaselineFe,
            _ => Variant::ParentalQuadFe,
        }),
    };
    let lifetimes = crate::estimators::predict_lifetime(
        &profile,
        panel,
        spec.prediction_ages,
        spec.smearing,
        None,
    )?;
    let n_year_extrapolated = {
        // Recompute the extrapolation count from the prediction pass.
        let ages: Vec<u16> = (spec.prediction_ages.lo..=spec.prediction_ages.hi).collect();
        let preds = regression::predict(&profile.built, &profile.fit, panel, &ages);
        preds.n_year_extrapolated
    };

    let mut estimates = Vec::with_capacity(groups.len());
    for &(lo, hi) in &groups {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut truth_pairs = Vec::new();
        let mut dropped = 0usize;
        for i in 0..panel.n_persons() {
            let p = &panel.persons()[i];
            if p.cohort < lo || p.cohort > hi {
                continue;
            }
            match (p.parent_log_income, lifetimes.log_lifetime[i]) {
                (Some(px), Some(ly)) => {
                    x.push(px);
                    y.push(ly);
                    if let Some(t) = p.true_log_lifetime {
                        truth_pairs.push((ly, t));
                    }
                }
                _ => dropped += 1,
            }
        }
        let ols = simple_ols(&x, &y)?;
        let r2_first = if truth_pairs.len() == y.len() && !truth_pairs.is_empty() {
            let (pred, actual): (Vec<f64>, Vec<f64>) = truth_pairs.into_iter().unzip();
            simple_slope_r2(&pred, &actual).map(|(_, r2)| r2)
        } else {
            None
        };
        estimates.push(IgeEstimate {
            variant: match spec.variant {
                TrendsVariant::ParentalCohortNoFe => Variant::ParentalQuadNoFe,
                TrendsVariant::BaselineFe => Variant::BaselineFe,
                _ => Variant::ParentalQuadFe,
            },
            window: AgeWindow { lo: panel.meta.age_min, hi: panel.meta.age_max },
            slope: ols.slope,
            se: ols.se,
            r2_second_step: ols.r2,
            r2_first_step_lifetime: r2_first,
            n_persons: ols.n,
            n_dropped: dropped,
            spec: None,
        });
    }
    Ok(TrendsResult { groups, estimates, interaction_coefs, n_year_extrapolated })
}

/// Fixed-window direct estimates per cohort group (the naive comparison).
pub fn direct_by_cohort(
    panel: &Panel,
    cohort_breaks: &[i32],
    window: AgeWindow,
) -> Result<Vec<IgeEstimate>> {
    let groups = cohort_group_bounds(panel, cohort_breaks);
    groups
        .iter()
        .map(|&(lo, hi)| {
            let sub = filter_by_cohort(panel, lo, hi)?;
            estimate_direct_annual(&sub, window)
        })
        .collect()
}
