//! Intergenerational-elasticity estimators: direct, benchmark, the two-step
//! lifecycle family, errors-in-variables diagnostics, rank-preserving profile
//! reconstruction and cohort-trend variants.
//!
//! The two-step estimators fit an income-profile model on the observed
//! person-years (the first step), predict each person's complete profile,
//! sum the predicted levels into lifetime income, and regress the predicted
//! log lifetime income on parental log income (the second step).
//!
//! On a panel produced by `split_young_old` the first step uses every
//! pseudo-person's observed side, so the full age range is covered, and the
//! second step runs over the "young" pseudo-persons whose incomes were only
//! observed up to the split age. On an untagged panel the estimation sample
//! is restricted to the requested window for everyone.

pub mod creedy;
pub mod geiv;
pub mod trends;

use rand::Rng;

use crate::error::{Error, Result};
use crate::panel::{restrict_window, AgeWindow, GroupTag, IncomeObs, Panel};
use crate::regression::{
    self, age_poly_terms, build_design, cat_by_age_terms, BuiltDesign, CatVar, DesignContext,
    DesignSpec, Factor, FitResult, FixedEffects, Response, Term,
};
use crate::rng::substream;

/// Estimator variants, named by what the first step conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Child log lifetime income on parent log income (requires truth or
    /// complete profiles).
    Benchmark,
    /// Pooled person-year log incomes on parent log income.
    DirectAnnual,
    /// Person effects plus quartic age by education.
    BaselineFe,
    /// Adds linear age interactions with parental income and education.
    ParentalLinearFe,
    /// Adds a quadratic age interaction with parental income.
    ParentalQuadFe,
    /// As ParentalQuadFe but intercepts are linear in parental income
    /// instead of person-specific.
    ParentalQuadNoFe,
    /// Income growth interacted with the person's own estimated intercept.
    SlopeLevelQuad,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Benchmark => "benchmark",
            Variant::DirectAnnual => "direct_annual",
            Variant::BaselineFe => "baseline_fe",
            Variant::ParentalLinearFe => "parental_linear_fe",
            Variant::ParentalQuadFe => "parental_quad_fe",
            Variant::ParentalQuadNoFe => "parental_quad_no_fe",
            Variant::SlopeLevelQuad => "slope_level_quad",
        }
    }
}

/// Configuration of one lifecycle estimator run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EstimatorSpec {
    pub variant: Variant,
    /// Fit the first step in logs (with retransformation) or levels.
    pub first_step_mode: Response,
    /// Degree of the age interaction with parental income (1 or 2).
    pub parental_income_degree: u8,
    /// Degree of the age interaction with parental education.
    pub parental_educ_degree: u8,
    pub smearing: bool,
    pub prediction_ages: AgeWindow,
    /// Levels mode: floor for predicted annual incomes.
    pub bottom_code_predictions: Option<f64>,
    /// Refit passes of the slope-level recursion (1 = single pass).
    pub slope_level_iterations: usize,
}

impl EstimatorSpec {
    pub fn new(variant: Variant) -> Self {
        let parental_income_degree = match variant {
            Variant::ParentalLinearFe => 1,
            _ => 2,
        };
        EstimatorSpec {
            variant,
            first_step_mode: Response::LogIncome,
            parental_income_degree,
            parental_educ_degree: 1,
            smearing: true,
            prediction_ages: AgeWindow { lo: 25, hi: 58 },
            bottom_code_predictions: None,
            slope_level_iterations: 1,
        }
    }

    pub fn with_prediction_ages(mut self, ages: AgeWindow) -> Self {
        self.prediction_ages = ages;
        self
    }

    pub fn with_smearing(mut self, on: bool) -> Self {
        self.smearing = on;
        self
    }

    pub fn with_mode(mut self, mode: Response) -> Self {
        self.first_step_mode = mode;
        if mode == Response::LevelIncome {
            self.smearing = false;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_step_mode == Response::LevelIncome && self.smearing {
            return Err(Error::InvalidInput("levels mode cannot use smearing".into()));
        }
        if self.parental_income_degree == 0 || self.parental_income_degree > 2 {
            return Err(Error::InvalidInput("parental_income_degree must be 1 or 2".into()));
        }
        if self.slope_level_iterations == 0 {
            return Err(Error::InvalidInput("slope_level_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// A second-step result.
#[derive(Debug, Clone)]
pub struct IgeEstimate {
    pub variant: Variant,
    pub window: AgeWindow,
    /// The estimated elasticity.
    pub slope: f64,
    /// Robust (HC1) standard error, ignoring first-step sampling error.
    pub se: f64,
    pub r2_second_step: f64,
    /// R-squared of actual on predicted lifetime income, when the panel
    /// carries true lifetime incomes.
    pub r2_first_step_lifetime: Option<f64>,
    pub n_persons: usize,
    /// Persons excluded from the second step (missing covariates, dropped
    /// nonpositive predictions, not in the estimation sample).
    pub n_dropped: usize,
    pub spec: Option<EstimatorSpec>,
}

/// A fitted first-step model: the design recipe, coefficients, absorbed
/// person effects and residuals.
pub struct ProfileFit {
    pub built: BuiltDesign,
    pub fit: FitResult,
    pub window: AgeWindow,
    pub spec: EstimatorSpec,
}

// ---------------------------------------------------------------------------
// Second-step OLS (simple regression with robust SE)
// ---------------------------------------------------------------------------

pub(crate) struct SimpleOls {
    pub slope: f64,
    pub se: f64,
    pub r2: f64,
    pub n: usize,
}

/// OLS of y on (1, x) with HC1 standard errors.
pub(crate) fn simple_ols(x: &[f64], y: &[f64]) -> Result<SimpleOls> {
    let n = x.len();
    if n < 3 {
        return Err(Error::EmptySample(format!("second step has {n} rows")));
    }
    let mut design = vec![0.0; n * 2];
    for (r, &v) in x.iter().enumerate() {
        design[r * 2] = 1.0;
        design[r * 2 + 1] = v;
    }
    let names = vec!["const".to_string(), "x".to_string()];
    let out = crate::regression::solve::least_squares(&design, y, 2, &names)?;
    let meat = crate::regression::solve::hc_meat(&design, &out.resid, 2);
    let c = n as f64 / (n - 2) as f64;
    let mut v = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            v += out.xtx_inv[2 + a] * meat[a * 2 + b] * out.xtx_inv[b * 2 + 1];
        }
    }
    let ym = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|u| (u - ym) * (u - ym)).sum();
    Ok(SimpleOls {
        slope: out.beta[1],
        se: (c * v).max(0.0).sqrt(),
        r2: if tss > 0.0 { 1.0 - out.rss / tss } else { 0.0 },
        n,
    })
}

/// Plain slope and R2 of y on x, used for auxiliary regressions.
pub(crate) fn simple_slope_r2(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let nx = n as f64;
    let mx = x.iter().sum::<f64>() / nx;
    let my = y.iter().sum::<f64>() / nx;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / sxx, sxy * sxy / (sxx * syy)))
}

// ---------------------------------------------------------------------------
// Direct estimators
// ---------------------------------------------------------------------------

/// Lifetime income of a person: the stored truth when present, otherwise the
/// log sum of the person's observed level incomes.
fn lifetime_of(panel: &Panel, i: usize) -> Option<f64> {
    if let Some(t) = panel.persons()[i].true_log_lifetime {
        return Some(t);
    }
    let obs = panel.obs_for(i);
    if obs.is_empty() || obs.iter().any(|o| o.income_level <= 0.0) {
        return None;
    }
    Some(obs.iter().map(|o| o.income_level).sum::<f64>().ln())
}

/// OLS of child log lifetime income on parent log income.
pub fn estimate_benchmark(panel: &Panel) -> Result<IgeEstimate> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0usize;
    for i in 0..panel.n_persons() {
        let p = &panel.persons()[i];
        match (p.parent_log_income, lifetime_of(panel, i)) {
            (Some(px), Some(ly)) => {
                x.push(px);
                y.push(ly);
            }
            _ => dropped += 1,
        }
    }
    if y.is_empty() {
        return Err(Error::EmptySample(
            "benchmark needs parent income and lifetime income (truth or full profiles)".into(),
        ));
    }
    let ols = simple_ols(&x, &y)?;
    Ok(IgeEstimate {
        variant: Variant::Benchmark,
        window: AgeWindow { lo: panel.meta.age_min, hi: panel.meta.age_max },
        slope: ols.slope,
        se: ols.se,
        r2_second_step: ols.r2,
        r2_first_step_lifetime: None,
        n_persons: ols.n,
        n_dropped: dropped,
        spec: None,
    })
}

/// OLS pooling person-year log incomes in the window on parent log income.
pub fn estimate_direct_annual(panel: &Panel, window: AgeWindow) -> Result<IgeEstimate> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut persons = 0usize;
    let mut dropped = 0usize;
    for i in 0..panel.n_persons() {
        let p = &panel.persons()[i];
        let Some(px) = p.parent_log_income else {
            dropped += 1;
            continue;
        };
        let mut any = false;
        for o in panel.obs_for(i) {
            if window.contains(o.age) {
                if o.income_level <= 0.0 {
                    return Err(Error::NonpositiveIncome {
                        person_id: p.person_id.clone(),
                        age: o.age,
                    });
                }
                x.push(px);
                y.push(o.income_level.ln());
                any = true;
            }
        }
        if any {
            persons += 1;
        } else {
            dropped += 1;
        }
    }
    if y.is_empty() {
        return Err(Error::EmptySample(format!("no observations in window {window}")));
    }
    let ols = simple_ols(&x, &y)?;
    Ok(IgeEstimate {
        variant: Variant::DirectAnnual,
        window,
        slope: ols.slope,
        se: ols.se,
        r2_second_step: ols.r2,
        r2_first_step_lifetime: None,
        n_persons: persons,
        n_dropped: dropped,
        spec: None,
    })
}

// ---------------------------------------------------------------------------
// First-step fits
// ---------------------------------------------------------------------------

/// Number of distinct observation ages in the panel.
fn distinct_ages(panel: &Panel) -> usize {
    let mut ages: Vec<u16> = panel.obs().iter().map(|o| o.age).collect();
    ages.sort_unstable();
    ages.dedup();
    ages.len()
}

/// The estimation sample for a first-step fit: a tagged (already split)
/// panel is used as given; an untagged panel is restricted to the window.
fn estimation_panel(panel: &Panel, window: AgeWindow) -> Result<Panel> {
    if panel.persons().iter().any(|p| p.group_tag.is_some()) {
        Ok(panel.clone())
    } else {
        Ok(restrict_window(panel, window)?.panel)
    }
}

/// The first-step design terms for a variant. Age-polynomial degrees are
/// capped at (distinct ages - 1) so short windows stay identified.
fn first_step_terms(spec: &EstimatorSpec, n_ages: usize) -> Vec<Term> {
    let cap = (n_ages.saturating_sub(1)).max(1) as u8;
    let g_deg = 4u8.min(cap);
    let pinc_deg = spec.parental_income_degree.min(cap);
    let peduc_deg = spec.parental_educ_degree.min(cap);
    let mut terms = Vec::new();
    // Mains matter for the no-FE case; they are dropped automatically under
    // person effects.
    terms.push(Term(vec![Factor::Cat(CatVar::Educ)]));
    terms.extend(age_poly_terms(g_deg));
    terms.extend(cat_by_age_terms(CatVar::Educ, g_deg));
    let parental = matches!(
        spec.variant,
        Variant::ParentalLinearFe | Variant::ParentalQuadFe | Variant::ParentalQuadNoFe
    );
    if parental {
        terms.push(Term(vec![Factor::Cat(CatVar::ParentEduc)]));
        for k in 1..=pinc_deg {
            terms.push(Term(vec![Factor::ParentLogIncome, Factor::Age(k)]));
        }
        for k in 1..=peduc_deg {
            terms.push(Term(vec![Factor::Cat(CatVar::ParentEduc), Factor::Age(k)]));
        }
    }
    terms
}

/// Fit the variant's first-step model on the estimation sample.
pub fn first_step_fit(panel: &Panel, spec: &EstimatorSpec, window: AgeWindow) -> Result<ProfileFit> {
    spec.validate()?;
    let est = estimation_panel(panel, window)?;
    let n_ages = distinct_ages(&est);
    let fe = match spec.variant {
        Variant::ParentalQuadNoFe => FixedEffects::ParentIncomeIntercept,
        _ => FixedEffects::Person,
    };
    let dspec = DesignSpec {
        response: spec.first_step_mode,
        terms: first_step_terms(spec, n_ages),
        fe,
        robust_se: false,
    };
    let mut built = build_design(&est, &dspec, &DesignContext::default())?;
    let fit = regression::fit(&mut built, false)?;
    built.x = Vec::new();
    built.scratch = Vec::new();
    Ok(ProfileFit { built, fit, window, spec: spec.clone() })
}

/// Recursive slope-level fit: approximate the person effects without the
/// own-effect interaction, then re-estimate with the estimated effect
/// interacted with a quadratic in age. One refit pass by default; more
/// passes iterate the recursion towards its fixed point.
pub fn slope_level_fit(panel: &Panel, spec: &EstimatorSpec, window: AgeWindow) -> Result<ProfileFit> {
    spec.validate()?;
    let est = estimation_panel(panel, window)?;
    let n_ages = distinct_ages(&est);
    let cap = (n_ages.saturating_sub(1)).max(1) as u8;
    let g_deg = 4u8.min(cap);
    let mu_deg = 2u8.min(cap);

    // Pass 1: person effects and common profiles only.
    let base_terms = {
        let mut t = vec![Term(vec![Factor::Cat(CatVar::Educ)])];
        t.extend(age_poly_terms(g_deg));
        t.extend(cat_by_age_terms(CatVar::Educ, g_deg));
        t
    };
    let dspec0 = DesignSpec {
        response: spec.first_step_mode,
        terms: base_terms.clone(),
        fe: FixedEffects::Person,
        robust_se: false,
    };
    let mut built0 = build_design(&est, &dspec0, &DesignContext::default())?;
    let fit0 = regression::fit(&mut built0, false)?;
    let mut mu = vec![f64::NAN; est.n_persons()];
    for (k, &pi) in built0.retained_persons.iter().enumerate() {
        mu[pi as usize] = fit0.fixed_effects.as_ref().unwrap()[k];
    }
    drop(built0);

    // Refit passes: include muhat x age and muhat x age^2.
    let mut terms = base_terms;
    for k in 1..=mu_deg {
        terms.push(Term(vec![Factor::EstIntercept, Factor::Age(k)]));
    }
    let mut last: Option<(BuiltDesign, FitResult)> = None;
    for _pass in 0..spec.slope_level_iterations {
        let ctx = DesignContext { est_intercepts: Some(mu.clone()), ..Default::default() };
        let dspec = DesignSpec {
            response: spec.first_step_mode,
            terms: terms.clone(),
            fe: FixedEffects::Person,
            robust_se: false,
        };
        let mut built = build_design(&est, &dspec, &ctx)?;
        let fit = regression::fit(&mut built, false)?;
        for (k, &pi) in built.retained_persons.iter().enumerate() {
            mu[pi as usize] = fit.fixed_effects.as_ref().unwrap()[k];
        }
        built.x = Vec::new();
        built.scratch = Vec::new();
        last = Some((built, fit));
    }
    let (mut built, fit) = last.expect("at least one pass");
    // Predictions evaluate the muhat interactions at the final effects.
    built.design.est_intercepts = Some(mu);
    Ok(ProfileFit { built, fit, window, spec: spec.clone() })
}

// ---------------------------------------------------------------------------
// Lifetime prediction
// ---------------------------------------------------------------------------

/// Predicted log lifetime incomes per person.
pub struct LifetimePredictions {
    /// Indexed by person; `None` when the person was not predictable.
    pub log_lifetime: Vec<Option<f64>>,
    /// Persons dropped for a nonpositive predicted lifetime sum (levels mode
    /// without bottom-coding).
    pub n_dropped_nonpositive: usize,
    /// Persons outside the estimation sample.
    pub n_excluded: usize,
    /// Per-person sums of exponentiated residuals over the prediction ages,
    /// when smearing was applied.
    pub smearing_sums: Option<Vec<f64>>,
}

/// Predict each person's log lifetime income from a fitted first step.
///
/// Logs mode: predicted log incomes are exponentiated, summed over the
/// prediction ages and logged; with smearing the sum is scaled by the
/// person's mean exponentiated residual from an auxiliary quartic-age by
/// education fit with person effects. Levels mode: predictions are summed
/// directly after optional bottom-coding; a nonpositive lifetime sum drops
/// the person.
pub fn predict_lifetime(
    profile: &ProfileFit,
    panel: &Panel,
    prediction_ages: AgeWindow,
    smearing: bool,
    bottom_code_predictions: Option<f64>,
) -> Result<LifetimePredictions> {
    let ages: Vec<u16> = (prediction_ages.lo..=prediction_ages.hi).collect();
    let preds = regression::predict(&profile.built, &profile.fit, panel, &ages);
    let t_pred = ages.len() as f64;

    let levels_mode = profile.built.design.response == Response::LevelIncome;
    if levels_mode && smearing {
        return Err(Error::InvalidInput("levels mode cannot use smearing".into()));
    }

    // Smearing factors from the auxiliary fit (quartic age x education with
    // person effects, independent of the main specification).
    let smear = if smearing {
        let aux_spec = DesignSpec {
            response: Response::LogIncome,
            terms: {
                let n_ages = distinct_ages(panel);
                let cap = (n_ages.saturating_sub(1)).max(1) as u8;
                let d = 4u8.min(cap);
                let mut t = age_poly_terms(d);
                t.extend(cat_by_age_terms(CatVar::Educ, d));
                t
            },
            fe: FixedEffects::Person,
            robust_se: false,
        };
        let mut aux = build_design(panel, &aux_spec, &DesignContext::default())?;
        let aux_fit = regression::fit(&mut aux, false)?;
        // Sum exp(residual) over observed prediction ages; unobserved ages
        // contribute exp(0).
        let mut sums = vec![0.0f64; panel.n_persons()];
        let mut counts = vec![0usize; panel.n_persons()];
        for (r, &oi) in aux.rows.iter().enumerate() {
            let o = &panel.obs()[oi as usize];
            if prediction_ages.contains(o.age) {
                sums[aux.person_of_row[r] as usize] += aux_fit.residuals[r].exp();
                counts[aux.person_of_row[r] as usize] += 1;
            }
        }
        for i in 0..panel.n_persons() {
            sums[i] += (ages.len() - counts[i]) as f64;
        }
        Some(sums)
    } else {
        None
    };

    let mut log_lifetime = vec![None; panel.n_persons()];
    let mut n_dropped_nonpositive = 0usize;
    for i in 0..panel.n_persons() {
        let Some(vals) = &preds.values[i] else { continue };
        let sum = if levels_mode {
            let mut s = 0.0;
            for &v in vals {
                s += match bottom_code_predictions {
                    Some(floor) if v < floor => floor,
                    _ => v,
                };
            }
            s
        } else {
            vals.iter().map(|v| v.exp()).sum::<f64>()
        };
        let sum = match &smear {
            Some(sm) => sum * (sm[i] / t_pred),
            None => sum,
        };
        if sum <= 0.0 {
            n_dropped_nonpositive += 1;
            continue;
        }
        log_lifetime[i] = Some(sum.ln());
    }
    Ok(LifetimePredictions {
        log_lifetime,
        n_dropped_nonpositive,
        n_excluded: preds.n_excluded,
        smearing_sums: smear,
    })
}

// ---------------------------------------------------------------------------
// Lifecycle estimator (first step + prediction + second step)
// ---------------------------------------------------------------------------

/// Persons entering the second step: the young pseudo-persons on a split
/// panel, everyone otherwise.
fn second_step_mask(panel: &Panel) -> Vec<bool> {
    let tagged = panel.persons().iter().any(|p| p.group_tag.is_some());
    panel
        .persons()
        .iter()
        .map(|p| !tagged || p.group_tag == Some(GroupTag::Young))
        .collect()
}

/// Run the full two-step lifecycle estimator.
pub fn estimate_lifecycle(
    panel: &Panel,
    spec: &EstimatorSpec,
    window: AgeWindow,
) -> Result<IgeEstimate> {
    spec.validate()?;
    let est = estimation_panel(panel, window)?;
    let profile = match spec.variant {
        Variant::SlopeLevelQuad => slope_level_fit(&est, spec, window)?,
        Variant::BaselineFe
        | Variant::ParentalLinearFe
        | Variant::ParentalQuadFe
        | Variant::ParentalQuadNoFe => first_step_fit(&est, spec, window)?,
        other => {
            return Err(Error::InvalidInput(format!(
                "estimate_lifecycle does not handle variant {other:?}"
            )))
        }
    };
    let lifetimes = predict_lifetime(
        &profile,
        &est,
        spec.prediction_ages,
        spec.smearing,
        spec.bottom_code_predictions,
    )?;

    let mask = second_step_mask(&est);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut truth_pairs: Vec<(f64, f64)> = Vec::new(); // (predicted, actual)
    let mut dropped = 0usize;
    for i in 0..est.n_persons() {
        if !mask[i] {
            continue;
        }
        let p = &est.persons()[i];
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
    Ok(IgeEstimate {
        variant: spec.variant,
        window,
        slope: ols.slope,
        se: ols.se,
        r2_second_step: ols.r2,
        r2_first_step_lifetime: r2_first,
        n_persons: ols.n,
        n_dropped: dropped + lifetimes.n_dropped_nonpositive + lifetimes.n_excluded,
        spec: Some(spec.clone()),
    })
}

/// Seeded bootstrap over persons: standard deviation of the lifecycle
/// estimate across resampled panels, for intervals that include first-step
/// sampling error.
pub fn bootstrap_se(
    panel: &Panel,
    spec: &EstimatorSpec,
    window: AgeWindow,
    replications: usize,
    seed: u64,
) -> Result<f64> {
    if replications < 2 {
        return Err(Error::InvalidInput("bootstrap needs >= 2 replications".into()));
    }
    let mut slopes = Vec::with_capacity(replications);
    for b in 0..replications {
        let mut rng = substream(seed, "bootstrap", b as u64);
        let n = panel.n_persons();
        let mut persons = Vec::with_capacity(n);
        let mut obs: Vec<IncomeObs> = Vec::new();
        for k in 0..n {
            let i = rng.random_range(0..n);
            let mut p = panel.persons()[i].clone();
            p.person_id = format!("{}#{k}", p.person_id);
            persons.push(p);
            for o in panel.obs_for(i) {
                obs.push(IncomeObs { person: k as u32, ..*o });
            }
        }
        let resampled = Panel::new(persons, obs, panel.meta.clone())?;
        slopes.push(estimate_lifecycle(&resampled, spec, window)?.slope);
    }
    let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let var = slopes.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (slopes.len() - 1) as f64;
    Ok(var.sqrt())
}

/// Per person, keep at most `max_obs_per_person` observations inside the
/// window (uniformly sampled, seeded); observations outside the window are
/// untouched.
pub fn thin_observations(
    panel: &Panel,
    max_obs_per_person: usize,
    window: AgeWindow,
    seed: u64,
) -> Result<Panel> {
    if max_obs_per_person < 2 {
        return Err(Error::InvalidInput("max_obs_per_person must be >= 2".into()));
    }
    let mut obs = Vec::with_capacity(panel.n_obs());
    for i in 0..panel.n_persons() {
        let rows = panel.obs_for(i);
        let inside: Vec<&IncomeObs> = rows.iter().filter(|o| window.contains(o.age)).collect();
        for o in rows.iter().filter(|o| !window.contains(o.age)) {
            obs.push(*o);
        }
        if inside.len() <= max_obs_per_person {
            obs.extend(inside.into_iter().copied());
        } else {
            let mut rng = substream(seed, "thin", i as u64);
            let mut idx: Vec<usize> = (0..inside.len()).collect();
            for k in 0..max_obs_per_person {
                let j = rng.random_range(k..idx.len());
                idx.swap(k, j);
            }
            idx.truncate(max_obs_per_person);
            idx.sort_unstable();
            for k in idx {
                obs.push(*inside[k]);
            }
        }
    }
    let mut meta = panel.meta.clone();
    meta.transforms.push(format!(
        "thin_observations(max={max_obs_per_person}, window={window}, seed={seed})"
    ));
    Panel::new(panel.persons().to_vec(), obs, meta)
}
