//! Interaction-term design construction.
//!
//! A `DesignSpec` is a list of product terms over age polynomials,
//! categorical expansions, continuous regressors and an optional standardized
//! age profile. Building a design against a panel produces both the dense
//! matrix and a self-contained recipe (`Design`) that can re-evaluate any
//! column for a (person, age) pair at prediction time.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::panel::{Panel, PersonRecord};

/// Which income measure the first step fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    LogIncome,
    LevelIncome,
}

/// Categorical variables the design can expand into dummies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatVar {
    Educ,
    ParentEduc,
    CohortGroup,
    Year,
}

/// One multiplicative factor of a term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    /// Centered age to the given power (>= 1).
    Age(u8),
    /// Standardized age profile s(age), supplied through the context.
    StdProfile,
    Cat(CatVar),
    ParentLogIncome,
    /// First-pass person effect, supplied through the context (slope-level).
    EstIntercept,
}

/// A product term; categorical factors expand over non-reference levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term(pub Vec<Factor>);

/// Fixed-effect handling of the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffects {
    /// Intercept only.
    None,
    /// Person effects absorbed by within-person demeaning.
    Person,
    /// No person effects: the intercept is linear in parental log income.
    ParentIncomeIntercept,
}

/// Specification of one regression.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub response: Response,
    pub terms: Vec<Term>,
    pub fe: FixedEffects,
    pub robust_se: bool,
}

impl DesignSpec {
    /// Validate structural invariants: no duplicate terms, interaction arity
    /// at most 3 distinct variables.
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            let arity = t.0.len();
            if arity == 0 || arity > 3 {
                return Err(Error::InvalidInput(format!(
                    "term {i} has arity {arity}; expected 1..=3"
                )));
            }
            if self.terms[..i].contains(t) {
                return Err(Error::InvalidInput(format!("duplicate term at position {i}")));
            }
        }
        Ok(())
    }
}

/// Panel-level inputs the builder may need beyond the spec.
#[derive(Debug, Clone, Default)]
pub struct DesignContext {
    /// Ascending cohort-group lower bounds; a cohort belongs to the last
    /// group whose bound it reaches. Empty = single group.
    pub cohort_breaks: Vec<i32>,
    /// s(age) indexed by age - age_min.
    pub std_profile: Option<Vec<f64>>,
    /// First-pass person effects by person index (slope-level estimator).
    pub est_intercepts: Option<Vec<f64>>,
}

/// Evaluation recipe for one column: the product of its factor values.
#[derive(Debug, Clone)]
pub enum EvalFactor {
    Const,
    AgePow(u8),
    StdProfile,
    Dummy { var: CatVar, level: i32 },
    ParentLogIncome,
    EstIntercept,
}

#[derive(Debug, Clone)]
pub struct ColSpec {
    pub label: String,
    pub factors: Vec<EvalFactor>,
    /// Whether any factor varies within person (age, profile, year).
    pub obs_varying: bool,
}

/// A built, self-describing design that can re-evaluate rows for prediction.
#[derive(Debug, Clone)]
pub struct Design {
    pub response: Response,
    pub fe: FixedEffects,
    pub cols: Vec<ColSpec>,
    pub age_center: f64,
    pub age_min: u16,
    /// Observed calendar years (dummy levels beyond the reference).
    pub year_levels: Vec<i32>,
    /// In-sample mean of each year dummy, used when predicting at a year
    /// outside the estimation sample (average year effect).
    pub year_means: Vec<f64>,
    pub cohort_breaks: Vec<i32>,
    pub std_profile: Option<Vec<f64>>,
    pub est_intercepts: Option<Vec<f64>>,
    /// Centering constants for continuous regressors.
    pub parent_center: f64,
    pub muhat_center: f64,
}

impl Design {
    pub fn uses_parent_income(&self) -> bool {
        self.fe == FixedEffects::ParentIncomeIntercept
            || self
                .cols
                .iter()
                .any(|c| c.factors.iter().any(|f| matches!(f, EvalFactor::ParentLogIncome)))
    }

    fn uses_est_intercept(&self) -> bool {
        self.cols.iter().any(|c| c.factors.iter().any(|f| matches!(f, EvalFactor::EstIntercept)))
    }

    pub fn cohort_group(&self, cohort: i32) -> i32 {
        let mut g = 0;
        for (i, b) in self.cohort_breaks.iter().enumerate() {
            if cohort >= *b {
                g = i as i32;
            }
        }
        g
    }

    /// Evaluate one design row. `year` is the calendar year of the row; when
    /// it is not an observed level the year dummies take their in-sample
    /// means and `extrapolated` is set.
    pub fn row_into(
        &self,
        person: &PersonRecord,
        person_idx: usize,
        age: u16,
        year: i32,
        out: &mut [f64],
        extrapolated: &mut bool,
    ) {
        let agec = f64::from(age) - self.age_center;
        let year_known = self.year_levels.binary_search(&year).is_ok();
        for (j, col) in self.cols.iter().enumerate() {
            let mut v = 1.0;
            for f in &col.factors {
                v *= match f {
                    EvalFactor::Const => 1.0,
                    EvalFactor::AgePow(k) => agec.powi(i32::from(*k)),
                    EvalFactor::StdProfile => {
                        let s = self.std_profile.as_ref().expect("std profile not supplied");
                        s[(age - self.age_min) as usize]
                    }
                    EvalFactor::Dummy { var, level } => match var {
                        CatVar::Educ => f64::from(i32::from(person.educ_group) == *level),
                        CatVar::ParentEduc => {
                            f64::from(i32::from(person.parent_educ_group) == *level)
                        }
                        CatVar::CohortGroup => f64::from(self.cohort_group(person.cohort) == *level),
                        CatVar::Year => {
                            if year_known {
                                f64::from(year == *level)
                            } else {
                                *extrapolated = true;
                                let pos =
                                    self.year_levels.binary_search(level).expect("level is observed");
                                self.year_means[pos]
                            }
                        }
                    },
                    EvalFactor::ParentLogIncome => {
                        person.parent_log_income.unwrap_or(f64::NAN) - self.parent_center
                    }
                    EvalFactor::EstIntercept => {
                        self.est_intercepts.as_ref().expect("est intercepts not supplied")
                            [person_idx]
                            - self.muhat_center
                    }
                };
            }
            out[j] = v;
        }
    }
}

/// The dense matrix plus bookkeeping produced by `build_design`.
pub struct BuiltDesign {
    pub design: Design,
    /// Row-major n x p.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Observation index (into the panel's observation slice) per row.
    pub rows: Vec<u32>,
    /// Person index per row; rows of one person are contiguous.
    pub person_of_row: Vec<u32>,
    /// Row ranges per retained person, aligned with `retained_persons`.
    pub groups: Vec<Range<usize>>,
    pub retained_persons: Vec<u32>,
    /// Persons excluded for missing covariates.
    pub excluded_persons: usize,
    /// Workspace for column compaction when some columns are omitted.
    pub(crate) scratch: Vec<f64>,
}

impl BuiltDesign {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.design.cols.len()
    }
}

fn expand_term(
    term: &Term,
    educ_levels: u8,
    parent_educ_levels: u8,
    cohort_groups: usize,
    year_levels: &[i32],
) -> Vec<ColSpec> {
    // Start with a single empty product and multiply factors in.
    let mut cols: Vec<(String, Vec<EvalFactor>, bool)> = vec![(String::new(), Vec::new(), false)];
    for f in &term.0 {
        match f {
            Factor::Age(k) => {
                for c in cols.iter_mut() {
                    c.0 = join_label(&c.0, &format!("agec^{k}"));
                    c.1.push(EvalFactor::AgePow(*k));
                    c.2 = true;
                }
            }
            Factor::StdProfile => {
                for c in cols.iter_mut() {
                    c.0 = join_label(&c.0, "sprof");
                    c.1.push(EvalFactor::StdProfile);
                    c.2 = true;
                }
            }
            Factor::ParentLogIncome => {
                for c in cols.iter_mut() {
                    c.0 = join_label(&c.0, "plinc");
                    c.1.push(EvalFactor::ParentLogIncome);
                }
            }
            Factor::EstIntercept => {
                for c in cols.iter_mut() {
                    c.0 = join_label(&c.0, "muhat");
                    c.1.push(EvalFactor::EstIntercept);
                }
            }
            Factor::Cat(var) => {
                let (prefix, levels, obs_varying): (&str, Vec<i32>, bool) = match var {
                    CatVar::Educ => ("educ", (1..i32::from(educ_levels)).collect(), false),
                    CatVar::ParentEduc => {
                        ("peduc", (1..i32::from(parent_educ_levels)).collect(), false)
                    }
                    CatVar::CohortGroup => ("cg", (1..cohort_groups as i32).collect(), false),
                    // Two reference years are dropped: with person effects
                    // absorbing birth year, calendar year minus age is
                    // person-constant, so the full dummy set would be exactly
                    // collinear with a linear age term (the age-period-cohort
                    // identity).
                    CatVar::Year => {
                        ("year", year_levels.iter().skip(2).copied().collect(), true)
                    }
                };
                let mut new_cols = Vec::with_capacity(cols.len() * levels.len());
                for (lbl, facs, ov) in &cols {
                    for lv in &levels {
                        let mut f2 = facs.clone();
                        f2.push(EvalFactor::Dummy { var: *var, level: *lv });
                        new_cols.push((join_label(lbl, &format!("{prefix}={lv}")), f2, *ov || obs_varying));
                    }
                }
                cols = new_cols;
            }
        }
    }
    cols.into_iter()
        .map(|(label, factors, obs_varying)| ColSpec { label, factors, obs_varying })
        .collect()
}

fn join_label(a: &str, b: &str) -> String {
    if a.is_empty() {
        b.to_string()
    } else {
        format!("{a}:{b}")
    }
}

/// Build the design matrix, response vector and row index for a spec.
///
/// One row per retained observation; categorical terms expand to dummies with
/// a dropped reference level; polynomial terms are centered at the panel's
/// mid-age. Persons lacking a covariate the spec uses (parental income,
/// first-pass effect) are excluded and counted.
pub fn build_design(panel: &Panel, spec: &DesignSpec, ctx: &DesignContext) -> Result<BuiltDesign> {
    spec.validate()?;

    let year_levels = panel.years();
    let cohort_groups = ctx.cohort_breaks.len().max(1);
    let educ_levels = panel.meta.educ_groups.max(1);
    let parent_educ_levels = panel.meta.educ_groups.max(1);

    let mut cols: Vec<ColSpec> = Vec::new();
    if spec.fe != FixedEffects::Person {
        cols.push(ColSpec { label: "const".into(), factors: vec![EvalFactor::Const], obs_varying: true });
    }
    if spec.fe == FixedEffects::ParentIncomeIntercept {
        cols.push(ColSpec {
            label: "plinc".into(),
            factors: vec![EvalFactor::ParentLogIncome],
            obs_varying: false,
        });
    }
    for term in &spec.terms {
        for col in expand_term(term, educ_levels, parent_educ_levels, cohort_groups, &year_levels) {
            // Person-constant columns are unidentified under person effects.
            if spec.fe == FixedEffects::Person && !col.obs_varying {
                continue;
            }
            if cols.iter().any(|c| c.label == col.label) {
                continue;
            }
            cols.push(col);
        }
    }
    let p = cols.len();

    // Centering constants over persons that carry the covariates.
    let mut design = Design {
        response: spec.response,
        fe: spec.fe,
        cols,
        age_center: f64::from(panel.meta.age_min + panel.meta.age_max) / 2.0,
        age_min: panel.meta.age_min,
        year_levels: year_levels.clone(),
        year_means: Vec::new(),
        cohort_breaks: ctx.cohort_breaks.clone(),
        std_profile: ctx.std_profile.clone(),
        est_intercepts: ctx.est_intercepts.clone(),
        parent_center: 0.0,
        muhat_center: 0.0,
    };
    if design.uses_parent_income() {
        let vals: Vec<f64> =
            panel.persons().iter().filter_map(|q| q.parent_log_income).collect();
        if vals.is_empty() {
            return Err(Error::EmptySample("no person has parent_log_income".into()));
        }
        design.parent_center = vals.iter().sum::<f64>() / vals.len() as f64;
    }
    if design.uses_est_intercept() {
        let mus = design
            .est_intercepts
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("spec uses first-pass effects but none supplied".into()))?;
        if mus.len() != panel.n_persons() {
            return Err(Error::InvalidInput("est_intercepts length != persons".into()));
        }
        design.muhat_center = mus.iter().sum::<f64>() / mus.len() as f64;
    }

    // Which persons are retained.
    let needs_parent = design.uses_parent_income();
    let retained: Vec<u32> = (0..panel.n_persons() as u32)
        .filter(|&i| {
            let q = &panel.persons()[i as usize];
            (!needs_parent || q.parent_log_income.is_some())
                && !panel.obs_for(i as usize).is_empty()
        })
        .collect();
    let excluded_persons = panel.n_persons() - retained.len();
    if retained.is_empty() {
        return Err(Error::EmptySample("no person retained by the design".into()));
    }

    // Hard error on logs of nonpositive incomes.
    if spec.response == Response::LogIncome {
        for &i in &retained {
            for o in panel.obs_for(i as usize) {
                if o.income_level <= 0.0 {
                    return Err(Error::NonpositiveIncome {
                        person_id: panel.persons()[i as usize].person_id.clone(),
                        age: o.age,
                    });
                }
            }
        }
    }

    // Row layout: per-person contiguous blocks.
    let mut offsets = Vec::with_capacity(retained.len() + 1);
    offsets.push(0usize);
    for &i in &retained {
        offsets.push(offsets.last().unwrap() + panel.obs_for(i as usize).len());
    }
    let n = *offsets.last().unwrap();

    let obs_base = panel.obs().as_ptr() as usize;
    let mut x = vec![0.0f64; n * p];
    let mut y = vec![0.0f64; n];
    let mut rows = vec![0u32; n];
    let mut person_of_row = vec![0u32; n];
    let groups: Vec<Range<usize>> =
        (0..retained.len()).map(|k| offsets[k]..offsets[k + 1]).collect();

    // Fill y/rows/person_of_row sequentially (cheap), x in parallel per person.
    for (k, &i) in retained.iter().enumerate() {
        let obs = panel.obs_for(i as usize);
        for (j, o) in obs.iter().enumerate() {
            let r = offsets[k] + j;
            y[r] = match spec.response {
                Response::LogIncome => o.income_level.ln(),
                Response::LevelIncome => o.income_level,
            };
            rows[r] = ((o as *const _ as usize - obs_base) / std::mem::size_of_val(o)) as u32;
            person_of_row[r] = i;
        }
    }
    let x_ranges: Vec<Range<usize>> = groups.iter().map(|g| g.start * p..g.end * p).collect();
    let design_ref = &design;
    let retained_ref = &retained;
    for_each_range_mut(&mut x, &x_ranges, |k, slice| {
        let i = retained_ref[k];
        let q = &panel.persons()[i as usize];
        let obs = panel.obs_for(i as usize);
        let mut extrap = false;
        for (j, o) in obs.iter().enumerate() {
            design_ref.row_into(q, i as usize, o.age, o.year, &mut slice[j * p..(j + 1) * p], &mut extrap);
        }
    });

    // In-sample year dummy means (for prediction at unobserved years).
    if design.cols.iter().any(|c| {
        c.factors.iter().any(|f| matches!(f, EvalFactor::Dummy { var: CatVar::Year, .. }))
    }) {
        let mut counts = vec![0usize; year_levels.len()];
        for &i in &retained {
            for o in panel.obs_for(i as usize) {
                if let Ok(pos) = year_levels.binary_search(&o.year) {
                    counts[pos] += 1;
                }
            }
        }
        design.year_means = counts.iter().map(|&c| c as f64 / n as f64).collect();
    }

    Ok(BuiltDesign {
        design,
        x,
        y,
        rows,
        person_of_row,
        groups,
        retained_persons: retained,
        excluded_persons,
        scratch: Vec::new(),
    })
}

/// Apply `f` to disjoint ranges of `data` (parallel when enabled), in a way
/// that cannot depend on thread count.
pub(crate) fn for_each_range_mut<F>(data: &mut [f64], ranges: &[Range<usize>], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(ranges.len());
    let mut tail = data;
    let mut consumed = 0usize;
    for (k, r) in ranges.iter().enumerate() {
        let t = std::mem::take(&mut tail);
        let (_gap, rest) = t.split_at_mut(r.start - consumed);
        let (piece, rest) = rest.split_at_mut(r.end - r.start);
        slices.push((k, piece));
        tail = rest;
        consumed = r.end;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        slices.into_par_iter().for_each(|(k, s)| f(k, s));
    }
    #[cfg(not(feature = "parallel"))]
    {
        slices.into_iter().for_each(|(k, s)| f(k, s));
    }
}


/// Convenience constructors for the factor algebra.
pub fn age_poly_terms(degree: u8) -> Vec<Term> {
    (1..=degree).map(|k| Term(vec![Factor::Age(k)])).collect()
}

pub fn cat_by_age_terms(var: CatVar, degree: u8) -> Vec<Term> {
    (1..=degree).map(|k| Term(vec![Factor::Cat(var), Factor::Age(k)])).collect()
}

pub fn cont_by_age_terms(f: Factor, degree: u8) -> Vec<Term> {
    (1..=degree).map(|k| Term(vec![f, Factor::Age(k)])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::tests_support::small_panel;

    #[test]
    fn column_count_combinatorial_oracle() {
        // educ(4 groups) x age-quartic plus mains: independent enumeration of
        // the expected labels.
        let panel = small_panel(6, 25, 40);
        let mut terms = vec![Term(vec![Factor::Cat(CatVar::Educ)])];
        terms.extend(age_poly_terms(4));
        terms.extend(cat_by_age_terms(CatVar::Educ, 4));
        let spec = DesignSpec { response: Response::LogIncome, terms, fe: FixedEffects::None, robust_se: false };
        let built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
        // Oracle: intercept + (L-1) mains + d age powers + (L-1)*d interactions.
        let (l, d) = (4usize, 4usize);
        let expected = 1 + (l - 1) + d + (l - 1) * d;
        assert_eq!(built.n_cols(), expected);
        // Spot-check labels exist.
        let labels: Vec<&str> = built.design.cols.iter().map(|c| c.label.as_str()).collect();
        assert!(labels.contains(&"const"));
        assert!(labels.contains(&"educ=3"));
        assert!(labels.contains(&"agec^4"));
        assert!(labels.contains(&"educ=2:agec^3"));
    }

    #[test]
    fn empty_spec_is_intercept_only() {
        let panel = small_panel(3, 25, 30);
        let spec = DesignSpec {
            response: Response::LogIncome,
            terms: vec![],
            fe: FixedEffects::None,
            robust_se: false,
        };
        let built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
        assert_eq!(built.n_cols(), 1);
        assert!(built.x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn age_degree_one_gives_two_columns() {
        let panel = small_panel(3, 25, 30);
        let spec = DesignSpec {
            response: Response::LogIncome,
            terms: age_poly_terms(1),
            fe: FixedEffects::None,
            robust_se: false,
        };
        let built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
        assert_eq!(built.n_cols(), 2);
        // Centered at panel mid-age.
        let mid = f64::from(panel.meta.age_min + panel.meta.age_max) / 2.0;
        assert_eq!(built.x[1], f64::from(panel.obs()[0].age) - mid);
    }

    #[test]
    fn duplicate_terms_rejected() {
        let spec = DesignSpec {
            response: Response::LogIncome,
            terms: vec![Term(vec![Factor::Age(1)]), Term(vec![Factor::Age(1)])],
            fe: FixedEffects::None,
            robust_se: false,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn person_constant_columns_dropped_under_person_fe() {
        let panel = small_panel(5, 25, 32);
        let spec = DesignSpec {
            response: Response::LogIncome,
            terms: vec![Term(vec![Factor::Cat(CatVar::Educ)]), Term(vec![Factor::Age(1)])],
            fe: FixedEffects::Person,
            robust_se: false,
        };
        let built = build_design(&panel, &spec, &DesignContext::default()).unwrap();
        assert_eq!(built.n_cols(), 1);
        assert_eq!(built.design.cols[0].label, "agec^1");
    }
}
