//! Synthetic two-generation panels with family-linked heterogeneous income
//! growth and exact true lifetime incomes.
//!
//! Log income of person `i` at experience `h` (age minus entry age) is
//!
//! ```text
//! y = g(h) + e(h) + alpha_i + beta_i h
//!   + (load_int + s_c (l1 h + l2 h^2)) * (yp_i - parent_mean)
//!   + z_h + phi_t eps_h,      z_0 = 0,  z_h = rho z_{h-1} + pi_t eta_h
//! ```
//!
//! where `g` is a common cubic, `e` a per-education cubic offset, `(alpha,
//! beta)` the individual intercept/growth pair, `yp` the parent's log
//! lifetime income and `s_c` an optional cohort-group scaling of the growth
//! loadings. Level income is `exp(y)`; the true log lifetime income
//! `ln(sum_h exp(y))` is stored on the person record.
//!
//! Each person's draws come from a dedicated substream of the run seed, so
//! generation is embarrassingly parallel over persons and bit-identical to
//! the sequential build.

pub mod growth;
pub mod presets;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::panel::{IncomeObs, Panel, PanelMeta, PersonRecord};
use crate::rng::substream;

/// Per-calendar-year scale with a constant default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YearScale {
    pub default: f64,
    /// `[year, scale]` overrides.
    #[serde(default)]
    pub overrides: Vec<(i32, f64)>,
}

impl YearScale {
    pub fn constant(v: f64) -> Self {
        YearScale { default: v, overrides: Vec::new() }
    }

    pub fn at(&self, year: i32) -> f64 {
        self.overrides
            .iter()
            .find(|(y, _)| *y == year)
            .map(|(_, s)| *s)
            .unwrap_or(self.default)
    }
}

/// Parameters of the heterogeneous-profile income process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HipParams {
    /// Common cubic in experience, log-income units.
    pub theta: [f64; 4],
    /// Variance of the individual intercept.
    pub sigma2_alpha: f64,
    /// Variance of the individual growth rate.
    pub sigma2_beta: f64,
    /// Covariance of (intercept, growth).
    pub sigma_alpha_beta: f64,
    /// Persistence of the mean-reverting component, |rho| < 1.
    pub rho: f64,
    /// Per-year scale of the persistent innovation.
    pub pi: YearScale,
    /// Per-year scale of the transitory shock.
    pub phi: YearScale,
    pub sigma2_eta: f64,
    pub sigma2_eps: f64,
}

impl HipParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma2_alpha", self.sigma2_alpha),
            ("sigma2_beta", self.sigma2_beta),
            ("sigma2_eta", self.sigma2_eta),
            ("sigma2_eps", self.sigma2_eps),
        ] {
            if v < 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::InvalidInput(format!("|rho| must be < 1, got {}", self.rho)));
        }
        // The (alpha, beta) covariance matrix must be positive semidefinite.
        let det = self.sigma2_alpha * self.sigma2_beta - self.sigma_alpha_beta.powi(2);
        let scale = (self.sigma2_alpha * self.sigma2_beta).max(self.sigma_alpha_beta.powi(2));
        if det < -1e-12 * scale.max(1e-300) {
            return Err(Error::InvalidInput(format!(
                "heterogeneity covariance is not PSD: det = {det:.3e} \
                 (sigma2_alpha {}, sigma2_beta {}, sigma_alpha_beta {})",
                self.sigma2_alpha, self.sigma2_beta, self.sigma_alpha_beta
            )));
        }
        Ok(())
    }

    /// Lower-triangular factor of the (alpha, beta) covariance; tolerates a
    /// singular matrix. Remainders within rounding error of zero are snapped
    /// to zero so that a singular covariance yields exactly proportional
    /// draws.
    fn chol(&self) -> (f64, f64, f64) {
        let l11 = self.sigma2_alpha.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { self.sigma_alpha_beta / l11 } else { 0.0 };
        let mut rem = self.sigma2_beta - l21 * l21;
        if rem < 1e-12 * self.sigma2_beta.max(f64::MIN_POSITIVE) {
            rem = 0.0;
        }
        (l11, l21, rem.sqrt())
    }
}

/// Scaling of the parental growth loadings for a cohort range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortScale {
    pub cohort_lo: i32,
    pub cohort_hi: i32,
    pub scale: f64,
}

/// Family linkage: how parental income enters the child's process.
///
/// All loadings apply to the parent's log lifetime income centered at
/// `parent_mean`, so they move slopes and gaps without shifting the overall
/// income level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyLink {
    /// Mean of parental log lifetime income.
    pub parent_mean: f64,
    /// Variance of parental log lifetime income.
    pub parent_var: f64,
    /// Loading of parental log income into the child intercept.
    pub load_intercept: f64,
    /// Loading into child growth, linear in experience.
    pub load_growth_linear: f64,
    /// Loading into child growth, quadratic in experience.
    pub load_growth_quad: f64,
    /// Loading of the father's growth rate into the child's growth rate
    /// (active only when fathers are simulated).
    #[serde(default)]
    pub load_growth_on_growth: f64,
    /// Rows: parental income quartile (bottom to top); columns: education
    /// group probabilities.
    pub educ_probs_by_parent: Vec<Vec<f64>>,
    /// Per-education cubic offsets in experience, log-income units.
    pub educ_profiles: Vec<[f64; 4]>,
    /// Optional scaling of the growth loadings by cohort range.
    #[serde(default)]
    pub cohort_growth_scale: Vec<CohortScale>,
}

impl FamilyLink {
    pub fn validate(&self) -> Result<()> {
        if self.parent_var < 0.0 {
            return Err(Error::InvalidInput("parent_var must be >= 0".into()));
        }
        if self.educ_probs_by_parent.len() != 4 {
            return Err(Error::InvalidInput(format!(
                "educ_probs_by_parent must have 4 quartile rows, got {}",
                self.educ_probs_by_parent.len()
            )));
        }
        let groups = self.educ_profiles.len();
        if groups == 0 || groups > 250 {
            return Err(Error::InvalidInput("educ_profiles must declare 1..=250 groups".into()));
        }
        for (q, row) in self.educ_probs_by_parent.iter().enumerate() {
            if row.len() != groups {
                return Err(Error::InvalidInput(format!(
                    "educ_probs_by_parent row {q} has {} entries, expected {groups}",
                    row.len()
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "educ_probs_by_parent row {q} sums to {s}, expected 1 within 1e-12"
                )));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidInput(format!("negative probability in row {q}")));
            }
        }
        Ok(())
    }

    fn growth_scale(&self, cohort: i32) -> f64 {
        self.cohort_growth_scale
            .iter()
            .find(|c| cohort >= c.cohort_lo && cohort <= c.cohort_hi)
            .map(|c| c.scale)
            .unwrap_or(1.0)
    }
}

/// Father-generation simulation: used when the analysis needs the fathers'
/// own annual income profiles (growth-on-growth regressions, two-step
/// parental income construction). When present, `parent_log_income` is the
/// father's realized log lifetime income rather than a lognormal draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FatherConfig {
    pub hip: HipParams,
    /// Father's birth year relative to the child's: cohort_child - offset.
    pub cohort_offset: i32,
    pub age_min: u16,
    pub age_max: u16,
}

/// Full simulation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_persons: usize,
    /// Inclusive birth-year range; cohorts are assigned round-robin.
    pub cohorts: (i32, i32),
    pub age_min: u16,
    pub age_max: u16,
    pub seed: u64,
    pub hip: HipParams,
    pub link: FamilyLink,
    #[serde(default)]
    pub fathers: Option<FatherConfig>,
    /// Generate the wide person-level covariate set used by the penalized
    /// first step (fine education, family size, birth order, immigrant flag,
    /// skill scores).
    #[serde(default)]
    pub ml_covariates: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_persons == 0 {
            return Err(Error::InvalidInput("n_persons must be > 0".into()));
        }
        if self.age_min >= self.age_max {
            return Err(Error::InvalidInput(format!(
                "age_min {} must be < age_max {}",
                self.age_min, self.age_max
            )));
        }
        if self.cohorts.0 > self.cohorts.1 {
            return Err(Error::InvalidInput("cohort range reversed".into()));
        }
        self.hip.validate()?;
        self.link.validate()?;
        if let Some(f) = &self.fathers {
            f.hip.validate()?;
            if f.age_min >= f.age_max {
                return Err(Error::InvalidInput("father age range reversed".into()));
            }
        }
        Ok(())
    }

    /// Read a simulation configuration from TOML text.
    pub fn from_toml(text: &str) -> Result<SimConfig> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Quartile (0..4) of a value under a Normal(mean, var) distribution.
fn normal_quartile(v: f64, mean: f64, var: f64) -> usize {
    if var <= 0.0 {
        return 1;
    }
    let z = (v - mean) / var.sqrt();
    const Q: f64 = 0.674_489_750_196_081_7;
    if z < -Q {
        0
    } else if z < 0.0 {
        1
    } else if z < Q {
        2
    } else {
        3
    }
}

/// Quartile by empirical thresholds (used when fathers are simulated).
fn empirical_quartile(v: f64, cuts: &[f64; 3]) -> usize {
    if v < cuts[0] {
        0
    } else if v < cuts[1] {
        1
    } else if v < cuts[2] {
        2
    } else {
        3
    }
}

struct FatherDraw {
    lifetime_log: f64,
    beta: f64,
    record: PersonRecord,
    obs: Vec<(i32, u16, f64)>,
}

fn simulate_father(cfg: &SimConfig, fcfg: &FatherConfig, i: usize) -> FatherDraw {
    let mut rng = substream(cfg.seed, "simulate-father", i as u64);
    let hip = &fcfg.hip;
    let (l11, l21, l22) = hip.chol();
    let u1: f64 = rng.sample(StandardNormal);
    let u2: f64 = rng.sample(StandardNormal);
    let alpha = l11 * u1;
    let beta = l21 * u1 + l22 * u2;
    let span = (cfg.cohorts.1 - cfg.cohorts.0 + 1) as usize;
    let cohort = cfg.cohorts.0 + (i % span) as i32 - fcfg.cohort_offset;
    let ages: Vec<u16> = (fcfg.age_min..=fcfg.age_max).collect();
    let mut z = 0.0;
    let sd_eta = hip.sigma2_eta.sqrt();
    let sd_eps = hip.sigma2_eps.sqrt();
    let mut obs = Vec::with_capacity(ages.len());
    let mut level_sum = 0.0;
    for (hidx, &age) in ages.iter().enumerate() {
        let h = hidx as f64;
        let year = cohort + i32::from(age);
        if hidx > 0 {
            let eta: f64 = rng.sample(StandardNormal);
            z = hip.rho * z + hip.pi.at(year) * sd_eta * eta;
        } else {
            // Experience-0 value of the persistent component is zero.
            let _ = rng.sample::<f64, _>(StandardNormal);
        }
        let eps: f64 = rng.sample(StandardNormal);
        let y = hip.theta[0]
            + hip.theta[1] * h
            + hip.theta[2] * h * h
            + hip.theta[3] * h * h * h
            + alpha
            + beta * h
            + z
            + hip.phi.at(year) * sd_eps * eps;
        let level = y.exp();
        level_sum += level;
        obs.push((year, age, level));
    }
    let lifetime_log = level_sum.ln();
    let record = PersonRecord {
        person_id: format!("f{i}"),
        family_id: format!("f{i}"),
        cohort,
        sex: 1,
        educ_group: 0,
        parent_educ_group: 0,
        parent_log_income: None,
        true_log_lifetime: Some(lifetime_log),
        group_tag: None,
        extras: BTreeMap::new(),
    };
    FatherDraw { lifetime_log, beta, record, obs }
}

/// Stanine cut points (standard nine) on the z scale.
const STANINE_CUTS: [f64; 8] = [-1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75];

fn stanine(z: f64) -> u8 {
    let mut s = 1u8;
    for c in STANINE_CUTS {
        if z > c {
            s += 1;
        }
    }
    s
}

/// Generate a synthetic panel from the configured income process.
///
/// Regenerating with the same configuration is bit-identical; generation is
/// parallel over persons with per-person substreams.
pub fn simulate_panel(cfg: &SimConfig) -> Result<Panel> {
    cfg.validate()?;
    let n = cfg.n_persons;
    let span = (cfg.cohorts.1 - cfg.cohorts.0 + 1) as usize;
    let groups = cfg.link.educ_profiles.len() as u8;

    // Pass 1: fathers (optional). Parent income quartiles then come from the
    // empirical distribution of father lifetime incomes.
    let fathers: Option<Vec<FatherDraw>> = cfg
        .fathers
        .as_ref()
        .map(|fcfg| exec::map_indexed(n, |i| simulate_father(cfg, fcfg, i)));
    let parent_cuts: Option<[f64; 3]> = fathers.as_ref().map(|fs| {
        let mut v: Vec<f64> = fs.iter().map(|f| f.lifetime_log).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| v[((v.len() as f64 * p) as usize).min(v.len() - 1)];
        [q(0.25), q(0.5), q(0.75)]
    });

    let ages: Vec<u16> = (cfg.age_min..=cfg.age_max).collect();
    let t_ages = ages.len();

    struct ChildDraw {
        record: PersonRecord,
        obs: Vec<(i32, u16, f64)>,
    }

    let hip = &cfg.hip;
    let link = &cfg.link;
    let (l11, l21, l22) = hip.chol();
    let sd_eta = hip.sigma2_eta.sqrt();
    let sd_eps = hip.sigma2_eps.sqrt();
    let sd_parent = link.parent_var.sqrt();

    let children: Vec<ChildDraw> = exec::map_indexed(n, |i| {
        let mut rng = substream(cfg.seed, "simulate", i as u64);
        let cohort = cfg.cohorts.0 + (i % span) as i32;

        // Parent log lifetime income and quartile.
        let (parent_log, quartile, father_beta) = match (&fathers, &parent_cuts) {
            (Some(fs), Some(cuts)) => {
                let f = &fs[i];
                (f.lifetime_log, empirical_quartile(f.lifetime_log, cuts), f.beta)
            }
            _ => {
                let u: f64 = rng.sample(StandardNormal);
                let v = link.parent_mean + sd_parent * u;
                (v, normal_quartile(v, link.parent_mean, link.parent_var), 0.0)
            }
        };
        let p_centered = parent_log - link.parent_mean;

        // Education from the quartile-specific probabilities.
        let u_educ: f64 = rng.random();
        let probs = &link.educ_probs_by_parent[quartile];
        let mut educ = probs.len() - 1;
        let mut cum = 0.0;
        for (g, &p) in probs.iter().enumerate() {
            cum += p;
            if u_educ < cum {
                educ = g;
                break;
            }
        }
        let eprof = &link.educ_profiles[educ];

        // Individual intercept and growth.
        let u1: f64 = rng.sample(StandardNormal);
        let u2: f64 = rng.sample(StandardNormal);
        let alpha = l11 * u1;
        let beta = l21 * u1 + l22 * u2 + link.load_growth_on_growth * father_beta;

        let gscale = link.growth_scale(cohort);
        let mut z = 0.0;
        let mut obs = Vec::with_capacity(t_ages);
        let mut level_sum = 0.0;
        for (hidx, &age) in ages.iter().enumerate() {
            let h = hidx as f64;
            let year = cohort + i32::from(age);
            if hidx > 0 {
                let eta: f64 = rng.sample(StandardNormal);
                z = hip.rho * z + hip.pi.at(year) * sd_eta * eta;
            } else {
                let _ = rng.sample::<f64, _>(StandardNormal);
            }
            let eps: f64 = rng.sample(StandardNormal);
            let parent_component = (link.load_intercept
                + gscale * (link.load_growth_linear * h + link.load_growth_quad * h * h))
                * p_centered;
            let y = hip.theta[0]
                + hip.theta[1] * h
                + hip.theta[2] * h * h
                + hip.theta[3] * h * h * h
                + eprof[0]
                + eprof[1] * h
                + eprof[2] * h * h
                + eprof[3] * h * h * h
                + alpha
                + beta * h
                + parent_component
                + z
                + hip.phi.at(year) * sd_eps * eps;
            let level = y.exp();
            level_sum += level;
            obs.push((year, age, level));
        }

        let mut extras = BTreeMap::new();
        // Parent education rises with the parent's income quartile.
        let parent_educ = {
            let u: f64 = rng.random();
            let shifted = u + [0.0, 0.35, 0.7, 1.1][quartile] * 0.35;
            let g = match shifted {
                v if v < 0.45 => 0,
                v if v < 0.75 => 1,
                v if v < 0.95 => 2,
                _ => 3,
            };
            (g as u8).min(groups - 1)
        };
        if cfg.ml_covariates {
            // Fine education consistent with the coarse group.
            let spans: [(u8, u8); 4] = [(0, 3), (4, 7), (8, 11), (12, 14)];
            let (lo, hi) = spans[educ.min(3)];
            let fine = lo + (rng.random::<u32>() % u32::from(hi - lo + 1)) as u8;
            extras.insert("educ_fine".into(), f64::from(fine));
            let fam = 2 + (rng.random::<u32>() % 7) as u8 + (rng.random::<u32>() % 2) as u8;
            extras.insert("family_size".into(), f64::from(fam));
            let border = 1 + (rng.random::<u32>() % u32::from(fam.min(6))) as u8;
            extras.insert("birth_order".into(), f64::from(border));
            extras.insert("immigrant".into(), f64::from(rng.random::<f64>() < 0.12));
            let zsig = 0.30 * (p_centered / sd_parent.max(1e-12))
                + 0.35 * (f64::from(educ as u8) - 1.5) / 1.1;
            let zc: f64 = rng.sample(StandardNormal);
            let zn: f64 = rng.sample(StandardNormal);
            extras.insert("cognitive".into(), f64::from(stanine(zsig + 0.85 * zc)));
            extras.insert("noncognitive".into(), f64::from(stanine(0.6 * zsig + 0.92 * zn)));
        }

        let record = PersonRecord {
            person_id: format!("c{i}"),
            family_id: format!("f{i}"),
            cohort,
            sex: 1,
            educ_group: educ as u8,
            parent_educ_group: parent_educ,
            parent_log_income: Some(parent_log),
            true_log_lifetime: Some(level_sum.ln()),
            group_tag: None,
            extras,
        };
        ChildDraw { record, obs }
    });

    // Assemble: children first, then fathers (if any).
    let n_fathers = fathers.as_ref().map_or(0, |f| f.len());
    let mut persons = Vec::with_capacity(n + n_fathers);
    let mut obs = Vec::with_capacity(n * t_ages + n_fathers);
    for (i, c) in children.into_iter().enumerate() {
        persons.push(c.record);
        for (year, age, level) in c.obs {
            obs.push(IncomeObs { person: i as u32, year, age, income_level: level });
        }
    }
    let mut age_lo = cfg.age_min;
    let mut age_hi = cfg.age_max;
    if let (Some(fs), Some(fcfg)) = (fathers, &cfg.fathers) {
        age_lo = age_lo.min(fcfg.age_min);
        age_hi = age_hi.max(fcfg.age_max);
        for f in fs {
            let idx = persons.len() as u32;
            persons.push(f.record);
            for (year, age, level) in f.obs {
                obs.push(IncomeObs { person: idx, year, age, income_level: level });
            }
        }
    }

    Panel::new(
        persons,
        obs,
        PanelMeta {
            age_min: age_lo,
            age_max: age_hi,
            educ_groups: groups,
            transforms: vec![format!("simulate(seed={}, n={})", cfg.seed, n)],
        },
    )
}

#[cfg(test)]
mod tests {
    use super::presets;
    use super::*;
    use crate::panel::true_lifetime;

    #[test]
    fn degenerate_process_is_exactly_constant() {
        // All variances and loadings zero, constant theta: log income == c.
        let mut cfg = presets::default_benchmark(1);
        cfg.n_persons = 1;
        cfg.hip = HipParams {
            theta: [2.5, 0.0, 0.0, 0.0],
            sigma2_alpha: 0.0,
            sigma2_beta: 0.0,
            sigma_alpha_beta: 0.0,
            rho: 0.0,
            pi: YearScale::constant(1.0),
            phi: YearScale::constant(1.0),
            sigma2_eta: 0.0,
            sigma2_eps: 0.0,
        };
        cfg.link.load_intercept = 0.0;
        cfg.link.load_growth_linear = 0.0;
        cfg.link.load_growth_quad = 0.0;
        cfg.link.educ_profiles = vec![[0.0; 4]; 4];
        let panel = simulate_panel(&cfg).unwrap();
        for o in panel.obs() {
            assert!((o.income_level.ln() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        let mut cfg = presets::default_benchmark(99);
        cfg.n_persons = 200;
        let a = simulate_panel(&cfg).unwrap();
        let b = simulate_panel(&cfg).unwrap();
        assert_eq!(a.n_obs(), b.n_obs());
        for (x, y) in a.obs().iter().zip(b.obs()) {
            assert_eq!(x.income_level.to_bits(), y.income_level.to_bits());
        }
        for (x, y) in a.persons().iter().zip(b.persons()) {
            assert_eq!(
                x.true_log_lifetime.unwrap().to_bits(),
                y.true_log_lifetime.unwrap().to_bits()
            );
        }
    }

    #[test]
    fn stored_lifetime_matches_naive_sum_oracle() {
        let mut cfg = presets::default_benchmark(5);
        cfg.n_persons = 50;
        let panel = simulate_panel(&cfg).unwrap();
        for i in 0..panel.n_persons() {
            let truth = panel.persons()[i].true_log_lifetime.unwrap();
            // Independent oracle: naive re-summation over the observations.
            let oracle = true_lifetime(panel.obs_for(i)).unwrap();
            assert!(
                ((truth - oracle) / oracle.abs().max(1.0)).abs() < 1e-12,
                "person {i}: {truth} vs {oracle}"
            );
        }
    }

    #[test]
    fn non_psd_covariance_rejected() {
        let mut cfg = presets::default_benchmark(1);
        cfg.hip.sigma2_alpha = 0.01;
        cfg.hip.sigma2_beta = 0.0001;
        cfg.hip.sigma_alpha_beta = 0.01; // implies correlation 10
        let err = simulate_panel(&cfg).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert!(err.to_string().contains("PSD"));
    }

    #[test]
    fn variance_decomposition_transitory_only() {
        // rho = 0, all heterogeneity off, eta off: Var(log y) at each age
        // equals phi^2 sigma2_eps within 3 Monte Carlo standard errors.
        let mut cfg = presets::default_benchmark(11);
        cfg.n_persons = 40_000;
        cfg.hip.sigma2_alpha = 0.0;
        cfg.hip.sigma2_beta = 0.0;
        cfg.hip.sigma_alpha_beta = 0.0;
        cfg.hip.rho = 0.0;
        cfg.hip.sigma2_eta = 0.0;
        cfg.hip.sigma2_eps = 0.04;
        cfg.hip.phi = YearScale::constant(1.3);
        cfg.link.load_intercept = 0.0;
        cfg.link.load_growth_linear = 0.0;
        cfg.link.load_growth_quad = 0.0;
        cfg.link.educ_profiles = vec![[0.0; 4]; 4];
        let panel = simulate_panel(&cfg).unwrap();
        let expect = 1.3f64.powi(2) * 0.04;
        for probe_age in [25u16, 40, 58] {
            let logs: Vec<f64> = panel
                .obs()
                .iter()
                .filter(|o| o.age == probe_age)
                .map(|o| o.income_level.ln())
                .collect();
            let n = logs.len() as f64;
            let m = logs.iter().sum::<f64>() / n;
            let var = logs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            // SE of a sample variance of normals: var * sqrt(2/(n-1)).
            let se = expect * (2.0 / (n - 1.0)).sqrt();
            assert!(
                (var - expect).abs() < 3.0 * se,
                "age {probe_age}: var {var} vs {expect} (se {se})"
            );
        }
    }

    #[test]
    fn ar1_autocovariance_ratio() {
        // Only the persistent component active: Cov(z_t, z_{t+k})/Var(z_t)
        // approaches rho^k at stationary ages.
        let mut cfg = presets::default_benchmark(13);
        cfg.n_persons = 60_000;
        cfg.hip.sigma2_alpha = 0.0;
        cfg.hip.sigma2_beta = 0.0;
        cfg.hip.sigma_alpha_beta = 0.0;
        cfg.hip.rho = 0.8;
        cfg.hip.sigma2_eta = 0.02;
        cfg.hip.sigma2_eps = 0.0;
        cfg.link.load_intercept = 0.0;
        cfg.link.load_growth_linear = 0.0;
        cfg.link.load_growth_quad = 0.0;
        cfg.link.educ_profiles = vec![[0.0; 4]; 4];
        let panel = simulate_panel(&cfg).unwrap();
        // z at age 50 is far past the burn-in for rho = 0.8.
        let base_age = 50u16;
        let series: Vec<Vec<f64>> = (0..=3u16)
            .map(|k| {
                panel
                    .obs()
                    .iter()
                    .filter(|o| o.age == base_age + k)
                    .map(|o| o.income_level.ln())
                    .collect()
            })
            .collect();
        let center = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        let base = center(&series[0]);
        let var0 = base.iter().map(|v| v * v).sum::<f64>() / base.len() as f64;
        for k in 1..=3usize {
            let lead = center(&series[k]);
            let cov = base.iter().zip(&lead).map(|(a, b)| a * b).sum::<f64>() / base.len() as f64;
            let ratio = cov / var0;
            let expect = 0.8f64.powi(k as i32);
            assert!(
                (ratio - expect).abs() < 0.02,
                "lag {k}: ratio {ratio} vs {expect}"
            );
        }
    }
}
