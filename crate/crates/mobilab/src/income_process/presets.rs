//! Built-in simulation calibrations.
//!
//! The default calibration is chosen to reproduce, qualitatively, the income
//! dynamics that drive lifecycle bias: education-specific profiles that cross
//! (higher groups start lower and grow faster), a parental-income gradient in
//! income growth that is strong early in the career and fades to slightly
//! negative by the 50s, an annual-on-lifetime projection slope that rises
//! through one near midlife, and a two-step elasticity of about 0.25 in true
//! lifetime incomes. See docs/calibration.md for the derivation of each
//! number.

use super::{CohortScale, FamilyLink, FatherConfig, HipParams, SimConfig, YearScale};

/// Education-group probabilities by parental income quartile (bottom to top),
/// four groups from primary to postgraduate/college.
fn default_educ_probs() -> Vec<Vec<f64>> {
    vec![
        vec![0.45, 0.35, 0.15, 0.05],
        vec![0.35, 0.35, 0.20, 0.10],
        vec![0.25, 0.35, 0.25, 0.15],
        vec![0.10, 0.25, 0.30, 0.35],
    ]
}

/// Per-education cubic profile offsets: higher groups start lower and grow
/// faster, flattening late.
fn default_educ_profiles() -> Vec<[f64; 4]> {
    vec![
        [0.0, 0.0, 0.0, 0.0],
        [-0.04, 0.010, -0.00022, 0.0],
        [-0.12, 0.024, -0.00050, 0.0],
        [-0.28, 0.050, -0.00095, 0.0],
    ]
}

/// The default benchmark-sample calibration: cohorts 1952-1960 observed at
/// ages 25-58 with the full set of process components active.
pub fn default_benchmark(seed: u64) -> SimConfig {
    SimConfig {
        n_persons: 100_000,
        cohorts: (1952, 1960),
        age_min: 25,
        age_max: 58,
        seed,
        hip: HipParams {
            theta: [11.85, 0.050, -0.00115, 0.0],
            sigma2_alpha: 0.040,
            sigma2_beta: 0.000075,
            sigma_alpha_beta: -0.00040,
            rho: 0.85,
            pi: YearScale::constant(1.0),
            phi: YearScale::constant(1.0),
            sigma2_eta: 0.028,
            sigma2_eps: 0.020,
        },
        link: FamilyLink {
            parent_mean: 12.2,
            parent_var: 0.25,
            load_intercept: 0.1145,
            load_growth_linear: 0.0095,
            load_growth_quad: -0.00022,
            load_growth_on_growth: 0.0,
            educ_probs_by_parent: default_educ_probs(),
            educ_profiles: default_educ_profiles(),
            cohort_growth_scale: vec![],
        },
        fathers: None,
        ml_covariates: false,
    }
}

/// A single-factor configuration: all individual heterogeneity and the whole
/// parental link load on one common age profile (1 + s h), with no
/// transitory noise. Under this process annual income at every age is the
/// same index scaled differently, so the annual-on-parent slope equals the
/// projection slope times the lifetime elasticity at every age.
pub fn single_index(seed: u64) -> SimConfig {
    let s = 0.09;
    let sigma2_alpha = 0.060f64;
    let mut cfg = default_benchmark(seed);
    cfg.hip = HipParams {
        theta: [11.9, 0.045, -0.00090, 0.0],
        sigma2_alpha,
        sigma2_beta: s * s * sigma2_alpha,
        sigma_alpha_beta: s * sigma2_alpha,
        rho: 0.0,
        pi: YearScale::constant(1.0),
        phi: YearScale::constant(1.0),
        sigma2_eta: 0.0,
        sigma2_eps: 0.0,
    };
    cfg.link.load_intercept = 0.20;
    cfg.link.load_growth_linear = 0.20 * s;
    cfg.link.load_growth_quad = 0.0;
    // Education independent of parental income, no group offsets: the single
    // index is the only heterogeneity.
    cfg.link.educ_probs_by_parent = vec![vec![0.25; 4]; 4];
    cfg.link.educ_profiles = vec![[0.0; 4]; 4];
    cfg
}

/// Fan-out heterogeneity plus a mean-reverting transitory component: the
/// stress case for rank-preserving profile reconstruction.
pub fn fanout_with_noise(seed: u64) -> SimConfig {
    let mut cfg = single_index(seed);
    cfg.hip.rho = 0.85;
    cfg.hip.sigma2_eta = 0.030;
    cfg.hip.sigma2_eps = 0.015;
    cfg
}

/// Noise-free fan-out: every person keeps an age-constant standardized
/// score, so profile reconstruction from one observation is exact.
pub fn fanout_noise_free(seed: u64) -> SimConfig {
    single_index(seed)
}

/// A configuration in which rank-preserving reconstruction overstates the
/// elasticity: the parental link is a pure level shift (so the true
/// elasticity equals the intercept loading at every age), while cross-person
/// dispersion fans out strongly with age through unlinked growth
/// heterogeneity, education offsets and a persistent mean-reverting
/// component. Treating the dispersion at the observed age as a permanent
/// rank then scales the parental signal up by the dispersion ratio.
pub fn creedy_lab(seed: u64) -> SimConfig {
    let mut cfg = default_benchmark(seed);
    cfg.hip = HipParams {
        theta: [11.8, 0.045, -0.00060, 0.0],
        sigma2_alpha: 0.030,
        sigma2_beta: 0.00020,
        sigma_alpha_beta: 0.0,
        rho: 0.85,
        pi: YearScale::constant(1.0),
        phi: YearScale::constant(1.0),
        sigma2_eta: 0.040,
        sigma2_eps: 0.020,
    };
    cfg.link.load_intercept = 0.25;
    cfg.link.load_growth_linear = 0.0;
    cfg.link.load_growth_quad = 0.0;
    cfg.link.educ_probs_by_parent = vec![vec![0.25; 4]; 4];
    // Education fans out late in the career (quadratic offsets).
    cfg.link.educ_profiles = vec![
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.00050, 0.0],
        [0.0, 0.0, 0.00105, 0.0],
        [0.0, 0.0, 0.00180, 0.0],
    ];
    cfg
}

/// Trends-sample calibration: cohorts 1950-1989, growth loadings doubled for
/// the 1980s cohorts, and a common profile shape proportional to the
/// parental growth gradient so that cohort-interaction terms span the truth.
pub fn trends(seed: u64) -> SimConfig {
    let mut cfg = default_benchmark(seed);
    cfg.cohorts = (1950, 1989);
    cfg.hip.theta = [11.85, 0.052, -0.00110, 0.0];
    cfg.link.load_intercept = 0.12;
    cfg.link.load_growth_linear = 0.0100;
    cfg.link.load_growth_quad = -0.00021;
    cfg.link.cohort_growth_scale = vec![CohortScale { cohort_lo: 1980, cohort_hi: 1989, scale: 2.0 }];
    // Education level shifts only, so the shared age profile is the common
    // cubic and the standardized profile matches the growth-gradient shape.
    cfg.link.educ_profiles = vec![
        [0.00, 0.0, 0.0, 0.0],
        [0.08, 0.0, 0.0, 0.0],
        [0.16, 0.0, 0.0, 0.0],
        [0.30, 0.0, 0.0, 0.0],
    ];
    cfg
}

/// Two-generation configuration with simulated father profiles, for
/// growth-on-growth analyses and the two-step parental income construction.
pub fn two_generation(seed: u64) -> SimConfig {
    let mut cfg = default_benchmark(seed);
    cfg.fathers = Some(FatherConfig {
        hip: HipParams {
            theta: [11.9, 0.048, -0.00105, 0.0],
            sigma2_alpha: 0.060,
            sigma2_beta: 0.000090,
            sigma_alpha_beta: -0.00030,
            rho: 0.85,
            pi: YearScale::constant(1.0),
            phi: YearScale::constant(1.0),
            sigma2_eta: 0.008,
            sigma2_eps: 0.040,
        },
        cohort_offset: 28,
        age_min: 25,
        age_max: 58,
    });
    // A small direct growth linkage; most of the young-age association runs
    // through the father-lifetime channel and fades with age.
    cfg.link.load_growth_on_growth = 0.02;
    cfg
}

/// The ML-lab configuration: the default process plus the wide person-level
/// covariate set used by the penalized first step.
pub fn ml_lab(seed: u64) -> SimConfig {
    let mut cfg = default_benchmark(seed);
    cfg.n_persons = 10_000;
    cfg.ml_covariates = true;
    cfg
}
