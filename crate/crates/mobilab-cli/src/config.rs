//! TOML run configurations for every subcommand, and panel-source
//! resolution (simulate from a preset/spec, or load CSV files).

use anyhow::{bail, Context};
use mobilab::income_process::{presets, simulate_panel, SimConfig};
use mobilab::panel::{load_csv, AgeWindow, Panel, SchemaOptions, SplitMode};
use mobilab::rng::named_seed;
use serde::Deserialize;

fn window_from(pair: [u16; 2]) -> anyhow::Result<AgeWindow> {
    Ok(AgeWindow::new(pair[0], pair[1])?)
}

/// Simulation source: a named preset with overrides, or a full process
/// specification under `process`.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateSource {
    pub preset: Option<String>,
    pub n_persons: Option<usize>,
    pub cohorts: Option<(i32, i32)>,
    pub ml_covariates: Option<bool>,
    pub seed: Option<u64>,
    pub process: Option<SimConfig>,
}

impl SimulateSource {
    pub fn resolve(&self, run_seed: u64) -> anyhow::Result<SimConfig> {
        let seed = self.seed.unwrap_or(named_seed(run_seed, "simulation"));
        let mut cfg = match (&self.process, self.preset.as_deref()) {
            (Some(p), None) => p.clone(),
            (None, preset) => match preset.unwrap_or("default_benchmark") {
                "default_benchmark" => presets::default_benchmark(seed),
                "single_index" => presets::single_index(seed),
                "fanout_noise_free" => presets::fanout_noise_free(seed),
                "fanout_with_noise" => presets::fanout_with_noise(seed),
                "creedy_lab" => presets::creedy_lab(seed),
                "trends" => presets::trends(seed),
                "two_generation" => presets::two_generation(seed),
                "ml_lab" => presets::ml_lab(seed),
                other => bail!("unknown preset {other:?}"),
            },
            (Some(_), Some(_)) => bail!("give either `preset` or `process`, not both"),
        };
        cfg.seed = seed;
        if let Some(n) = self.n_persons {
            cfg.n_persons = n;
        }
        if let Some(c) = self.cohorts {
            cfg.cohorts = c;
        }
        if let Some(m) = self.ml_covariates {
            cfg.ml_covariates = m;
        }
        Ok(cfg)
    }
}

/// Where the panel comes from.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PanelSource {
    /// CSV pair.
    pub persons: Option<String>,
    pub incomes: Option<String>,
    #[serde(default)]
    pub strict: Option<bool>,
    pub age_min: Option<u16>,
    pub age_max: Option<u16>,
    pub educ_groups: Option<u8>,
    /// Synthetic source.
    pub simulate: Option<SimulateSource>,
    /// Optional calendar-year restriction applied after loading.
    pub year_range: Option<(i32, i32)>,
    /// Optional bottom-coding floor applied after loading.
    pub bottom_code: Option<f64>,
}

impl PanelSource {
    /// Materialize the panel. `rep` perturbs the simulation seed for
    /// repeated Monte Carlo draws.
    pub fn load(&self, run_seed: u64, rep: Option<usize>) -> anyhow::Result<Panel> {
        let mut panel = match (&self.simulate, &self.persons, &self.incomes) {
            (Some(sim), None, None) => {
                let mut cfg = sim.resolve(run_seed)?;
                if let Some(r) = rep {
                    cfg.seed = named_seed(cfg.seed, &format!("rep-{r}"));
                }
                simulate_panel(&cfg)?
            }
            (None, Some(p), Some(i)) => {
                if rep.is_some() {
                    bail!("repetitions require a simulated panel source");
                }
                let opts = SchemaOptions {
                    strict: self.strict.unwrap_or(true),
                    age_min: self.age_min.unwrap_or(25),
                    age_max: self.age_max.unwrap_or(58),
                    educ_groups: self.educ_groups.unwrap_or(4),
                };
                let report = load_csv(std::path::Path::new(p), std::path::Path::new(i), &opts)
                    .with_context(|| format!("loading {p} / {i}"))?;
                for e in report.row_errors.iter().take(10) {
                    eprintln!("warning: line {}: {}", e.line, e.message);
                }
                report.panel
            }
            _ => bail!("panel source needs either [panel.simulate] or persons+incomes paths"),
        };
        if let Some((lo, hi)) = self.year_range {
            panel = mobilab::panel::restrict_years(&panel, lo, hi)?.panel;
        }
        if let Some(floor) = self.bottom_code {
            panel = mobilab::panel::bottom_code(&panel, floor)?.0;
        }
        Ok(panel)
    }
}

/// Young/old profile splitting before estimation.
#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitSetting {
    #[default]
    None,
    RandomAssign,
    Duplicate,
}

impl SplitSetting {
    pub fn apply(self, panel: &Panel, threshold: u16, run_seed: u64) -> anyhow::Result<Panel> {
        let mode = match self {
            SplitSetting::None => return Ok(panel.clone()),
            SplitSetting::RandomAssign => SplitMode::RandomAssign,
            SplitSetting::Duplicate => SplitMode::Duplicate,
        };
        Ok(mobilab::panel::split_young_old(panel, threshold, mode, named_seed(run_seed, "split"))?
            .panel)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    pub variant: String,
    pub window: [u16; 2],
    #[serde(default)]
    pub split: SplitSetting,
    pub smearing: Option<bool>,
    pub first_step_mode: Option<String>,
    pub prediction_ages: Option<[u16; 2]>,
    pub bottom_code_predictions: Option<f64>,
    pub slope_level_iterations: Option<usize>,
    /// Bootstrap replications for an SE that includes first-step error.
    pub bootstrap: Option<usize>,
}

pub fn parse_variant(s: &str) -> anyhow::Result<mobilab::estimators::Variant> {
    use mobilab::estimators::Variant as V;
    Ok(match s {
        "benchmark" => V::Benchmark,
        "direct_annual" => V::DirectAnnual,
        "baseline_fe" => V::BaselineFe,
        "parental_linear_fe" => V::ParentalLinearFe,
        "parental_quad_fe" => V::ParentalQuadFe,
        "parental_quad_no_fe" => V::ParentalQuadNoFe,
        "slope_level_quad" => V::SlopeLevelQuad,
        other => bail!("unknown estimator variant {other:?}"),
    })
}

impl EstimatorSettings {
    pub fn to_spec(&self) -> anyhow::Result<mobilab::estimators::EstimatorSpec> {
        use mobilab::regression::Response;
        let mut spec = mobilab::estimators::EstimatorSpec::new(parse_variant(&self.variant)?);
        if let Some(m) = &self.first_step_mode {
            spec = spec.with_mode(match m.as_str() {
                "log_income" | "logs" => Response::LogIncome,
                "level_income" | "levels" => Response::LevelIncome,
                other => bail!("unknown first_step_mode {other:?}"),
            });
        }
        if let Some(s) = self.smearing {
            spec.smearing = s && spec.first_step_mode == Response::LogIncome;
        }
        if let Some(p) = self.prediction_ages {
            spec.prediction_ages = window_from(p)?;
        }
        if let Some(b) = self.bottom_code_predictions {
            spec.bottom_code_predictions = Some(b);
        }
        if let Some(i) = self.slope_level_iterations {
            spec.slope_level_iterations = i;
        }
        Ok(spec)
    }

    pub fn window(&self) -> anyhow::Result<AgeWindow> {
        window_from(self.window)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub windows: Vec<[u16; 2]>,
    pub estimators: Vec<String>,
    #[serde(default)]
    pub split: SplitSetting,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub smearing: Option<bool>,
    pub prediction_ages: Option<[u16; 2]>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeivSettings {
    pub ages: [u16; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreedySettings {
    #[serde(default = "default_grouping")]
    pub grouping: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub observed_ages: [u16; 2],
    pub target_ages: [u16; 2],
}

fn default_grouping() -> String {
    "education".into()
}

fn default_mode() -> String {
    "nonparametric".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendsSettings {
    pub cohort_breaks: Vec<i32>,
    pub variants: Vec<String>,
    #[serde(default)]
    pub direct_windows: Vec<[u16; 2]>,
    pub prediction_ages: Option<[u16; 2]>,
    pub smearing: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoSettings {
    pub window: [u16; 2],
    #[serde(default)]
    pub split: SplitSetting,
    /// Penalties relative to the null-model threshold.
    #[serde(default)]
    pub lambdas_rel: Vec<f64>,
    /// Absolute penalties (for reproduction attempts with known scaling).
    #[serde(default)]
    pub lambdas_abs: Vec<f64>,
    #[serde(default = "one_f")]
    pub alpha: f64,
    /// Also run each penalty with the parental interactions exempt.
    #[serde(default)]
    pub unpenalized_parental: bool,
    #[serde(default)]
    pub postselection: bool,
    pub prediction_ages: Option<[u16; 2]>,
    /// Cross-validated selection instead of a fixed grid.
    pub cv: Option<CvSettings>,
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    pub k_folds: usize,
    #[serde(default)]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSettings {
    pub bins: Vec<[u16; 2]>,
    /// Control sets, one table column block per set: entries may contain
    /// "educ_by_bin".
    #[serde(default)]
    pub control_sets: Vec<Vec<String>>,
    #[serde(default)]
    pub g2g_windows: Vec<[u16; 2]>,
    #[serde(default)]
    pub g2g_control_parent_income: bool,
    #[serde(default)]
    pub g2g_control_educ: bool,
    #[serde(default = "yes")]
    pub remove_year_effects: bool,
}

fn yes() -> bool {
    true
}

/// The full run configuration: a panel source plus one command section.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub panel: PanelSource,
    pub simulate: Option<SimulateSource>,
    pub estimate: Option<EstimatorSettings>,
    pub grid: Option<GridSettings>,
    pub geiv: Option<GeivSettings>,
    pub creedy: Option<CreedySettings>,
    pub trends: Option<TrendsSettings>,
    pub lasso: Option<LassoSettings>,
    pub growth: Option<GrowthSettings>,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }
}

pub fn parse_window(pair: [u16; 2]) -> anyhow::Result<AgeWindow> {
    window_from(pair)
}
