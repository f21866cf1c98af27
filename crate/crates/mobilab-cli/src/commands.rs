//! Subcommand implementations: thin orchestration over the library with the
//! shared emission layer.

use anyhow::{bail, Context};
use mobilab::estimators::creedy::{creedy_estimate, creedy_fit, CreedyGrouping, CreedyMode};
use mobilab::estimators::geiv::geiv_diagnostics;
use mobilab::estimators::trends::{estimate_trends, TrendsSpec, TrendsVariant};
use mobilab::estimators::{
    bootstrap_se, estimate_benchmark, estimate_direct_annual, estimate_lifecycle, IgeEstimate,
    Variant,
};
use mobilab::income_process::growth::{
    growth_gradient_table, growth_on_growth_table, GradientControl, GrowthOnGrowthSpec,
};
use mobilab::panel::{AgeWindow, Panel};
use mobilab::regularization::candidates::{
    build_candidates, ml_lifecycle_estimate, residualize_candidates, CandidateTaxonomy, MlOptions,
};
use mobilab::regularization::{
    cv_select, default_lambda_grid, gram_data, lambda_max, PenaltyConfig,
};
use mobilab::rng::named_seed;

use crate::config::{self, RunConfig, SplitSetting};
use crate::emit::{Cell, CellError, Table};

pub struct CommandOutput {
    pub tables: Vec<Table>,
    pub errors: Vec<CellError>,
}

fn ige_row(label: &str, window: AgeWindow, e: &IgeEstimate) -> Vec<Cell> {
    vec![
        Cell::Str(label.to_string()),
        Cell::Str(window.to_string()),
        Cell::Num(e.slope),
        Cell::Num(e.se),
        match e.r2_first_step_lifetime {
            Some(v) => Cell::Num(v),
            None => Cell::Missing,
        },
        Cell::Num(e.r2_second_step),
        Cell::Int(e.n_persons as i64),
        Cell::Int(e.n_dropped as i64),
    ]
}

const IGE_COLS: [&str; 8] =
    ["estimator", "window", "slope", "se", "r2_first_step", "r2_second_step", "n_persons", "n_dropped"];

// ---------------------------------------------------------------------------

pub fn cmd_simulate(cfg: &RunConfig, seed: u64, out_dir: &std::path::Path) -> anyhow::Result<CommandOutput> {
    let source = cfg
        .simulate
        .clone()
        .or(cfg.panel.simulate.clone())
        .context("simulate needs a [simulate] or [panel.simulate] section")?;
    let sim = source.resolve(seed)?;
    let panel = mobilab::income_process::simulate_panel(&sim)?;
    std::fs::create_dir_all(out_dir)?;
    mobilab::panel::write_csv(
        &panel,
        &out_dir.join("persons.csv"),
        &out_dir.join("incomes.csv"),
    )?;
    let mut t = Table::new("simulate_summary", &["field", "value"]);
    t.push(vec![Cell::Str("persons".into()), Cell::Int(panel.n_persons() as i64)]);
    t.push(vec![Cell::Str("observations".into()), Cell::Int(panel.n_obs() as i64)]);
    t.push(vec![Cell::Str("seed".into()), Cell::Int(sim.seed as i64)]);
    Ok(CommandOutput { tables: vec![t], errors: vec![] })
}

pub fn cmd_estimate(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.estimate.as_ref().context("missing [estimate] section")?;
    let window = settings.window()?;
    let base = cfg.panel.load(seed, None)?;
    let panel = settings.split.apply(&base, window.hi, seed)?;
    let variant = config::parse_variant(&settings.variant)?;
    let estimate = match variant {
        Variant::Benchmark => estimate_benchmark(&panel)?,
        Variant::DirectAnnual => estimate_direct_annual(&panel, window)?,
        _ => {
            let spec = settings.to_spec()?;
            estimate_lifecycle(&panel, &spec, window)?
        }
    };
    let mut t = Table::new("estimate", &IGE_COLS);
    t.push(ige_row(variant.as_str(), window, &estimate));
    let mut tables = vec![t];
    if let Some(b) = settings.bootstrap {
        if b >= 2 {
            let spec = settings.to_spec()?;
            let se = bootstrap_se(&panel, &spec, window, b, named_seed(seed, "bootstrap"))?;
            let mut bt = Table::new("estimate_bootstrap", &["replications", "bootstrap_se"]);
            bt.push(vec![Cell::Int(b as i64), Cell::Num(se)]);
            tables.push(bt);
        }
    }
    Ok(CommandOutput { tables, errors: vec![] })
}

pub fn cmd_grid(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.grid.as_ref().context("missing [grid] section")?;
    if settings.windows.is_empty() || settings.estimators.is_empty() {
        bail!("grid needs non-empty windows and estimators");
    }
    let reps = settings.repetitions.max(1);

    // One panel (and split panels per window) per repetition.
    struct CellSpec {
        window: AgeWindow,
        estimator: String,
    }
    let mut cells = Vec::new();
    for w in &settings.windows {
        for e in &settings.estimators {
            cells.push(CellSpec { window: config::parse_window(*w)?, estimator: e.clone() });
        }
    }

    let mut per_cell: Vec<Vec<IgeEstimate>> = vec![Vec::new(); cells.len()];
    let mut errors = Vec::new();
    for rep in 0..reps {
        let rep_arg = if reps > 1 { Some(rep) } else { None };
        let base = cfg.panel.load(seed, rep_arg)?;
        // Split once per window (shared across estimators).
        let mut split_by_window = std::collections::BTreeMap::new();
        for w in &settings.windows {
            let win = config::parse_window(*w)?;
            let split = settings.split.apply(&base, win.hi, named_seed(seed, &format!("rep-{rep}")))?;
            split_by_window.insert((win.lo, win.hi), split);
        }
        let results: Vec<Result<IgeEstimate, String>> = cells
            .iter()
            .map(|cell| {
                let panel = &split_by_window[&(cell.window.lo, cell.window.hi)];
                run_one(panel, &base, &cell.estimator, cell.window, settings)
                    .map_err(|e| e.to_string())
            })
            .collect();
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok(e) => per_cell[k].push(e),
                Err(message) => errors.push(CellError {
                    cell: format!("rep{rep}/{}/{}", cells[k].estimator, cells[k].window),
                    message,
                }),
            }
        }
    }

    let mut t = Table::new(
        "grid",
        &[
            "estimator",
            "window",
            "slope",
            "se",
            "r2_first_step",
            "r2_second_step",
            "n_persons",
            "n_dropped",
            "repetitions",
            "slope_sd",
        ],
    );
    for (k, cell) in cells.iter().enumerate() {
        let res = &per_cell[k];
        if res.is_empty() {
            continue;
        }
        let mean = |f: &dyn Fn(&IgeEstimate) -> f64| -> f64 {
            res.iter().map(|e| f(e)).sum::<f64>() / res.len() as f64
        };
        let slope_mean = mean(&|e| e.slope);
        let slope_sd = if res.len() > 1 {
            let v = res.iter().map(|e| (e.slope - slope_mean).powi(2)).sum::<f64>()
                / (res.len() - 1) as f64;
            Cell::Num(v.sqrt())
        } else {
            Cell::Missing
        };
        let r2f = res.iter().filter_map(|e| e.r2_first_step_lifetime).collect::<Vec<_>>();
        t.push(vec![
            Cell::Str(cell.estimator.clone()),
            Cell::Str(cell.window.to_string()),
            Cell::Num(slope_mean),
            Cell::Num(mean(&|e| e.se)),
            if r2f.is_empty() {
                Cell::Missing
            } else {
                Cell::Num(r2f.iter().sum::<f64>() / r2f.len() as f64)
            },
            Cell::Num(mean(&|e| e.r2_second_step)),
            Cell::Int(res[0].n_persons as i64),
            Cell::Int(res[0].n_dropped as i64),
            Cell::Int(res.len() as i64),
            slope_sd,
        ]);
    }
    Ok(CommandOutput { tables: vec![t], errors })
}

fn run_one(
    panel: &Panel,
    unsplit: &Panel,
    estimator: &str,
    window: AgeWindow,
    settings: &config::GridSettings,
) -> anyhow::Result<IgeEstimate> {
    let variant = config::parse_variant(estimator)?;
    Ok(match variant {
        // The benchmark uses true lifetime incomes on the unsplit panel.
        Variant::Benchmark => estimate_benchmark(unsplit)?,
        Variant::DirectAnnual => estimate_direct_annual(unsplit, window)?,
        _ => {
            let mut spec = mobilab::estimators::EstimatorSpec::new(variant);
            if let Some(s) = settings.smearing {
                spec.smearing = s;
            }
            if let Some(p) = settings.prediction_ages {
                spec.prediction_ages = config::parse_window(p)?;
            }
            estimate_lifecycle(panel, &spec, window)?
        }
    })
}

pub fn cmd_geiv(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.geiv.as_ref().context("missing [geiv] section")?;
    let panel = cfg.panel.load(seed, None)?;
    let ages: Vec<u16> = (settings.ages[0]..=settings.ages[1]).collect();
    let g = geiv_diagnostics(&panel, &ages)?;
    let bench = estimate_benchmark(&panel).ok();
    let mut t = Table::new(
        "geiv",
        &["age", "lambda", "lambda_se", "beta_t", "beta_t_se", "beta_over_lambda", "n"],
    );
    for k in 0..g.ages.len() {
        t.push(vec![
            Cell::Int(i64::from(g.ages[k])),
            Cell::Num(g.lambda[k]),
            Cell::Num(g.lambda_se[k]),
            Cell::Num(g.beta_t[k]),
            Cell::Num(g.beta_t_se[k]),
            Cell::Num(g.beta_t[k] / g.lambda[k]),
            Cell::Int(g.n_per_age[k] as i64),
        ]);
    }
    let mut s = Table::new("geiv_summary", &["field", "value"]);
    s.push(vec![
        Cell::Str("t_star".into()),
        match g.t_star {
            Some(v) => Cell::Num(v),
            None => Cell::Missing,
        },
    ]);
    if let Some(b) = bench {
        s.push(vec![Cell::Str("benchmark_slope".into()), Cell::Num(b.slope)]);
    }
    Ok(CommandOutput { tables: vec![t, s], errors: vec![] })
}

pub fn cmd_creedy(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.creedy.as_ref().context("missing [creedy] section")?;
    let panel = cfg.panel.load(seed, None)?;
    let grouping = match settings.grouping.as_str() {
        "education" => CreedyGrouping::Education,
        "single" => CreedyGrouping::Single,
        other => bail!("unknown grouping {other:?}"),
    };
    let mode = match settings.mode.as_str() {
        "parametric" => CreedyMode::Parametric,
        "nonparametric" => CreedyMode::Nonparametric,
        other => bail!("unknown mode {other:?}"),
    };
    let model = creedy_fit(&panel, grouping, mode)?;
    let bench = estimate_benchmark(&panel)?;
    let targets = config::parse_window(settings.target_ages)?;
    let mut t = Table::new(
        "creedy",
        &["observed_age", "slope", "se", "benchmark", "direct_annual", "n"],
    );
    let mut errors = Vec::new();
    for age in settings.observed_ages[0]..=settings.observed_ages[1] {
        match creedy_estimate(&panel, &model, age, targets) {
            Ok(est) => {
                let direct = estimate_direct_annual(&panel, AgeWindow { lo: age, hi: age })
                    .map(|e| e.slope);
                t.push(vec![
                    Cell::Int(i64::from(age)),
                    Cell::Num(est.estimate.slope),
                    Cell::Num(est.estimate.se),
                    Cell::Num(bench.slope),
                    direct.map(Cell::Num).unwrap_or(Cell::Missing),
                    Cell::Int(est.estimate.n_persons as i64),
                ]);
            }
            Err(e) => errors.push(CellError { cell: format!("age{age}"), message: e.to_string() }),
        }
    }
    Ok(CommandOutput { tables: vec![t], errors })
}

pub fn cmd_trends(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.trends.as_ref().context("missing [trends] section")?;
    let panel = cfg.panel.load(seed, None)?;
    let mut t = Table::new(
        "trends",
        &["estimator", "cohorts", "slope", "se", "r2_second_step", "n_persons"],
    );
    let mut errors = Vec::new();
    // Naive fixed-window direct estimators per group.
    for w in &settings.direct_windows {
        let win = config::parse_window(*w)?;
        match mobilab::estimators::trends::direct_by_cohort(&panel, &settings.cohort_breaks, win) {
            Ok(rows) => {
                for (g, e) in rows.iter().enumerate() {
                    let (lo, hi) = group_bounds(&settings.cohort_breaks, g, &panel);
                    t.push(vec![
                        Cell::Str(format!("direct_annual {win}")),
                        Cell::Str(format!("{lo}-{hi}")),
                        Cell::Num(e.slope),
                        Cell::Num(e.se),
                        Cell::Num(e.r2_second_step),
                        Cell::Int(e.n_persons as i64),
                    ]);
                }
            }
            Err(e) => {
                errors.push(CellError { cell: format!("direct{win}"), message: e.to_string() })
            }
        }
    }
    for vname in &settings.variants {
        let variant = match vname.as_str() {
            "baseline_fe" => TrendsVariant::BaselineFe,
            "parental_fe" => TrendsVariant::ParentalFe,
            "parental_cohort_fe" => TrendsVariant::ParentalCohortFe,
            "parental_cohort_no_fe" => TrendsVariant::ParentalCohortNoFe,
            other => bail!("unknown trends variant {other:?}"),
        };
        let mut spec = TrendsSpec::new(variant);
        if let Some(p) = settings.prediction_ages {
            spec.prediction_ages = config::parse_window(p)?;
        }
        if let Some(s) = settings.smearing {
            spec.smearing = s;
        }
        match estimate_trends(&panel, &settings.cohort_breaks, &spec) {
            Ok(out) => {
                for (g, e) in out.estimates.iter().enumerate() {
                    t.push(vec![
                        Cell::Str(vname.clone()),
                        Cell::Str(format!("{}-{}", out.groups[g].0, out.groups[g].1)),
                        Cell::Num(e.slope),
                        Cell::Num(e.se),
                        Cell::Num(e.r2_second_step),
                        Cell::Int(e.n_persons as i64),
                    ]);
                }
            }
            Err(e) => errors.push(CellError { cell: vname.clone(), message: e.to_string() }),
        }
    }
    Ok(CommandOutput { tables: vec![t], errors })
}

fn group_bounds(breaks: &[i32], g: usize, panel: &Panel) -> (i32, i32) {
    let lo = breaks[g];
    let hi = if g + 1 < breaks.len() {
        breaks[g + 1] - 1
    } else {
        panel.persons().iter().map(|p| p.cohort).max().unwrap_or(lo)
    };
    (lo, hi)
}

pub fn cmd_lasso(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.lasso.as_ref().context("missing [lasso] section")?;
    let window = config::parse_window(settings.window)?;
    let base = cfg.panel.load(seed, None)?;
    let panel = settings.split.apply(&base, window.hi, seed)?;
    let est_panel = if settings.split == SplitSetting::None {
        mobilab::panel::restrict_window(&panel, window)?.panel
    } else {
        panel.clone()
    };
    let taxonomy = CandidateTaxonomy::default_for(&est_panel);
    let prediction_ages = settings
        .prediction_ages
        .map(config::parse_window)
        .transpose()?
        .unwrap_or(AgeWindow { lo: 25, hi: 58 });

    // The null-model threshold anchors the relative penalties.
    let lmax = {
        let mut d = build_candidates(&est_panel, &taxonomy)?;
        residualize_candidates(&mut d);
        let g = gram_data(&d.x, &d.y, d.n_cols(), &d.names, true);
        lambda_max(&g, &vec![true; d.n_cols()], settings.alpha.max(1e-3))
    };

    let mut runs: Vec<(String, PenaltyConfig)> = Vec::new();
    let push_run = |label: String, lambda: f64, unpen: bool, runs: &mut Vec<(String, PenaltyConfig)>| {
        let mut pc = PenaltyConfig {
            lambda,
            alpha: settings.alpha,
            ..Default::default()
        };
        if unpen {
            pc.unpenalized = CandidateTaxonomy::parental_interaction_names();
        }
        runs.push((label, pc));
    };
    for &rel in &settings.lambdas_rel {
        push_run(format!("rel{rel}"), rel * lmax, false, &mut runs);
        if settings.unpenalized_parental {
            push_run(format!("rel{rel}:not_pen"), rel * lmax, true, &mut runs);
        }
    }
    for &l in &settings.lambdas_abs {
        push_run(format!("abs{l}"), l, false, &mut runs);
        if settings.unpenalized_parental {
            push_run(format!("abs{l}:not_pen"), l, true, &mut runs);
        }
    }
    if let Some(cv) = &settings.cv {
        let mut d = build_candidates(&est_panel, &taxonomy)?;
        residualize_candidates(&mut d);
        let grid = default_lambda_grid(lmax);
        let alphas = if cv.alphas.is_empty() { vec![settings.alpha] } else { cv.alphas.clone() };
        let base_pc = PenaltyConfig::default();
        let (picked, _surface) = cv_select(
            &d.x,
            &d.y,
            d.n_cols(),
            &d.names,
            &d.person_of_row,
            &grid,
            &alphas,
            cv.k_folds,
            named_seed(seed, "folds"),
            &base_pc,
        )?;
        runs.push(("cv".into(), picked));
    }
    if runs.is_empty() {
        bail!("lasso needs lambdas_rel, lambdas_abs or cv");
    }

    let mut t = Table::new(
        "lasso",
        &[
            "run", "lambda", "lambda_rel", "alpha", "postselection", "slope", "se", "n_vars",
            "n_vars_selected", "n_persons",
        ],
    );
    let mut errors = Vec::new();
    for (label, pc) in runs {
        let opts = MlOptions {
            penalty: pc.clone(),
            postselection: settings.postselection,
            prediction_ages,
        };
        match ml_lifecycle_estimate(&panel, window, &taxonomy, &opts) {
            Ok(out) => t.push(vec![
                Cell::Str(label),
                Cell::Num(out.lambda),
                Cell::Num(out.lambda / lmax),
                Cell::Num(out.alpha),
                Cell::Str(settings.postselection.to_string()),
                Cell::Num(out.ige.slope),
                Cell::Num(out.ige.se),
                Cell::Int(out.n_candidates as i64),
                Cell::Int(out.n_selected as i64),
                Cell::Int(out.ige.n_persons as i64),
            ]),
            Err(e) => errors.push(CellError { cell: label, message: e.to_string() }),
        }
    }
    Ok(CommandOutput { tables: vec![t], errors })
}

pub fn cmd_growth(cfg: &RunConfig, seed: u64) -> anyhow::Result<CommandOutput> {
    let settings = cfg.growth.as_ref().context("missing [growth] section")?;
    let mut panel = cfg.panel.load(seed, None)?;
    if settings.remove_year_effects {
        panel = mobilab::panel::remove_year_effects(&panel)?;
    }
    let bins: Vec<AgeWindow> = settings
        .bins
        .iter()
        .map(|b| config::parse_window(*b))
        .collect::<anyhow::Result<_>>()?;
    let control_sets: Vec<Vec<GradientControl>> = if settings.control_sets.is_empty() {
        vec![vec![], vec![GradientControl::EducByBin]]
    } else {
        settings
            .control_sets
            .iter()
            .map(|set| {
                set.iter()
                    .map(|s| match s.as_str() {
                        "educ_by_bin" => Ok(GradientControl::EducByBin),
                        other => bail!("unknown control {other:?}"),
                    })
                    .collect()
            })
            .collect::<anyhow::Result<_>>()?
    };
    let mut t = Table::new(
        "growth_gradient",
        &["controls", "bin", "coef_per_100", "se_per_100", "n_obs", "omitted"],
    );
    let mut errors = Vec::new();
    for (ci, controls) in control_sets.iter().enumerate() {
        let label = if controls.is_empty() { "raw".to_string() } else { format!("set{ci}") };
        match growth_gradient_table(&panel, &bins, controls) {
            Ok(table) => {
                for row in &table.rows {
                    t.push(vec![
                        Cell::Str(label.clone()),
                        Cell::Str(row.bin.to_string()),
                        if row.omitted { Cell::Missing } else { Cell::Num(row.coefficient) },
                        if row.omitted { Cell::Missing } else { Cell::Num(row.se) },
                        Cell::Int(row.n_obs as i64),
                        Cell::Str(row.omitted.to_string()),
                    ]);
                }
            }
            Err(e) => errors.push(CellError { cell: label, message: e.to_string() }),
        }
    }
    let mut tables = vec![t];
    if !settings.g2g_windows.is_empty() {
        let windows: Vec<AgeWindow> = settings
            .g2g_windows
            .iter()
            .map(|b| config::parse_window(*b))
            .collect::<anyhow::Result<_>>()?;
        let spec = GrowthOnGrowthSpec {
            control_parent_income: settings.g2g_control_parent_income,
            control_educ: settings.g2g_control_educ,
        };
        match growth_on_growth_table(&panel, &windows, spec) {
            Ok(rows) => {
                let mut g = Table::new(
                    "growth_on_growth",
                    &[
                        "window",
                        "slope_father_growth",
                        "se",
                        "coef_parent_income_per_100",
                        "n_obs",
                        "r2",
                    ],
                );
                for r in rows {
                    g.push(vec![
                        Cell::Str(r.window.to_string()),
                        Cell::Num(r.slope_father_growth),
                        Cell::Num(r.se_father_growth),
                        r.coef_parent_income.map(Cell::Num).unwrap_or(Cell::Missing),
                        Cell::Int(r.n_obs as i64),
                        Cell::Num(r.r2),
                    ]);
                }
                tables.push(g);
            }
            Err(e) => {
                errors.push(CellError { cell: "growth_on_growth".into(), message: e.to_string() })
            }
        }
    }
    Ok(CommandOutput { tables, errors })
}
