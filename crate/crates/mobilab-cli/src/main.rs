//! `mobilab` — estimate intergenerational income elasticities from panel
//! data, benchmark the estimators on synthetic income processes, and emit
//! the tables behind every experiment.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::RunConfig;
use emit::Format;

#[derive(Parser)]
#[command(name = "mobilab", version, about = "Lifecycle estimators of income mobility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Run seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Emission formats.
    #[arg(long, value_parser = ["csv", "md"], default_values = ["csv", "md"])]
    format: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel and write persons.csv / incomes.csv.
    Simulate(CommonArgs),
    /// Run one estimator on one window.
    Estimate(CommonArgs),
    /// Run a window-by-estimator grid, optionally repeated over seeds.
    Grid(CommonArgs),
    /// Per-age projection slopes of annual on lifetime income.
    Geiv(CommonArgs),
    /// Rank-preserving profile reconstruction by observed age.
    Creedy(CommonArgs),
    /// Cohort-trend estimators with per-group second steps.
    Trends(CommonArgs),
    /// Penalized (lasso / elastic net) first-step estimation.
    Lasso(CommonArgs),
    /// Growth-gradient and growth-on-growth regressions.
    Growth(CommonArgs),
}

fn main() {
    if let Ok(v) = std::env::var("MOBILAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                mobilab::exec::init_threads(Some(n));
            }
            _ => eprintln!("warning: ignoring invalid MOBILAB_THREADS={v}"),
        }
    }
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(had_cell_errors) => {
            if had_cell_errors {
                eprintln!("completed with cell-level errors; see errors.csv");
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (name, args): (&str, &CommonArgs) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Estimate(a) => ("estimate", a),
        Command::Grid(a) => ("grid", a),
        Command::Geiv(a) => ("geiv", a),
        Command::Creedy(a) => ("creedy", a),
        Command::Trends(a) => ("trends", a),
        Command::Lasso(a) => ("lasso", a),
        Command::Growth(a) => ("growth", a),
    };
    let cfg = RunConfig::from_path(&args.config)?;
    let seed = args
        .seed
        .or(cfg.seed)
        .context("a seed is required (--seed or seed = ... in the config)")?;

    let out = match name {
        "simulate" => commands::cmd_simulate(&cfg, seed, &args.out)?,
        "estimate" => commands::cmd_estimate(&cfg, seed)?,
        "grid" => commands::cmd_grid(&cfg, seed)?,
        "geiv" => commands::cmd_geiv(&cfg, seed)?,
        "creedy" => commands::cmd_creedy(&cfg, seed)?,
        "trends" => commands::cmd_trends(&cfg, seed)?,
        "lasso" => commands::cmd_lasso(&cfg, seed)?,
        "growth" => commands::cmd_growth(&cfg, seed)?,
        _ => unreachable!(),
    };

    let formats: Vec<Format> = args
        .format
        .iter()
        .map(|f| if f == "md" { Format::Md } else { Format::Csv })
        .collect();
    for table in &out.tables {
        for &fmt in &formats {
            let path = emit::write_table(table, &args.out, fmt)?;
            eprintln!("wrote {}", path.display());
        }
    }
    let had_errors = emit::write_manifest(&out.errors, &args.out)?;
    Ok(had_errors)
}
