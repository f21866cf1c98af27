//! Runs the two-step estimator variants under the split-profile protocol and
//! prints one row per (window, variant), next to the lifetime benchmark.
//!
//! `cargo run --release -p mobilab --example estimator_report [seed] [n]`

use mobilab::estimators::{estimate_benchmark, estimate_lifecycle, EstimatorSpec, Variant};
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::{split_young_old, AgeWindow, SplitMode};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let mut cfg = presets::default_benchmark(seed);
    cfg.n_persons = n;
    let panel = simulate_panel(&cfg).unwrap();
    let bench = estimate_benchmark(&panel).unwrap();
    println!("benchmark: {:.4} (se {:.4})", bench.slope, bench.se);

    let variants = [
        Variant::BaselineFe,
        Variant::ParentalLinearFe,
        Variant::ParentalQuadFe,
        Variant::ParentalQuadNoFe,
        Variant::SlopeLevelQuad,
    ];
    for hi in [27u16, 30, 35, 40, 45] {
        let window = AgeWindow { lo: 25, hi };
        let t0 = std::time::Instant::now();
        let split = split_young_old(&panel, hi, SplitMode::RandomAssign, seed ^ 0xa5a5).unwrap();
        print!("{window}:");
        for v in variants {
            let spec = EstimatorSpec::new(v);
            match estimate_lifecycle(&split.panel, &spec, window) {
                Ok(e) => print!(
                    "  {}={:.4} (r1 {:.2})",
                    v.as_str(),
                    e.slope,
                    e.r2_first_step_lifetime.unwrap_or(f64::NAN)
                ),
                Err(err) => print!("  {}=ERR[{err}]", v.as_str()),
            }
        }
        println!("  [{:?}]", t0.elapsed());
    }
}
