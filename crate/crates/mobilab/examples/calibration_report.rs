//! Prints the headline moments of the built-in calibrations: the benchmark
//! elasticity, the age pattern of the direct annual estimator, the
//! growth-gradient table, the annual-on-lifetime projection profile and the
//! reconstruction diagnostics.
//!
//! Run with `cargo run --release -p mobilab --example calibration_report`.

use mobilab::estimators::geiv::geiv_diagnostics;
use mobilab::estimators::{estimate_benchmark, estimate_direct_annual};
use mobilab::income_process::growth::{growth_gradient_table, GradientControl};
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::AgeWindow;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100_000);

    let mut cfg = presets::default_benchmark(seed);
    cfg.n_persons = n;
    let t0 = std::time::Instant::now();
    let panel = simulate_panel(&cfg).unwrap();
    println!("simulate: {:?} ({} obs)", t0.elapsed(), panel.n_obs());

    let bench = estimate_benchmark(&panel).unwrap();
    println!("benchmark slope: {:.4} (se {:.4})", bench.slope, bench.se);

    print!("direct annual:");
    for hi in [27u16, 30, 35, 40, 45] {
        let e = estimate_direct_annual(&panel, AgeWindow { lo: 25, hi }).unwrap();
        print!(" 25-{hi}: {:.4}", e.slope);
    }
    println!();

    let bins: Vec<AgeWindow> = [25u16, 30, 35, 40, 45, 50]
        .iter()
        .map(|&lo| AgeWindow { lo, hi: lo + 5 })
        .collect();
    let grad = growth_gradient_table(&panel, &bins, &[]).unwrap();
    print!("gradient (per 100 log units, raw):");
    for r in &grad.rows {
        print!(" {}: {:.3}", r.bin, r.coefficient);
    }
    println!();
    let grad2 = growth_gradient_table(&panel, &bins, &[GradientControl::EducByBin]).unwrap();
    print!("gradient (per 100 log units, educ):");
    for r in &grad2.rows {
        print!(" {}: {:.3}", r.bin, r.coefficient);
    }
    println!();

    let ages: Vec<u16> = (26..=56).step_by(2).collect();
    let g = geiv_diagnostics(&panel, &ages).unwrap();
    print!("lambda:");
    for (a, l) in g.ages.iter().zip(&g.lambda) {
        print!(" {a}:{l:.3}");
    }
    println!();
    print!("beta_t:");
    for (a, b) in g.ages.iter().zip(&g.beta_t) {
        print!(" {a}:{b:.3}");
    }
    println!();
    println!("t_star: {:?}", g.t_star);

    // Education shares and per-age income dispersion.
    let mut shares = [0usize; 8];
    for p in panel.persons() {
        shares[usize::from(p.educ_group)] += 1;
    }
    println!("educ shares: {:?}", &shares[..4]);
    print!("sd(log y):");
    for age in [25u16, 30, 40, 50, 58] {
        let v: Vec<f64> =
            panel.obs().iter().filter(|o| o.age == age).map(|o| o.income_level.ln()).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
        print!(" {age}:{sd:.3}");
    }
    println!();
    println!("total: {:?}", t0.elapsed());
}
