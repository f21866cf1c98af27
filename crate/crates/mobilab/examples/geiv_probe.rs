//! Probe: the annual-on-parent slope equals the projection slope times the
//! benchmark elasticity under the single-factor configuration.
use mobilab::estimators::geiv::geiv_diagnostics;
use mobilab::estimators::estimate_benchmark;
use mobilab::income_process::{presets, simulate_panel};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = presets::single_index(seed);
    cfg.n_persons = 100_000;
    let panel = simulate_panel(&cfg).unwrap();
    let bench = estimate_benchmark(&panel).unwrap();
    println!("benchmark: {:.4}", bench.slope);
    let ages: Vec<u16> = (26..=54).step_by(2).collect();
    let g = geiv_diagnostics(&panel, &ages).unwrap();
    println!("t_star: {:?}", g.t_star);
    for k in 0..g.ages.len() {
        let ratio = g.beta_t[k] / g.lambda[k];
        // SE of the ratio, first order: se(beta)/lambda.
        let se = g.beta_t_se[k] / g.lambda[k];
        let dev = (ratio - bench.slope) / se.max(1e-12);
        println!(
            "age {:2}: lambda {:.3} beta {:.4} ratio {:.4} dev {:+.2} se",
            g.ages[k], g.lambda[k], g.beta_t[k], ratio, dev
        );
    }
}
