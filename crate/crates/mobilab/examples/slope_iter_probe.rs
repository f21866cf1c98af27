use mobilab::estimators::{estimate_lifecycle, EstimatorSpec, Variant};
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::{split_young_old, AgeWindow, SplitMode};

fn main() {
    let mut cfg = presets::default_benchmark(76);
    cfg.n_persons = 20_000;
    let panel = simulate_panel(&cfg).unwrap();
    for hi in [30u16, 35, 45] {
        let window = AgeWindow { lo: 25, hi };
        let split = split_young_old(&panel, hi, SplitMode::RandomAssign, 5).unwrap().panel;
        print!("window {window}:");
        for iters in [1usize, 2, 3, 5, 10, 25] {
            let mut spec = EstimatorSpec::new(Variant::SlopeLevelQuad);
            spec.slope_level_iterations = iters;
            let e = estimate_lifecycle(&split, &spec, window).unwrap();
            print!("  it{iters}={:.4}", e.slope);
        }
        println!();
    }
}
