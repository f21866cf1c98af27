//! Probe: penalized lifecycle estimates on the young window with the wide
//! candidate set, versus the parametric first step.
use mobilab::estimators::{estimate_benchmark, estimate_lifecycle, EstimatorSpec, Variant};
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::{split_young_old, AgeWindow, SplitMode};
use mobilab::regularization::candidates::{
    build_candidates, ml_lifecycle_estimate, CandidateTaxonomy, MlOptions,
};
use mobilab::regularization::{gram_data, lambda_max, PenaltyConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(8000);
    let mut cfg = presets::ml_lab(seed);
    cfg.n_persons = n;
    let t0 = std::time::Instant::now();
    let panel = simulate_panel(&cfg).unwrap();
    let window = AgeWindow { lo: 25, hi: 27 };
    let split = split_young_old(&panel, window.hi, SplitMode::Duplicate, seed ^ 77).unwrap().panel;
    let bench = estimate_benchmark(&panel).unwrap();
    println!("benchmark {:.4}  [{:?}]", bench.slope, t0.elapsed());

    let spec = EstimatorSpec::new(Variant::ParentalQuadFe).with_smearing(false);
    let quad = estimate_lifecycle(&split, &spec, window).unwrap();
    println!("parental quad fe {:.4}  [{:?}]", quad.slope, t0.elapsed());

    let tax = CandidateTaxonomy::default_for(&split);
    // Probe lambda_max once.
    {
        let mut d = build_candidates(&split, &tax).unwrap();
        mobilab::regularization::candidates::residualize_candidates(&mut d);
        let g = gram_data(&d.x, &d.y, d.n_cols(), &d.names, true);
        let lmax = lambda_max(&g, &vec![true; d.n_cols()], 1.0);
        println!("n_candidates {}  lambda_max {:.5}  [{:?}]", d.n_cols(), lmax, t0.elapsed());
        for rel in [0.3, 0.1, 0.03, 0.01, 0.003, 0.001] {
            let pen = PenaltyConfig { lambda: rel * lmax, ..Default::default() };
            let opts = MlOptions {
                penalty: pen.clone(),
                postselection: false,
                prediction_ages: AgeWindow { lo: 25, hi: 58 },
            };
            let a = ml_lifecycle_estimate(&split, window, &tax, &opts).unwrap();
            let mut pen_un = pen.clone();
            pen_un.unpenalized = CandidateTaxonomy::parental_interaction_names();
            let opts_un = MlOptions { penalty: pen_un, ..opts.clone() };
            let b = ml_lifecycle_estimate(&split, window, &tax, &opts_un).unwrap();
            println!(
                "rel {rel:<6}: pen {:.4} (sel {:3})   unpen {:.4} (sel {:3})   [{:?}]",
                a.ige.slope, a.n_selected, b.ige.slope, b.n_selected, t0.elapsed()
            );
        }
    }
}
