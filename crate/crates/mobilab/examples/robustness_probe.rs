//! Probes: retransformation correction, observation thinning, subsampling.
use mobilab::estimators::{
    estimate_benchmark, estimate_lifecycle, first_step_fit, predict_lifetime, thin_observations,
    EstimatorSpec, Variant,
};
use mobilab::income_process::{presets, simulate_panel, YearScale};
use mobilab::panel::{split_young_old, AgeWindow, Panel, SplitMode};
use mobilab::rng::substream;
use rand::Rng;

fn main() {
    // --- smearing: lognormal residuals sigma = 0.5 ---
    let mut cfg = presets::default_benchmark(3);
    cfg.n_persons = 20_000;
    cfg.hip.rho = 0.0;
    cfg.hip.sigma2_eta = 0.0;
    cfg.hip.sigma2_eps = 0.25; // sigma = 0.5
    cfg.hip.phi = YearScale::constant(1.0);
    let panel = simulate_panel(&cfg).unwrap();
    let window = AgeWindow { lo: 25, hi: 58 };
    let spec = EstimatorSpec::new(Variant::ParentalQuadFe);
    let profile = first_step_fit(&panel, &spec, window).unwrap();
    let naive = predict_lifetime(&profile, &panel, window, false, None).unwrap();
    let smear = predict_lifetime(&profile, &panel, window, true, None).unwrap();
    let t = 34.0;
    let mean_level = |p: &Panel, lt: &[Option<f64>]| -> (f64, f64) {
        let mut pred = 0.0;
        let mut actual = 0.0;
        let mut n = 0.0;
        for i in 0..p.n_persons() {
            if let Some(l) = lt[i] {
                pred += l.exp() / t;
                actual += p.obs_for(i).iter().map(|o| o.income_level).sum::<f64>() / t;
                n += 1.0;
            }
        }
        (pred / n, actual / n)
    };
    let (pn, an) = mean_level(&panel, &naive.log_lifetime);
    let (ps, as_) = mean_level(&panel, &smear.log_lifetime);
    println!("naive mean pred {:.0} vs actual {:.0}, ratio {:.4}", pn, an, pn / an);
    println!("smear mean pred {:.0} vs actual {:.0}, ratio {:.4}", ps, as_, ps / as_);

    // --- thinning to 2 obs inside 25-30, parental quad fe ---
    let mut cfg = presets::default_benchmark(4);
    cfg.n_persons = 50_000;
    let panel = simulate_panel(&cfg).unwrap();
    let window = AgeWindow { lo: 25, hi: 30 };
    let split = split_young_old(&panel, 30, SplitMode::RandomAssign, 99).unwrap().panel;
    let full = estimate_lifecycle(&split, &EstimatorSpec::new(Variant::ParentalQuadFe), window).unwrap();
    let mut mean = 0.0;
    let k = 8;
    for s in 0..k {
        let thinned = thin_observations(&split, 2, window, 1000 + s).unwrap();
        let e = estimate_lifecycle(&thinned, &EstimatorSpec::new(Variant::ParentalQuadFe), window).unwrap();
        mean += e.slope / k as f64;
    }
    println!("thinning: full {:.4} vs mean thinned {:.4}", full.slope, mean);

    // --- 1/64 subsample ---
    let bench_full = estimate_benchmark(&panel).unwrap();
    let mut slopes = Vec::new();
    for rep in 0..16u64 {
        let mut rng = substream(7, "subsample", rep);
        let keep: Vec<usize> =
            (0..panel.n_persons()).filter(|_| rng.random::<f64>() < 1.0 / 64.0).collect();
        let mut persons = Vec::new();
        let mut obs = Vec::new();
        for (k2, &i) in keep.iter().enumerate() {
            persons.push(panel.persons()[i].clone());
            for o in panel.obs_for(i) {
                obs.push(mobilab::panel::IncomeObs { person: k2 as u32, ..*o });
            }
        }
        let sub = Panel::new(persons, obs, panel.meta.clone()).unwrap();
        let split = split_young_old(&sub, 30, SplitMode::RandomAssign, rep).unwrap().panel;
        let e = estimate_lifecycle(&split, &EstimatorSpec::new(Variant::ParentalQuadFe), window).unwrap();
        slopes.push(e.slope);
    }
    let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let sd = (slopes.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt();
    println!("subsample 1/64: mean {:.4} (sd {:.4}) vs benchmark {:.4}", m, sd, bench_full.slope);
}
