use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::{split_young_old, AgeWindow, SplitMode};
use mobilab::regularization::candidates::{build_candidates, residualize_candidates, CandidateTaxonomy};
use mobilab::regularization::{cd_fit_gram, gram_data, lambda_max, PenaltyConfig};

fn main() {
    let mut cfg = presets::ml_lab(1);
    cfg.n_persons = 4000;
    let panel = simulate_panel(&cfg).unwrap();
    let split = split_young_old(&panel, 27, SplitMode::Duplicate, 78).unwrap().panel;
    let tax = CandidateTaxonomy::default_for(&split);
    let mut d = build_candidates(&split, &tax).unwrap();
    residualize_candidates(&mut d);
    let p = d.n_cols();
    let g = gram_data(&d.x, &d.y, p, &d.names, true);
    let lmax = lambda_max(&g, &vec![true; p], 1.0);
    for (label, unpen) in [("pen", vec![]), ("unpen", CandidateTaxonomy::parental_interaction_names())] {
        let cfgp = PenaltyConfig { lambda: 0.01 * lmax, unpenalized: unpen, ..Default::default() };
        let fit = cd_fit_gram(&g, &cfgp).unwrap();
        let g1 = fit.coefficients[d.names.iter().position(|n| n == "parent_log_income:agec").unwrap()];
        let g2 = fit.coefficients[d.names.iter().position(|n| n == "parent_log_income:agec2").unwrap()];
        println!("{label}: plinc:agec={g1:.6} plinc:agec2={g2:.6} nsel={}", fit.n_selected);
        // top selected by |std coef|
        let mut idx: Vec<usize> = (0..p).filter(|&j| fit.std_coefficients[j] != 0.0).collect();
        idx.sort_by(|&a, &b| fit.std_coefficients[b].abs().total_cmp(&fit.std_coefficients[a].abs()));
        for &j in idx.iter().take(12) {
            println!("   {:<28} std {:+.4}", d.names[j], fit.std_coefficients[j]);
        }
    }
    println!("truth: load lin 0.0095 quad -0.00022 (per centered parent log unit)");
}
