//! Probe: cohort-trend estimators against per-group ground truth when the
//! parental growth loading doubles for the last cohort group.
use mobilab::estimators::trends::{
    direct_by_cohort, estimate_trends, filter_by_cohort, TrendsSpec, TrendsVariant,
};
use mobilab::estimators::estimate_benchmark;
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::{restrict_years, AgeWindow};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let n: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(40_000);
    let mut cfg = presets::trends(seed);
    cfg.n_persons = n;
    let full = simulate_panel(&cfg).unwrap();
    let breaks = [1950, 1960, 1970, 1980];
    // Ground truth per cohort group from the complete profiles.
    print!("truth:     ");
    for g in 0..4 {
        let hi = if g < 3 { breaks[g + 1] - 1 } else { 1989 };
        let sub = filter_by_cohort(&full, breaks[g], hi).unwrap();
        print!("  {:.4}", estimate_benchmark(&sub).unwrap().slope);
    }
    println!();
    // Observed sample: recent cohorts only at young ages.
    let panel = restrict_years(&full, 1975, 2018).unwrap().panel;
    let t0 = std::time::Instant::now();
    for v in [TrendsVariant::ParentalCohortFe, TrendsVariant::ParentalCohortNoFe, TrendsVariant::ParentalFe, TrendsVariant::BaselineFe] {
        let out = estimate_trends(&panel, &breaks, &TrendsSpec::new(v)).unwrap();
        print!("{v:?}:");
        for e in &out.estimates {
            print!("  {:.4}", e.slope);
        }
        if !out.interaction_coefs.is_empty() {
            print!("  [last inter: {:+.4}]", out.interaction_coefs.last().unwrap().1);
        }
        println!("  ({:?})", t0.elapsed());
    }
    print!("direct 25-30:");
    for e in direct_by_cohort(&panel, &breaks, AgeWindow { lo: 25, hi: 30 }).unwrap() {
        print!("  {:.4}", e.slope);
    }
    println!();
    print!("direct all:  ");
    for e in direct_by_cohort(&panel, &breaks, AgeWindow { lo: 25, hi: 58 }).unwrap() {
        print!("  {:.4}", e.slope);
    }
    println!();
}
