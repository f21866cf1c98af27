//! Prints a digest of simulation + fit outputs, for comparing the parallel
//! and sequential builds bit for bit.
use mobilab::estimators::{estimate_lifecycle, EstimatorSpec, Variant};
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::{split_young_old, AgeWindow, SplitMode};

fn main() {
    let mut cfg = presets::default_benchmark(42);
    cfg.n_persons = 5000;
    let panel = simulate_panel(&cfg).unwrap();
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |bits: u64| {
        h ^= bits;
        h = h.wrapping_mul(0x100000001b3);
    };
    for o in panel.obs() {
        mix(o.income_level.to_bits());
    }
    let split = split_young_old(&panel, 30, SplitMode::RandomAssign, 7).unwrap().panel;
    let e = estimate_lifecycle(&split, &EstimatorSpec::new(Variant::ParentalQuadFe), AgeWindow { lo: 25, hi: 30 }).unwrap();
    mix(e.slope.to_bits());
    mix(e.se.to_bits());
    println!("digest {h:016x} slope {:.17}", e.slope);
}
