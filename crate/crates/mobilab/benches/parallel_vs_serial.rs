//! Benchmarks of the data-parallel kernels: panel simulation, the first-step
//! fixed-effects fit, and the penalized Gram accumulation.
//!
//! With the default `parallel` feature each workload runs on a one-thread
//! rayon pool and on the default pool, which measures the parallel speedup.
//! Compiled with `--no-default-features` the same benchmark names measure
//! the sequential fallback (`cargo bench -p mobilab --no-default-features`).

use criterion::{criterion_group, criterion_main, Criterion};
use mobilab::estimators::{first_step_fit, EstimatorSpec, Variant};
use mobilab::income_process::{presets, simulate_panel};
use mobilab::panel::AgeWindow;

const N_PERSONS: usize = 20_000;

fn with_flavors<F: Fn() + Sync>(
    group: &mut criterion::BenchmarkGroup<'_, criterion::measurement::WallTime>,
    name: &str,
    work: F,
) {
    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        group.bench_function(format!("{name}/rayon-1-thread"), |b| b.iter(|| one.install(&work)));
        group.bench_function(format!("{name}/rayon-default"), |b| b.iter(&work));
    }
    #[cfg(not(feature = "parallel"))]
    {
        group.bench_function(format!("{name}/sequential"), |b| b.iter(&work));
    }
}

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    let mut cfg = presets::default_benchmark(1);
    cfg.n_persons = N_PERSONS;
    with_flavors(&mut group, "default_benchmark_20k", || {
        let panel = simulate_panel(&cfg).unwrap();
        criterion::black_box(panel.n_obs());
    });
    group.finish();
}

fn bench_first_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("first_step");
    group.sample_size(10);
    let mut cfg = presets::default_benchmark(2);
    cfg.n_persons = N_PERSONS;
    let panel = simulate_panel(&cfg).unwrap();
    let spec = EstimatorSpec::new(Variant::ParentalQuadFe);
    let window = AgeWindow { lo: 25, hi: 58 };
    with_flavors(&mut group, "parental_quad_fe_20k", || {
        let profile = first_step_fit(&panel, &spec, window).unwrap();
        criterion::black_box(profile.fit.rss);
    });
    group.finish();
}

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    group.sample_size(10);
    let mut cfg = presets::ml_lab(3);
    cfg.n_persons = 2_000;
    let panel = simulate_panel(&cfg).unwrap();
    let tax = mobilab::regularization::candidates::CandidateTaxonomy::default_for(&panel);
    let mut d = mobilab::regularization::candidates::build_candidates(&panel, &tax).unwrap();
    mobilab::regularization::candidates::residualize_candidates(&mut d);
    with_flavors(&mut group, "candidates_233_cols", || {
        let g = mobilab::regularization::gram_data(&d.x, &d.y, d.n_cols(), &d.names, true);
        criterion::black_box(g.yty);
    });
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_first_step, bench_gram);
criterion_main!(benches);
