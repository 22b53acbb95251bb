use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use floquet_ep::berry::{berry_phase_loop, BerryOptions};
use floquet_ep::floquet::max_im_quasienergy;
use floquet_ep::model::WaveformFamily;
use floquet_ep::propagator::{monodromy, PropagationEngine};
use floquet_ep::sweep::{phase_diagram_with_threads, Engine, EngineSettings};
use floquet_ep_testbench::{pt_beta3, square_grid};

fn engines(c: &mut Criterion) {
    let square = pt_beta3(WaveformFamily::Square).instantiate(0.8, 0.9).unwrap();
    let smooth = pt_beta3(WaveformFamily::Smooth).instantiate(0.8, 0.9).unwrap();
    c.bench_function("monodromy/piecewise", |b| b.iter(|| monodromy(&square, PropagationEngine::Piecewise).unwrap()));
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    group.bench_function("monodromy/integrate", |b| {
        b.iter(|| monodromy(&smooth, PropagationEngine::integrate()).unwrap())
    });
    for cutoff in [10, 20] {
        group.bench_with_input(BenchmarkId::new("floquet/max_im", cutoff), &cutoff, |b, &n| {
            b.iter(|| max_im_quasienergy(&smooth, n).unwrap())
        });
    }
    group.bench_function("berry/8192", |b| b.iter(|| berry_phase_loop(&smooth, &BerryOptions::default()).unwrap()));
    group.finish();
}

fn sweeps(c: &mut Criterion) {
    let template = pt_beta3(WaveformFamily::Square);
    let grid = square_grid(100, Engine::MonodromyPiecewise);
    let settings = EngineSettings::default();
    let mut group = c.benchmark_group("phase_diagram_100x100");
    group.sample_size(10);
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    for threads in [1, hw] {
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, &t| {
            b.iter(|| phase_diagram_with_threads(&template, &grid, &settings, t).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, engines, sweeps);
criterion_main!(benches);
