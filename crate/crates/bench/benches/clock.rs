use criterion::{black_box, criterion_group, criterion_main, Criterion};
use stoclock_core::clock::{build_nonhermitian_clock, ground_history, spectrum_report, ClockOptions};
use stoclock_core::qcore::{two_level_model, PureState, TwoLevelParams};
use stoclock_core::sse::{propagate, RngStream};
use stoclock_core::ClockGrid;

fn benches(c: &mut Criterion) {
    let model = two_level_model(TwoLevelParams::new(1.0, 0.2).unwrap()).unwrap();
    let psi0 = PureState::equal_superposition();
    let opts = ClockOptions::default();
    let grid = ClockGrid::new(1.0, 0.05, 2).unwrap();
    let clock = build_nonhermitian_clock(&model, grid, &psi0, None, &opts).unwrap();

    c.bench_function("build_nonhermitian_clock N=21", |b| {
        b.iter(|| build_nonhermitian_clock(&model, black_box(grid), &psi0, None, &opts).unwrap())
    });
    c.bench_function("ground_history N=21", |b| b.iter(|| ground_history(black_box(&clock)).unwrap()));
    c.bench_function("spectrum_report N=21", |b| b.iter(|| spectrum_report(black_box(&clock)).unwrap()));
    c.bench_function("sse propagate T=1 dt=0.05", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            propagate(&psi0, &model, 1.0, 0.05, &mut RngStream::new(1, i)).unwrap()
        })
    });
}

criterion_group!(clock, benches);
criterion_main!(clock);
