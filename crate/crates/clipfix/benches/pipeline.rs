//! Per-tick pipeline cost and parallel-vs-sequential sweep throughput.

use clipfix::contact::{DloState, Obstacle, Sensor, SensorModel, DT};
use clipfix::estimators::{CciEstimator, CeiEstimator, DerivativeBaseline, ThresholdBaseline};
use clipfix::harness::{run_sweep_sequential, sweep_cells};
use clipfix::scenario::{ExperimentKind, Scenario};
use clipfix::signal::SmoothingWindow;
use criterion::{criterion_group, criterion_main, Criterion, Throughput};

fn compare_scenario() -> Scenario {
    // small sweep so one bench iteration stays in the tens of milliseconds
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bench.scn");
    std::fs::write(
        &p,
        "experiment = compare\npatterns = linear,exp\nconfig_scales = 1.0\nseeds = 2\n",
    )
    .unwrap();
    let s = Scenario::load(&p).unwrap();
    assert_eq!(s.kind, ExperimentKind::Compare);
    s
}

fn bench_tick_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("tick");
    group.throughput(Throughput::Elements(1));
    group.bench_function("full_pipeline", |b| {
        let obstacle = Obstacle::Wall {
            x_wall: 0.0,
            k_wall: 8000.0,
        };
        let mut state = DloState::default();
        let mut sensor = Sensor::new(&SensorModel::default());
        let mut window = SmoothingWindow::new(50).unwrap();
        let mut cei = CeiEstimator::new(0.75);
        let mut cci = CciEstimator::new(Default::default());
        let mut threshold = ThresholdBaseline::new(3.0);
        let mut derivative = DerivativeBaseline::new(Default::default());
        let mut t = 0u64;
        b.iter(|| {
            let f_push = 5.0 + 3e-3 * t as f64;
            t += 1;
            let info = clipfix::contact::step_dynamics(&mut state, &obstacle, f_push, DT);
            let f_ext = sensor.measure(info.f_c, info.accel, state.m_e);
            let f_smooth = window.smooth(f_ext);
            let _ = cei.update(f_smooth, f_push);
            let _ = cci.update(f_smooth, f_push);
            let _ = threshold.update(f_smooth);
            derivative.update(f_smooth, DT)
        });
    });
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let scenario = compare_scenario();
    let seeds: Vec<u64> = (0..scenario.seeds).collect();
    let cells = sweep_cells(&scenario, &seeds).len() as u64;
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    group.throughput(Throughput::Elements(cells));
    group.bench_function("sequential", |b| {
        b.iter(|| run_sweep_sequential(&scenario, &seeds))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel_4_workers", |b| {
        b.iter(|| clipfix::harness::run_sweep_parallel(&scenario, &seeds, 4))
    });
    group.finish();
}

criterion_group!(benches, bench_tick_pipeline, bench_sweep);
criterion_main!(benches);
