//! Seeded experiment drivers: the indicator-comparison sweep, single-trace
//! runs, board runs, and the per-tick latency benchmark, plus the CSV and
//! manifest writers shared by the command-line front end.

use crate::contact::{DloState, Obstacle, PushShape, Sensor, SensorModel, DT};
use crate::estimators::{CciEstimator, DerivativeBaseline, ThresholdBaseline};
use crate::scenario::{ExperimentKind, Scenario};
use crate::shape::{
    run_board, BoardReport, FixtureBoard, SafetyBounds, SamplingMode,
};
use crate::signal::SmoothingWindow;
use crate::skill::{run_fixing_iteration, Fixture, IterationResult, MpParams, SkillConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

/// Allowed early margin of a detection verdict, ticks before true detachment.
pub const DETECT_EARLY_SLACK: u64 = 10;
/// Allowed late margin, ticks after true detachment.
pub const DETECT_LATE_SLACK: u64 = 100;

/// One sweep cell: a push pattern, a clip stiffness scale, and a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub pattern: PushShape,
    pub config_scale: f64,
    pub seed: u64,
}

/// Detection outcome of all four indicators on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub spec: CellSpec,
    pub true_detach_tick: Option<u64>,
    pub cci_tick: Option<u64>,
    pub threshold_tick: Option<u64>,
    pub derivative_tick: Option<u64>,
    pub cci_ok: bool,
    pub threshold_ok: bool,
    pub derivative_ok: bool,
    pub ticks: u64,
}

/// A verdict counts as a detection iff it lands inside the tolerance window
/// around the true detachment tick.
pub fn detection_ok(truth: Option<u64>, verdict: Option<u64>) -> bool {
    match (truth, verdict) {
        (Some(t), Some(v)) => v >= t.saturating_sub(DETECT_EARLY_SLACK) && v <= t + DETECT_LATE_SLACK,
        _ => false,
    }
}

/// Stable per-cell RNG seed derived from the sweep seed and cell coordinates
/// (splitmix64 finalizer).
fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(a.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(b.wrapping_mul(0x94D0_49BB_1331_11EB));
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn skill_config_for(scenario: &Scenario, pattern: PushShape, hold_after_detach: bool) -> SkillConfig {
    SkillConfig {
        contact_push: scenario.contact_push,
        insertion_shape: pattern,
        t_push_ms: scenario.t_push_ms,
        hold_after_detach,
        f_c_threshold: scenario.f_c_threshold,
        ..SkillConfig::default()
    }
}

/// Run one sweep cell: an overforce-style iteration (push held past
/// detachment) so every indicator gets a chance to fire.
pub fn run_cell(scenario: &Scenario, spec: &CellSpec) -> CellResult {
    let clip = scenario.clip.scaled(spec.config_scale);
    let fixture = Fixture::aligned(clip);
    let cfg = skill_config_for(scenario, spec.pattern, true);
    let params = MpParams {
        approach_z: scenario.approach_z,
        f_push_max: scenario.f_push_max,
    };
    let pattern_idx = match spec.pattern {
        PushShape::Constant => 0,
        PushShape::Linear => 1,
        PushShape::Log => 2,
        PushShape::Exp => 3,
    };
    let sensor = SensorModel {
        noise_sigma: scenario.noise_sigma,
        bias: scenario.sensor_bias,
        seed: mix_seed(spec.seed, pattern_idx, spec.config_scale.to_bits()),
    };
    let r = run_fixing_iteration(&fixture, &cfg, &params, &DloState::default(), &sensor);
    let truth = r.events.true_detach_tick;
    CellResult {
        spec: *spec,
        true_detach_tick: truth,
        cci_tick: r.events.cci_detach_tick,
        threshold_tick: r.events.threshold_detach_tick,
        derivative_tick: r.events.derivative_detach_tick,
        cci_ok: detection_ok(truth, r.events.cci_detach_tick),
        threshold_ok: detection_ok(truth, r.events.threshold_detach_tick),
        derivative_ok: detection_ok(truth, r.events.derivative_detach_tick),
        ticks: r.ticks,
    }
}

/// All sweep cells of a scenario, in report order.
pub fn sweep_cells(scenario: &Scenario, seeds: &[u64]) -> Vec<CellSpec> {
    let mut cells = Vec::with_capacity(scenario.patterns.len() * scenario.config_scales.len() * seeds.len());
    for &pattern in &scenario.patterns {
        for &config_scale in &scenario.config_scales {
            for &seed in seeds {
                cells.push(CellSpec {
                    pattern,
                    config_scale,
                    seed,
                });
            }
        }
    }
    cells
}

/// Single-threaded sweep execution.
pub fn run_sweep_sequential(scenario: &Scenario, seeds: &[u64]) -> Vec<CellResult> {
    sweep_cells(scenario, seeds)
        .iter()
        .map(|spec| run_cell(scenario, spec))
        .collect()
}

/// Data-parallel sweep execution over a bounded worker pool. Results come
/// back in cell order, so reports are identical to the sequential path.
#[cfg(feature = "parallel")]
pub fn run_sweep_parallel(scenario: &Scenario, seeds: &[u64], workers: usize) -> Vec<CellResult> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    let cells = sweep_cells(scenario, seeds);
    pool.install(|| cells.par_iter().map(|spec| run_cell(scenario, spec)).collect())
}

/// Sweep entry point: parallel when the `parallel` feature is enabled and
/// more than one worker is requested, sequential otherwise.
pub fn run_sweep(scenario: &Scenario, seeds: &[u64], workers: usize) -> Vec<CellResult> {
    #[cfg(feature = "parallel")]
    {
        if workers != 1 {
            return run_sweep_parallel(scenario, seeds, workers);
        }
    }
    let _ = workers;
    run_sweep_sequential(scenario, seeds)
}

/// Per (pattern x config x indicator) aggregate of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub pattern: PushShape,
    pub config_scale: f64,
    pub indicator: &'static str,
    pub successes: u64,
    pub trials: u64,
    /// Mean (verdict - truth) over successful detections, ticks.
    pub mean_latency_ticks: f64,
}

/// Aggregated indicator-comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

pub const INDICATORS: [&str; 3] = ["rho_c", "f_c_threshold", "df_c_dt"];

impl ComparisonReport {
    pub fn aggregate(scenario: &Scenario, cells: &[CellResult]) -> Self {
        let mut rows = Vec::new();
        for &pattern in &scenario.patterns {
            for &config_scale in &scenario.config_scales {
                for indicator in INDICATORS {
                    let mut successes = 0u64;
                    let mut trials = 0u64;
                    let mut latency_sum = 0i64;
                    for c in cells {
                        if c.spec.pattern != pattern || c.spec.config_scale != config_scale {
                            continue;
                        }
                        trials += 1;
                        let (ok, tick) = match indicator {
                            "rho_c" => (c.cci_ok, c.cci_tick),
                            "f_c_threshold" => (c.threshold_ok, c.threshold_tick),
                            _ => (c.derivative_ok, c.derivative_tick),
                        };
                        if ok {
                            successes += 1;
                            latency_sum +=
                                tick.unwrap() as i64 - c.true_detach_tick.unwrap() as i64;
                        }
                    }
                    let mean_latency_ticks = if successes > 0 {
                        latency_sum as f64 / successes as f64
                    } else {
                        f64::NAN
                    };
                    rows.push(ComparisonRow {
                        pattern,
                        config_scale,
                        indicator,
                        successes,
                        trials,
                        mean_latency_ticks,
                    });
                }
            }
        }
        Self { rows }
    }

    /// Success rate of an indicator over all rows of one pattern, or over all
    /// rows when `pattern` is `None`.
    pub fn rate(&self, indicator: &str, pattern: Option<PushShape>) -> f64 {
        let (mut s, mut t) = (0u64, 0u64);
        for r in &self.rows {
            if r.indicator == indicator && pattern.is_none_or(|p| p == r.pattern) {
                s += r.successes;
                t += r.trials;
            }
        }
        s as f64 / t.max(1) as f64
    }
}

pub const COMPARE_SCHEMA: &str = "# clipfix-compare-v1";

pub fn write_compare_csv<W: Write>(mut w: W, report: &ComparisonReport) -> io::Result<()> {
    writeln!(w, "{COMPARE_SCHEMA}")?;
    writeln!(w, "pattern,config_scale,indicator,successes,trials,mean_latency_ticks")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.pattern.name(),
            r.config_scale,
            r.indicator,
            r.successes,
            r.trials,
            r.mean_latency_ticks
        )?;
    }
    Ok(())
}

/// Run one full iteration with a per-tick trace for plotting.
pub fn run_single_trace(scenario: &Scenario, seed: u64) -> IterationResult {
    let fixture = Fixture::aligned(scenario.clip.clone());
    let pattern = scenario.patterns.first().copied().unwrap_or(PushShape::Linear);
    let cfg = skill_config_for(scenario, pattern, scenario.hold_after_detach);
    let params = MpParams {
        approach_z: scenario.approach_z,
        f_push_max: scenario.f_push_max,
    };
    let sensor = SensorModel {
        noise_sigma: scenario.noise_sigma,
        bias: scenario.sensor_bias,
        seed,
    };
    run_fixing_iteration(&fixture, &cfg, &params, &DloState::default(), &sensor)
}

/// Run the fixture board once with the scenario's sampling mode.
pub fn run_board_experiment(scenario: &Scenario, seed: u64) -> BoardReport {
    let board = FixtureBoard {
        fixtures: scenario
            .fixture_offsets
            .iter()
            .map(|&dz| Fixture {
                clip: scenario.clip.clone(),
                delta_z: dz,
            })
            .collect(),
    };
    let mode = if scenario.adaptive {
        SamplingMode::Adaptive
    } else {
        SamplingMode::Fixed
    };
    // In fixed mode every attempt uses the scenario's assumed plane and push
    // limit; collapsing the bounds makes the recorded draws equal exactly that.
    let bounds = if mode == SamplingMode::Fixed {
        SafetyBounds {
            z_min: scenario.approach_z,
            z_max: scenario.approach_z,
            f_min: scenario.f_push_max,
            f_max: scenario.f_push_max,
        }
    } else {
        SafetyBounds {
            z_min: scenario.z_min,
            z_max: scenario.z_max,
            f_min: scenario.f_min,
            f_max: scenario.f_max,
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iter_seed = 0u64;
    run_board(
        &board,
        &bounds,
        mode,
        scenario.max_iterations,
        &mut rng,
        |fixture, params| {
            iter_seed += 1;
            let cfg = skill_config_for(
                scenario,
                scenario.patterns.first().copied().unwrap_or(PushShape::Linear),
                false,
            );
            let sensor = SensorModel {
                noise_sigma: scenario.noise_sigma,
                bias: scenario.sensor_bias,
                seed: mix_seed(seed, 0xB0A2D, iter_seed),
            };
            let r = run_fixing_iteration(fixture, &cfg, params, &DloState::default(), &sensor);
            (r.verdict, r.ticks)
        },
    )
}

pub const BOARD_SCHEMA: &str = "# clipfix-board-v1";

pub fn write_board_csv<W: Write>(mut w: W, report: &BoardReport) -> io::Result<()> {
    writeln!(w, "{BOARD_SCHEMA}")?;
    writeln!(w, "fixture_id,iteration,x_h_z,f_push,verdict,ticks")?;
    for it in report.iterations() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            it.fixture_id,
            it.iteration,
            it.params.approach_z,
            it.params.f_push_max,
            it.verdict.name(),
            it.ticks
        )?;
    }
    Ok(())
}

/// Per-tick latency statistics of the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub ticks: u64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub total_ns: u64,
    /// Simulated seconds per wall second.
    pub realtime_factor: f64,
}

/// Time the full per-tick pipeline (dynamics + sensing + smoothing + all
/// four indicators) against a persistent contact so every stage stays hot.
pub fn run_bench(scenario: &Scenario) -> BenchReport {
    let ticks = scenario.bench_ticks.max(1);
    let obstacle = Obstacle::Wall {
        x_wall: 0.0,
        k_wall: 8000.0,
    };
    let mut state = DloState::default();
    let mut sensor = Sensor::new(&SensorModel {
        noise_sigma: scenario.noise_sigma,
        bias: scenario.sensor_bias,
        seed: 1,
    });
    let mut window = SmoothingWindow::new(50).expect("window");
    let mut cci = CciEstimator::new(Default::default());
    let mut cei = crate::estimators::CeiEstimator::new(0.75);
    let mut threshold = ThresholdBaseline::new(scenario.f_c_threshold);
    let mut derivative = DerivativeBaseline::new(Default::default());

    let mut samples: Vec<u64> = Vec::with_capacity(ticks as usize);
    let start = Instant::now();
    for t in 0..ticks {
        // slow unsaturated ramp keeps the increments (and so every
        // estimator's full update path) active for the whole run
        let f_push = 5.0 + 3e-3 * t as f64;
        let t0 = Instant::now();
        let info = crate::contact::step_dynamics(&mut state, &obstacle, f_push, DT);
        let f_ext = sensor.measure(info.f_c, info.accel, state.m_e);
        let f_smooth = window.smooth(f_ext);
        let _ = cei.update(f_smooth, f_push);
        let _ = cci.update(f_smooth, f_push);
        let _ = threshold.update(f_smooth);
        let _ = derivative.update(f_smooth, DT);
        samples.push(t0.elapsed().as_nanos() as u64);
    }
    let total_ns = start.elapsed().as_nanos() as u64;
    samples.sort_unstable();
    let pct = |p: f64| samples[(((samples.len() - 1) as f64) * p) as usize];
    let sim_seconds = ticks as f64 * DT;
    BenchReport {
        ticks,
        p50_ns: pct(0.50),
        p99_ns: pct(0.99),
        total_ns,
        realtime_factor: sim_seconds / (total_ns as f64 * 1e-9),
    }
}

/// Artifact version recorded in every manifest.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn scenario_hash(scenario: &Scenario) -> String {
    let mut h = Sha256::new();
    h.update(scenario.canonical_text.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write the run manifest next to the experiment outputs.
pub fn write_manifest(out_dir: &Path, scenario: &Scenario, seeds: &[u64]) -> io::Result<()> {
    let mut f = std::fs::File::create(out_dir.join("manifest.txt"))?;
    writeln!(f, "# clipfix-manifest-v1")?;
    writeln!(f, "artifact_version = {ARTIFACT_VERSION}")?;
    writeln!(f, "experiment = {}", scenario.kind.name())?;
    writeln!(f, "scenario_sha256 = {}", scenario_hash(scenario))?;
    let seeds_str: Vec<String> = seeds.iter().map(|s| s.to_string()).collect();
    writeln!(f, "seeds = {}", seeds_str.join(","))?;
    Ok(())
}

/// Seed list for a run: explicit list from `--seeds a,b,c`, a count from
/// `--seeds n` (seeds 0..n), or the scenario's count by default.
pub fn resolve_seeds(spec: Option<&str>, scenario: &Scenario) -> Result<Vec<u64>, String> {
    let parse_one = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid seed value `{}`", s.trim()))
    };
    match spec {
        None => Ok((0..scenario.seeds).collect()),
        Some(s) if s.contains(',') => s.split(',').map(parse_one).collect(),
        Some(s) => {
            let n = parse_one(s)?;
            Ok((0..n).collect())
        }
    }
}

/// Convenience guard: a scenario can only be run by the verb matching its
/// experiment kind.
pub fn check_kind(scenario: &Scenario, expected: ExperimentKind) -> Result<(), String> {
    if scenario.kind == expected {
        Ok(())
    } else {
        Err(format!(
            "scenario declares experiment `{}` but the `{}` verb was invoked",
            scenario.kind.name(),
            expected.name()
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use std::path::PathBuf;

    fn scenario_from(text: &str) -> Scenario {
        let dir = tempfile::tempdir().unwrap();
        let p: PathBuf = dir.path().join("s.scn");
        std::fs::write(&p, text).unwrap();
        Scenario::load(&p).unwrap()
    }

    #[test]
    fn detection_window_edges() {
        assert!(detection_ok(Some(1000), Some(1000)));
        assert!(detection_ok(Some(1000), Some(990)));
        assert!(!detection_ok(Some(1000), Some(989)));
        assert!(detection_ok(Some(1000), Some(1100)));
        assert!(!detection_ok(Some(1000), Some(1101)));
        assert!(!detection_ok(None, Some(10)));
        assert!(!detection_ok(Some(10), None));
    }

    #[test]
    fn noiseless_cell_detects_with_cci() {
        let s = scenario_from("experiment = compare\nnoise_sigma = 0\npatterns = linear\nconfig_scales = 1.0\n");
        let r = run_cell(
            &s,
            &CellSpec {
                pattern: PushShape::Linear,
                config_scale: 1.0,
                seed: 0,
            },
        );
        assert!(r.true_detach_tick.is_some());
        assert!(r.cci_ok, "{r:?}");
        assert!(r.derivative_ok, "{r:?}");
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let s = scenario_from("experiment = compare\npatterns = linear,exp\nconfig_scales = 1.0\nseeds = 3\n");
        let seeds: Vec<u64> = (0..3).collect();
        let seq = run_sweep_sequential(&s, &seeds);
        #[cfg(feature = "parallel")]
        {
            let par = run_sweep_parallel(&s, &seeds, 4);
            assert_eq!(seq, par);
        }
        assert_eq!(seq.len(), 6);
    }

    #[test]
    fn report_rates_and_csv_shape() {
        let s = scenario_from("experiment = compare\nnoise_sigma = 0\npatterns = linear\nconfig_scales = 1.0\nseeds = 2\n");
        let cells = run_sweep_sequential(&s, &[0, 1]);
        let report = ComparisonReport::aggregate(&s, &cells);
        assert_eq!(report.rows.len(), INDICATORS.len());
        assert_eq!(report.rate("rho_c", None), 1.0);
        let mut buf = Vec::new();
        write_compare_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(COMPARE_SCHEMA));
        assert_eq!(text.lines().count(), 2 + report.rows.len());
    }

    #[test]
    fn board_naive_reproduces_expected_verdicts() {
        use crate::skill::AnomalyVerdict::*;
        let s = scenario_from(
            "experiment = board\nadaptive = false\nmax_iterations = 1\nnoise_sigma = 0.05\n",
        );
        let report = run_board_experiment(&s, 0);
        let verdicts: Vec<_> = report.iterations().map(|i| i.verdict).collect();
        assert_eq!(verdicts, vec![MissedContact, EntryBlockage, EntryBlockage, Success]);
    }

    #[test]
    fn board_adaptive_converges() {
        let s = scenario_from("experiment = board\nnoise_sigma = 0.05\n");
        let report = run_board_experiment(&s, 7);
        assert!(report.all_succeeded(), "{report:?}");
    }

    #[test]
    fn manifest_contents() {
        let s = scenario_from("experiment = compare\nseeds = 2\n");
        let dir = tempfile::tempdir().unwrap();
        write_manifest(dir.path(), &s, &[0, 1]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(text.contains("artifact_version = "));
        assert!(text.contains("experiment = compare"));
        assert!(text.contains(&format!("scenario_sha256 = {}", scenario_hash(&s))));
        assert!(text.contains("seeds = 0,1"));
    }

    #[test]
    fn seed_resolution() {
        let s = scenario_from("experiment = compare\nseeds = 4\n");
        assert_eq!(resolve_seeds(None, &s).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(resolve_seeds(Some("2"), &s).unwrap(), vec![0, 1]);
        assert_eq!(resolve_seeds(Some("5,9"), &s).unwrap(), vec![5, 9]);
        assert!(resolve_seeds(Some("5,x"), &s).is_err());
    }

    #[test]
    fn bench_smoke() {
        let s = scenario_from("experiment = bench\nbench_ticks = 2000\n");
        let b = run_bench(&s);
        assert_eq!(b.ticks, 2000);
        assert!(b.p50_ns <= b.p99_ns);
        assert!(b.realtime_factor > 1.0);
    }

    #[test]
    fn trace_run_is_deterministic_csv() {
        let s = scenario_from("experiment = trace\nseeds = 1\n");
        let a = run_single_trace(&s, 3);
        let b = run_single_trace(&s, 3);
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        crate::skill::write_trace_csv(&mut ba, &a.trace).unwrap();
        crate::skill::write_trace_csv(&mut bb, &b.trace).unwrap();
        assert_eq!(ba, bb);
    }
}
