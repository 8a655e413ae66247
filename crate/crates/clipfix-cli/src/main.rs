//! Command-line experiment runner: loads a scenario file, runs the requested
//! experiment over a seed sweep, and writes CSV outputs plus a run manifest.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when a `--check`
//! assertion fails.

use clap::{Args, Parser, Subcommand};
use clipfix::harness::{
    check_kind, resolve_seeds, run_bench, run_board_experiment, run_single_trace, run_sweep,
    write_board_csv, write_compare_csv, write_manifest, ComparisonReport,
};
use clipfix::scenario::{ExperimentKind, Scenario};
use clipfix::skill::write_trace_csv;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "clipfix", version, about)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Scenario file describing the experiment.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed count `n` (runs seeds 0..n) or explicit list `a,b,c`.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for seed sweeps.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Verify the run outcome and exit 3 if it falls short.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Verb {
    /// Indicator comparison sweep over patterns x configs x seeds.
    Compare(Common),
    /// Single fixing iteration with a full per-tick trace.
    Trace(Common),
    /// Fixture board run with naive or adaptive parameter sampling.
    Board(Common),
    /// Per-tick latency benchmark.
    Bench(Common),
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn check_failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("check failed: {msg}");
    ExitCode::from(EXIT_CHECK)
}

struct Prepared {
    scenario: Scenario,
    seeds: Vec<u64>,
    out: PathBuf,
}

fn prepare(common: &Common, kind: ExperimentKind) -> Result<Prepared, String> {
    let scenario = Scenario::load(&common.scenario).map_err(|e| e.to_string())?;
    check_kind(&scenario, kind)?;
    if common.workers == 0 {
        return Err("--workers must be at least 1".into());
    }
    let seeds = resolve_seeds(common.seeds.as_deref(), &scenario)?;
    if seeds.is_empty() {
        return Err("no seeds to run".into());
    }
    std::fs::create_dir_all(&common.out)
        .map_err(|e| format!("cannot create {}: {e}", common.out.display()))?;
    write_manifest(&common.out, &scenario, &seeds).map_err(|e| e.to_string())?;
    Ok(Prepared {
        scenario,
        seeds,
        out: common.out.clone(),
    })
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), String> {
    std::fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_compare(common: &Common) -> Result<Result<String, String>, String> {
    let p = prepare(common, ExperimentKind::Compare)?;
    let cells = run_sweep(&p.scenario, &p.seeds, common.workers);
    let report = ComparisonReport::aggregate(&p.scenario, &cells);
    let mut buf = Vec::new();
    write_compare_csv(&mut buf, &report).map_err(|e| e.to_string())?;
    write_file(&p.out.join("compare.csv"), &buf)?;
    for row in &report.rows {
        println!(
            "{:8} scale {:<5} {:14} {:>3}/{} detections",
            row.pattern.name(),
            row.config_scale,
            row.indicator,
            row.successes,
            row.trials
        );
    }
    let overall = report.rate("rho_c", None);
    println!("rho_c overall detection rate: {overall:.3}");
    if !common.check {
        return Ok(Ok(format!("{} cells", cells.len())));
    }
    if overall < 0.90 {
        return Ok(Err(format!("rho_c overall rate {overall:.3} < 0.90")));
    }
    for pattern in &p.scenario.patterns {
        let cci = report.rate("rho_c", Some(*pattern));
        for baseline in ["f_c_threshold", "df_c_dt"] {
            let b = report.rate(baseline, Some(*pattern));
            if cci < b {
                return Ok(Err(format!(
                    "{}: rho_c {cci:.3} below {baseline} {b:.3}",
                    pattern.name()
                )));
            }
        }
    }
    Ok(Ok(format!("{} cells, checks passed", cells.len())))
}

fn cmd_trace(common: &Common) -> Result<Result<String, String>, String> {
    let p = prepare(common, ExperimentKind::Trace)?;
    let seed = p.seeds[0];
    let r = run_single_trace(&p.scenario, seed);
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &r.trace).map_err(|e| e.to_string())?;
    write_file(&p.out.join("trace.csv"), &buf)?;
    println!(
        "seed {seed}: verdict {} after {} ticks, states {:?}",
        r.verdict.name(),
        r.ticks,
        r.seq.states()
    );
    if !common.check {
        return Ok(Ok(format!("{} trace rows", r.trace.len())));
    }
    // the trace run detects the true detachment within the scoring window
    let ok = clipfix::harness::detection_ok(r.events.true_detach_tick, r.events.cci_detach_tick);
    if ok {
        Ok(Ok("detachment detected within tolerance".into()))
    } else {
        Ok(Err(format!(
            "no detection within window: truth {:?}, verdict {:?}",
            r.events.true_detach_tick, r.events.cci_detach_tick
        )))
    }
}

fn cmd_board(common: &Common) -> Result<Result<String, String>, String> {
    let p = prepare(common, ExperimentKind::Board)?;
    let seed = p.seeds[0];
    let report = run_board_experiment(&p.scenario, seed);
    let mut buf = Vec::new();
    write_board_csv(&mut buf, &report).map_err(|e| e.to_string())?;
    write_file(&p.out.join("board.csv"), &buf)?;
    for o in &report.outcomes {
        let last = o.iterations.last();
        println!(
            "fixture {}: {} after {} iteration(s){}",
            o.fixture_id,
            if o.succeeded { "fixed" } else { "unresolved" },
            o.iterations.len(),
            last.map(|i| format!(
                " (last: {} at z = {:.1} mm, F = {:.1} N)",
                i.verdict.name(),
                i.params.approach_z * 1e3,
                i.params.f_push_max
            ))
            .unwrap_or_default()
        );
    }
    if !common.check {
        return Ok(Ok(format!("{} fixtures", report.outcomes.len())));
    }
    if report.all_succeeded() {
        Ok(Ok("all fixtures fixed".into()))
    } else {
        Ok(Err("some fixtures unresolved".into()))
    }
}

fn cmd_bench(common: &Common) -> Result<Result<String, String>, String> {
    let p = prepare(common, ExperimentKind::Bench)?;
    let b = run_bench(&p.scenario);
    let body = format!(
        "# clipfix-bench-v1\nticks = {}\np50_ns = {}\np99_ns = {}\ntotal_ns = {}\nrealtime_factor = {:.1}\n",
        b.ticks, b.p50_ns, b.p99_ns, b.total_ns, b.realtime_factor
    );
    write_file(&p.out.join("bench.txt"), body.as_bytes())?;
    println!(
        "{} ticks: p50 {} ns, p99 {} ns, {:.0}x real time",
        b.ticks, b.p50_ns, b.p99_ns, b.realtime_factor
    );
    if !common.check {
        return Ok(Ok("bench complete".into()));
    }
    if b.p99_ns < 1_000_000 && b.realtime_factor >= 100.0 {
        Ok(Ok("within the 1 kHz budget".into()))
    } else {
        Ok(Err(format!(
            "p99 {} ns / {:.0}x real time outside budget",
            b.p99_ns, b.realtime_factor
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Compare(c) => cmd_compare(c),
        Verb::Trace(c) => cmd_trace(c),
        Verb::Board(c) => cmd_board(c),
        Verb::Bench(c) => cmd_bench(c),
    };
    match result {
        Err(config) => config_error(config),
        Ok(Err(check)) => check_failure(check),
        Ok(Ok(summary)) => {
            println!("ok: {summary}");
            ExitCode::SUCCESS
        }
    }
}
