use clipfix::harness::{run_sweep, ComparisonReport};
use clipfix::scenario::Scenario;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.scn");
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "experiment = compare\npatterns = linear,log,exp\nconfig_scales = 1.0,1.25,1.5\nseeds = 30\nnoise_sigma = 0.05\n".into()
    });
    std::fs::write(&p, text).unwrap();
    let s = Scenario::load(&p).unwrap();
    let seeds: Vec<u64> = (0..s.seeds).collect();
    let t0 = std::time::Instant::now();
    let cells = run_sweep(&s, &seeds, 4);
    let report = ComparisonReport::aggregate(&s, &cells);
    for r in &report.rows {
        println!(
            "{:8} scale={:<5} {:14} {}/{} lat={:.1}",
            r.pattern.name(),
            r.config_scale,
            r.indicator,
            r.successes,
            r.trials,
            r.mean_latency_ticks
        );
    }
    for pat in &s.patterns {
        println!(
            "pattern {:8} cci={:.3} fc={:.3} deriv={:.3}",
            pat.name(),
            report.rate("rho_c", Some(*pat)),
            report.rate("f_c_threshold", Some(*pat)),
            report.rate("df_c_dt", Some(*pat)),
        );
    }
    println!(
        "overall cci={:.3} elapsed={:?}",
        report.rate("rho_c", None),
        t0.elapsed()
    );
}
