use clipfix::harness::run_board_experiment;
use clipfix::scenario::Scenario;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.scn");
    std::fs::write(&p, "experiment = board\nnoise_sigma = 0.05\n").unwrap();
    let s = Scenario::load(&p).unwrap();
    let t0 = std::time::Instant::now();
    let mut ok = 0;
    let mut max_iters = 0;
    for seed in 0..100u64 {
        let r = run_board_experiment(&s, seed);
        if r.all_succeeded() {
            ok += 1;
        } else if ok + 10 > seed as i32 {
            for o in &r.outcomes {
                if !o.succeeded {
                    eprintln!(
                        "seed {seed} fixture {} failed: {:?}",
                        o.fixture_id,
                        o.iterations.iter().map(|i| (i.verdict, i.params.approach_z * 1e3, i.params.f_push_max)).collect::<Vec<_>>()
                    );
                }
            }
        }
        for o in &r.outcomes {
            max_iters = max_iters.max(o.iterations.len());
        }
    }
    println!("adaptive: {ok}/100 boards fully succeeded, max iters {max_iters}, elapsed {:?}", t0.elapsed());

    std::fs::write(&p, "experiment = board\nadaptive = false\nmax_iterations = 1\nnoise_sigma = 0.05\n").unwrap();
    let s = Scenario::load(&p).unwrap();
    let r = run_board_experiment(&s, 0);
    let verdicts: Vec<_> = r.iterations().map(|i| i.verdict.name()).collect();
    println!("naive verdicts: {verdicts:?}");
}
