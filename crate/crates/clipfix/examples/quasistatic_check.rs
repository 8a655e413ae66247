use clipfix::contact::{DloState, SensorModel};
use clipfix::skill::{run_fixing_iteration, Fixture, MpParams, SkillConfig};

fn main() {
    let r = run_fixing_iteration(
        &Fixture::aligned(Default::default()),
        &SkillConfig {
            t_push_ms: std::env::args()
                .nth(1)
                .and_then(|a| a.parse().ok())
                .unwrap_or(3000.0),
            cci: clipfix::estimators::CciConfig {
                den_epsilon: 1e-4,
                ..Default::default()
            },
            ..SkillConfig::default()
        },
        &MpParams {
            approach_z: 0.0,
            f_push_max: 20.0,
        },
        &DloState::default(),
        &SensorModel {
            noise_sigma: 0.0,
            bias: 0.0,
            seed: 0,
        },
    );
    let detach = r.events.true_detach_tick.unwrap();
    let mut in_band = 0u64;
    let mut total = 0u64;
    let mut worst: Vec<(u64, f64)> = Vec::new();
    for rec in &r.trace {
        if rec.contact_state == 1 && rec.f_c_true > 0.0 && rec.rho_c.is_finite() && rec.tick < detach {
            total += 1;
            if (0.95..=1.05).contains(&rec.rho_c) {
                in_band += 1;
            } else {
                worst.push((rec.tick, rec.rho_c));
            }
        }
    }
    println!(
        "in-band {}/{} = {:.4}",
        in_band,
        total,
        in_band as f64 / total as f64
    );
    println!("out-of-band ticks (first 30): {:?}", &worst[..worst.len().min(30)]);
}
