//! Wall time of A-LinUCB against dense-inversion LinUCB on a square synthetic base.
//!
//! cargo run --release --example timing -- [k] [horizon]

use std::sync::Arc;

use coldstart::evaluator::{run_experiment, EvalSet, ReplayConfig};
use coldstart::policies::PolicySpec;
use coldstart::synthetic::{linear_environment, LinearEnvConfig};

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("integer argument"));
    let k = args.next().unwrap_or(500);
    let horizon = args.next().unwrap_or(5000);

    let env = linear_environment(&LinearEnvConfig {
        k,
        n: k,
        eval_users: 200,
        noise_sd: 0.05,
        seed: 7,
    });
    let eval = EvalSet::from_dataset(&env.eval);
    let base = Arc::new(env.base);
    let cfg = ReplayConfig {
        horizon,
        user_seed: 1,
    };

    for spec in [
        PolicySpec::ALinUcb { alpha: 0.001 },
        PolicySpec::LinUcb { alpha: 0.001 },
    ] {
        let mut policy = spec.build(Arc::clone(&base), 3).expect("valid policy");
        let trace = run_experiment(&cfg, k, &eval, policy.as_mut()).expect("replay runs");
        println!(
            "{spec}: {:.3}s, regret {:.3} over {} steps",
            trace.wall_time_seconds,
            trace.final_regret(),
            trace.steps()
        );
    }
}
