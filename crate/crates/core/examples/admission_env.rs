// Step the admission environment by hand: one all-zeros action (accept,
// mid-range offsets) and one reject, printing the reward terms.

use tsnsched::harness::{build_env, ExperimentConfig};

pub fn run_example() -> anyhow::Result<()> {
    let cfg = ExperimentConfig {
        eval_hyperperiods: 1,
        ..ExperimentConfig::default()
    };
    let mut env = build_env(&cfg)?;
    env.reset()?;
    println!(
        "hyperperiod {} ns, action dim {}, static beta {}",
        env.hyperperiod(),
        env.action_dim(),
        env.gcls().beta()
    );
    let mut accept = vec![0.0; env.action_dim()];
    accept[0] = 1.0;
    let mut reject = accept.clone();
    reject[0] = -1.0;
    for (name, action) in [("accept", &accept), ("reject", &reject), ("accept", &accept)] {
        let pending = env.pending().map(|f| f.id.clone()).unwrap_or_default();
        let res = env.step(action)?;
        let b = &res.info.breakdown;
        println!(
            "{name} {pending}: reward {:+.3} admitted {} r_O {} r_S {} r_B {} beta {}",
            res.reward, res.info.admitted, b.r_o, b.r_s, b.r_b, res.info.beta
        );
    }
    let stats = env.epoch_stats();
    println!("admitted {}/{} so far", stats.admitted, stats.requested);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
