// A short training run of the admission agent with a reduced network,
// writing the per-epoch metrics CSV and a checkpoint, then evaluating the
// checkpoint greedily.

use tsnsched::harness::{cmd_evaluate, cmd_train, ExperimentConfig};

pub fn run_example() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = ExperimentConfig {
        epochs: 4,
        warmup_steps: 64,
        hidden: 32,
        batch_size: 16,
        max_steps_per_epoch: 16,
        eval_hyperperiods: 1,
        checkpoint_every: 2,
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let out = cmd_train(&cfg, false)?;
    print!("{}", std::fs::read_to_string(&out.csv_path)?);
    let rep = cmd_evaluate(&cfg, &dir.path().join("agent.json"))?;
    println!(
        "greedy epoch: admitted {}/{}; deadlines met by {}/{} flows",
        rep.stats.admitted,
        rep.stats.requested,
        rep.flows.iter().filter(|f| f.met).count(),
        rep.flows.len()
    );
    anyhow::ensure!(dir.path().join("checkpoint_00002.json").exists());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
