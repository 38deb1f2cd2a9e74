// Admission with uniformly random actions over the same arrival stream a
// trained agent would see. Pass an epoch count as the first argument.

use tsnsched::harness::{cmd_random_baseline, ExperimentConfig};

pub fn run_with(epochs: usize) -> anyhow::Result<f64> {
    let cfg = ExperimentConfig {
        epochs,
        ..ExperimentConfig::default()
    };
    let records = cmd_random_baseline(&cfg)?;
    for r in &records {
        println!(
            "epoch {:3} admitted {:2}/{:2} beta {}",
            r.epoch, r.stats.admitted, r.stats.requested, r.stats.beta
        );
    }
    let mean = records.iter().map(|r| r.stats.admission_rate).sum::<f64>() / records.len() as f64;
    println!("mean admission rate {mean:.3}");
    Ok(mean)
}

pub fn run_example() -> anyhow::Result<()> {
    run_with(2).map(|_| ())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    let epochs = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(10);
    run_with(epochs).map(|_| ())
}
