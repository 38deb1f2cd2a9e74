// Encode the admission environment's network graph into the fixed
// 22-wide state vector, then check the vector does not depend on the
// order of the nodes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsnsched::gcn::{GcnEncoder, STATE_DIM};
use tsnsched::harness::{build_env, ExperimentConfig};

pub fn run_example() -> anyhow::Result<()> {
    let mut env = build_env(&ExperimentConfig::default())?;
    let graph = env.reset()?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let enc = GcnEncoder::new(&mut rng);
    let s = enc.encode(&graph)?;
    println!("{} nodes, {} edges -> {:?}", graph.nodes.len(), graph.edges.len(), s.dim());
    println!("state {:.4}", s);
    let mut perm: Vec<usize> = (0..graph.nodes.len()).collect();
    perm.shuffle(&mut rng);
    let s2 = enc.encode(&graph.permuted(&perm))?;
    let diff = (&s - &s2).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    println!("max difference after shuffling nodes: {diff:.2e}");
    anyhow::ensure!(s.len() == STATE_DIM && diff < 1e-9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
