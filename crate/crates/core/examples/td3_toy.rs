// TD3 on a one-step bandit: the reward is -(a - 0.3)^2 for a single
// action, so the greedy policy should settle near 0.3.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsnsched::gcn::{GraphNode, GraphState, NodeType};
use tsnsched::td3::{ReplayBuffer, Td3Agent, Td3Config, Transition};

pub fn bandit_graph() -> GraphState {
    GraphState {
        nodes: vec![
            GraphNode {
                node_type: NodeType::Talker,
                features: vec![0.5; NodeType::Talker.feature_len()],
                tokens: vec!["TK1".into()],
            },
            GraphNode {
                node_type: NodeType::Listener,
                features: vec![0.5; NodeType::Listener.feature_len()],
                tokens: vec!["LR1".into()],
            },
        ],
        edges: vec![(0, 1)],
    }
}

/// Train for `steps` environment steps and return the greedy action.
pub fn train_bandit(steps: usize, seed: u64) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = Td3Config {
        hidden: 32,
        batch_size: 32,
        ..Td3Config::default()
    };
    let mut agent = Td3Agent::new(cfg, 1, &mut rng);
    let mut buffer = ReplayBuffer::new(10_000);
    let g = bandit_graph();
    for t in 0..steps {
        let a = if t < 200 { agent.random_action(&mut rng) } else { agent.act(&g, true, &mut rng)? };
        let reward = -(a[0] - 0.3).powi(2);
        buffer.push(Transition {
            state: g.clone(),
            action: a,
            reward,
            next_state: g.clone(),
            done: true,
        });
        if buffer.len() >= 32 {
            let batch = buffer.sample(&mut rng, 32);
            agent.train_step(&batch, &mut rng)?;
        }
    }
    Ok(agent.act(&g, false, &mut rng)?[0])
}

pub fn run_example() -> anyhow::Result<()> {
    let a = train_bandit(1500, 11)?;
    println!("greedy action after training: {a:.3} (optimum 0.3)");
    anyhow::ensure!((a - 0.3).abs() < 0.1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
