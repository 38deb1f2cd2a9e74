//! Twin delayed deterministic policy gradient over graph states.
//!
//! The graph encoder is trained through the critic loss of both critics;
//! the actor sees the encoded state detached from the encoder. Target
//! copies of the actor, both critics and the encoder follow by Polyak
//! averaging whenever the actor is updated.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gcn::{GcnEncoder, GcnError, GraphState, STATE_DIM};
use crate::nn::{soft_update, Activation, Adam, Mlp, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau: f64,
    /// Actor and target updates happen every `policy_delay` gradient steps.
    pub policy_delay: u64,
    pub exploration_sigma: f64,
    pub target_sigma: f64,
    pub target_clip: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub encoder_lr: f64,
    pub hidden: usize,
    /// Use the minimum of two critics. Off gives a single-critic learner.
    pub twin: bool,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            exploration_sigma: 0.1,
            target_sigma: 0.2,
            target_clip: 0.5,
            batch_size: 100,
            buffer_capacity: 1_000_000,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            encoder_lr: 1e-3,
            hidden: 256,
            twin: true,
        }
    }
}

impl Td3Config {
    /// Single critic, no target smoothing, actor updated every step.
    pub fn ddpg() -> Td3Config {
        Td3Config {
            twin: false,
            target_sigma: 0.0,
            policy_delay: 1,
            ..Td3Config::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: GraphState,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: GraphState,
    pub done: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<&Transition> {
        (0..n).filter_map(|_| self.items.choose(rng)).collect()
    }
}

pub fn td_target(reward: f64, done: bool, gamma: f64, q1: f64, q2: f64) -> f64 {
    let bootstrap = if done { 0.0 } else { gamma * q1.min(q2) };
    reward + bootstrap
}

/// Clip `noise` to ±clip, add it to the target action and clip to [-1, 1].
pub fn smoothed_target_action(action: &[f64], noise: &[f64], clip: f64) -> Vec<f64> {
    action
        .iter()
        .zip(noise)
        .map(|(a, n)| (a + n.clamp(-clip, clip)).clamp(-1.0, 1.0))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Graph(#[from] GcnError),
    #[error("action has {got} entries, expected {expected}")]
    ActionLen { got: usize, expected: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub action_dim: usize,
    pub encoder: GcnEncoder,
    pub encoder_target: GcnEncoder,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic1_target: Mlp,
    pub critic2: Mlp,
    pub critic2_target: Mlp,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    encoder_opt: Adam,
    /// Gradient steps taken so far.
    pub steps: u64,
}

/// Critic gradients for one minibatch.
pub struct CriticGrads {
    pub loss: f64,
    pub critic1: Vec<Array2<f64>>,
    pub critic2: Vec<Array2<f64>>,
    pub encoder: Vec<Array2<f64>>,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(config: Td3Config, action_dim: usize, rng: &mut R) -> Td3Agent {
        let h = config.hidden;
        let encoder = GcnEncoder::new(rng);
        let mut actor = Mlp::new(rng, &[STATE_DIM, h, h, action_dim], Activation::Tanh);
        actor.scale_last(0.01);
        let critic1 = Mlp::new(rng, &[STATE_DIM + action_dim, h, h, 1], Activation::Identity);
        let critic2 = Mlp::new(rng, &[STATE_DIM + action_dim, h, h, 1], Activation::Identity);
        Td3Agent {
            actor_opt: Adam::new(&actor, config.actor_lr),
            critic1_opt: Adam::new(&critic1, config.critic_lr),
            critic2_opt: Adam::new(&critic2, config.critic_lr),
            encoder_opt: Adam::new(&encoder, config.encoder_lr),
            encoder_target: encoder.clone(),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            encoder,
            actor,
            critic1,
            critic2,
            config,
            action_dim,
            steps: 0,
        }
    }

    pub fn encode(&self, graph: &GraphState) -> Result<Array1<f64>, AgentError> {
        Ok(self.encoder.encode(graph)?)
    }

    pub fn policy(&self, state: &Array1<f64>) -> Vec<f64> {
        self.actor
            .forward(&state.view().insert_axis(Axis(0)).to_owned())
            .row(0)
            .to_vec()
    }

    /// Deterministic action, plus clipped Gaussian noise when exploring.
    pub fn act<R: Rng + ?Sized>(
        &self,
        graph: &GraphState,
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>, AgentError> {
        let mut a = self.policy(&self.encode(graph)?);
        if explore && self.config.exploration_sigma > 0.0 {
            let n = Normal::new(0.0, self.config.exploration_sigma).expect("valid sigma");
            for v in a.iter_mut() {
                *v = (*v + n.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.action_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    fn q(critic: &Mlp, state: &Array2<f64>, action: &Array2<f64>) -> Array1<f64> {
        critic
            .forward(&concatenate![Axis(1), *state, *action])
            .column(0)
            .to_owned()
    }

    /// Bootstrapped targets for a batch, with target-policy smoothing noise
    /// drawn from `rng`.
    pub fn targets<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<Array1<f64>, AgentError> {
        let next = self.stack(batch.iter().map(|t| &t.next_state), &self.encoder_target)?;
        let raw = self.actor_target.forward(&next);
        let mut actions = Array2::zeros(raw.raw_dim());
        let noise = (self.config.target_sigma > 0.0)
            .then(|| Normal::new(0.0, self.config.target_sigma).expect("valid sigma"));
        for (i, row) in raw.rows().into_iter().enumerate() {
            let eps: Vec<f64> = match &noise {
                Some(n) => (0..row.len()).map(|_| n.sample(rng)).collect(),
                None => vec![0.0; row.len()],
            };
            let a = smoothed_target_action(&row.to_vec(), &eps, self.config.target_clip);
            actions.row_mut(i).assign(&Array1::from(a));
        }
        let q1 = Self::q(&self.critic1_target, &next, &actions);
        let q2 = if self.config.twin {
            Self::q(&self.critic2_target, &next, &actions)
        } else {
            q1.clone()
        };
        Ok(Array1::from_shape_fn(batch.len(), |i| {
            td_target(batch[i].reward, batch[i].done, self.config.gamma, q1[i], q2[i])
        }))
    }

    fn stack<'a>(
        &self,
        graphs: impl Iterator<Item = &'a GraphState>,
        encoder: &GcnEncoder,
    ) -> Result<Array2<f64>, AgentError> {
        let rows: Vec<Array1<f64>> = graphs.map(|g| encoder.encode(g)).collect::<Result<_, _>>()?;
        let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
        Ok(concatenate(Axis(0), &views).expect("equal widths"))
    }

    fn action_matrix(&self, batch: &[&Transition]) -> Result<Array2<f64>, AgentError> {
        let mut a = Array2::zeros((batch.len(), self.action_dim));
        for (i, t) in batch.iter().enumerate() {
            if t.action.len() != self.action_dim {
                return Err(AgentError::ActionLen {
                    got: t.action.len(),
                    expected: self.action_dim,
                });
            }
            a.row_mut(i).assign(&Array1::from(t.action.clone()));
        }
        Ok(a)
    }

    /// Mean squared TD error of the critics (summed over both when twin)
    /// against fixed targets `y`.
    pub fn critic_loss(&self, batch: &[&Transition], y: &Array1<f64>) -> Result<f64, AgentError> {
        Ok(self.critic_grads(batch, y)?.loss)
    }

    pub fn critic_grads(
        &self,
        batch: &[&Transition],
        y: &Array1<f64>,
    ) -> Result<CriticGrads, AgentError> {
        let b = batch.len() as f64;
        let caches = batch
            .iter()
            .map(|t| self.encoder.forward(&t.state))
            .collect::<Result<Vec<_>, _>>()?;
        let views: Vec<_> = caches.iter().map(|c| c.state.view().insert_axis(Axis(0))).collect();
        let states = concatenate(Axis(0), &views).expect("equal widths");
        let input = concatenate![Axis(1), states, self.action_matrix(batch)?];
        let mut out = CriticGrads {
            loss: 0.0,
            critic1: self.critic1.zero_grads(),
            critic2: self.critic2.zero_grads(),
            encoder: self.encoder.zero_grads(),
        };
        let mut d_state = Array2::zeros((batch.len(), STATE_DIM));
        let critics: Vec<(&Mlp, &mut Vec<Array2<f64>>)> = if self.config.twin {
            vec![(&self.critic1, &mut out.critic1), (&self.critic2, &mut out.critic2)]
        } else {
            vec![(&self.critic1, &mut out.critic1)]
        };
        let mut loss = 0.0;
        for (critic, grads) in critics {
            let cache = critic.forward_cached(&input);
            let err = cache.output().column(0).to_owned() - y;
            loss += err.mapv(|e| e * e).sum() / b;
            let d_out = (err * (2.0 / b)).insert_axis(Axis(1));
            let d_in = critic.backward(&cache, &d_out, grads);
            d_state += &d_in.slice(s![.., ..STATE_DIM]);
        }
        out.loss = loss;
        for (i, c) in caches.iter().enumerate() {
            self.encoder
                .backward(c, &d_state.row(i).to_owned(), &mut out.encoder);
        }
        Ok(out)
    }

    /// −mean Q1(s, π(s)) and its gradient for the actor parameters.
    pub fn actor_grads(&self, states: &Array2<f64>) -> (f64, Vec<Array2<f64>>) {
        let b = states.nrows() as f64;
        let a_cache = self.actor.forward_cached(states);
        let input = concatenate![Axis(1), *states, *a_cache.output()];
        let q_cache = self.critic1.forward_cached(&input);
        let loss = -q_cache.output().sum() / b;
        let mut scratch = self.critic1.zero_grads();
        let d_in = self.critic1.backward(
            &q_cache,
            &Array2::from_elem((states.nrows(), 1), -1.0 / b),
            &mut scratch,
        );
        let d_action = d_in.slice(s![.., STATE_DIM..]).to_owned();
        let mut grads = self.actor.zero_grads();
        self.actor.backward(&a_cache, &d_action, &mut grads);
        (loss, grads)
    }

    /// One gradient step on a minibatch.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<TrainReport, AgentError> {
        self.steps += 1;
        let y = self.targets(batch, rng)?;
        let states = self.stack(batch.iter().map(|t| &t.state), &self.encoder)?;
        let g = self.critic_grads(batch, &y)?;
        self.critic1_opt.step(&mut self.critic1, &g.critic1);
        if self.config.twin {
            self.critic2_opt.step(&mut self.critic2, &g.critic2);
        }
        self.encoder_opt.step(&mut self.encoder, &g.encoder);
        let mut report = TrainReport {
            critic_loss: g.loss,
            actor_loss: None,
        };
        if self.steps % self.config.policy_delay == 0 {
            let (loss, grads) = self.actor_grads(&states);
            self.actor_opt.step(&mut self.actor, &grads);
            let tau = self.config.tau;
            soft_update(&mut self.actor_target, &self.actor, tau);
            soft_update(&mut self.critic1_target, &self.critic1, tau);
            soft_update(&mut self.critic2_target, &self.critic2, tau);
            soft_update(&mut self.encoder_target, &self.encoder, tau);
            report.actor_loss = Some(loss);
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let json = serde_json::to_string(self).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| AgentError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Td3Agent, AgentError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| AgentError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::gcn::{GraphNode, NodeType};
    use crate::nn::{finite_difference, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_graph(rng: &mut ChaCha8Rng, n: usize) -> GraphState {
        GraphState {
            nodes: (0..n)
                .map(|i| {
                    let t = NodeType::ALL[i % 4];
                    GraphNode {
                        node_type: t,
                        features: (0..t.feature_len()).map(|_| rng.random_range(0.0..1.0)).collect(),
                        tokens: vec![format!("n{i}")],
                    }
                })
                .collect(),
            edges: (1..n).map(|i| (i - 1, i)).collect(),
        }
    }

    pub(crate) fn toy_batch(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<Transition> {
        (0..n)
            .map(|i| Transition {
                state: toy_graph(rng, 4 + i % 3),
                action: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-1.0..1.0),
                next_state: toy_graph(rng, 5),
                done: i % 4 == 0,
            })
            .collect()
    }

    fn small() -> Td3Config {
        Td3Config {
            hidden: 16,
            batch_size: 6,
            ..Td3Config::default()
        }
    }

    #[test]
    fn td_target_by_hand() {
        assert_eq!(td_target(1.0, false, 0.9, 2.0, 3.0), 1.0 + 0.9 * 2.0);
        assert_eq!(td_target(1.0, true, 0.9, 2.0, 3.0), 1.0);
        assert_eq!(
            smoothed_target_action(&[0.9, -0.2, 0.0], &[0.7, -0.1, -2.0], 0.5),
            vec![1.0, -0.2 - 0.1, -0.5]
        );
    }

    #[test]
    fn targets_without_noise_use_min_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cfg = small();
        cfg.target_sigma = 0.0;
        let agent = Td3Agent::new(cfg, 3, &mut rng);
        let batch = toy_batch(&mut rng, 3, 4);
        let refs: Vec<&Transition> = batch.iter().collect();
        let y = agent.targets(&refs, &mut rng).unwrap();
        for (i, t) in batch.iter().enumerate() {
            let s = agent.encoder_target.encode(&t.next_state).unwrap();
            let a = agent.actor_target.forward(&s.clone().insert_axis(Axis(0)));
            let x = concatenate![Axis(1), s.insert_axis(Axis(0)), a];
            let q1 = agent.critic1_target.forward(&x)[(0, 0)];
            let q2 = agent.critic2_target.forward(&x)[(0, 0)];
            let expect = t.reward + if t.done { 0.0 } else { 0.99 * q1.min(q2) };
            assert!((y[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_and_encoder_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let agent = Td3Agent::new(small(), 3, &mut rng);
        let batch = toy_batch(&mut rng, 3, 5);
        let refs: Vec<&Transition> = batch.iter().collect();
        let y = agent.targets(&refs, &mut rng).unwrap();
        let g = agent.critic_grads(&refs, &y).unwrap();
        let base = agent.clone();
        for t in 0..g.critic1.len() {
            let mut probe = base.clone();
            let fd = finite_difference(&mut probe.critic1, t, (0, 0), 1e-6, |c| {
                let mut a = base.clone();
                a.critic1 = c.clone();
                a.critic_loss(&refs, &y).unwrap()
            });
            assert!(relative_error(fd, g.critic1[t][(0, 0)]) < 1e-4, "critic1 {t}");
        }
        for t in 0..g.encoder.len() {
            let mut probe = base.encoder.clone();
            let fd = finite_difference(&mut probe, t, (0, 0), 1e-6, |e| {
                let mut a = base.clone();
                a.encoder = e.clone();
                a.critic_loss(&refs, &y).unwrap()
            });
            let an = g.encoder[t][(0, 0)];
            if fd.abs() > 1e-9 || an.abs() > 1e-9 {
                assert!(relative_error(fd, an) < 1e-4, "encoder {t}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn actor_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = Td3Agent::new(small(), 4, &mut rng);
        let states = Array2::from_shape_fn((5, STATE_DIM), |_| rng.random_range(-1.0..1.0));
        let (_, grads) = agent.actor_grads(&states);
        for t in 0..grads.len() {
            let (r, c) = grads[t].dim();
            for idx in [(0, 0), (r - 1, c - 1)] {
                let mut probe = agent.actor.clone();
                let fd = finite_difference(&mut probe, t, idx, 1e-6, |a| {
                    let mut ag = agent.clone();
                    ag.actor = a.clone();
                    ag.actor_grads(&states).0
                });
                let an = grads[t][idx];
                if fd.abs() > 1e-9 || an.abs() > 1e-9 {
                    assert!(relative_error(fd, an) < 1e-4, "actor {t}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn policy_delay_freezes_actor_and_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = Td3Agent::new(small(), 3, &mut rng);
        let batch = toy_batch(&mut rng, 3, 6);
        let refs: Vec<&Transition> = batch.iter().collect();
        let before = agent.clone();
        let r1 = agent.train_step(&refs, &mut rng).unwrap();
        assert!(r1.actor_loss.is_none());
        assert_eq!(agent.actor, before.actor);
        assert_eq!(agent.actor_target, before.actor_target);
        assert_eq!(agent.critic1_target, before.critic1_target);
        assert_eq!(agent.encoder_target, before.encoder_target);
        assert_ne!(agent.critic1, before.critic1);
        let mid = agent.clone();
        let r2 = agent.train_step(&refs, &mut rng).unwrap();
        assert!(r2.actor_loss.is_some());
        assert_ne!(agent.actor, mid.actor);
        assert_ne!(agent.actor_target, mid.actor_target);
    }

    #[test]
    fn ddpg_preset_updates_every_step_with_one_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = Td3Config::ddpg();
        cfg.hidden = 16;
        let mut agent = Td3Agent::new(cfg, 3, &mut rng);
        let batch = toy_batch(&mut rng, 3, 6);
        let refs: Vec<&Transition> = batch.iter().collect();
        let before = agent.clone();
        assert!(agent.train_step(&refs, &mut rng).unwrap().actor_loss.is_some());
        assert_eq!(agent.critic2, before.critic2);
        assert_ne!(agent.actor, before.actor);
    }

    #[test]
    fn critic_fits_constant_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut cfg = small();
        cfg.gamma = 0.0;
        let mut agent = Td3Agent::new(cfg, 2, &mut rng);
        let mut batch = toy_batch(&mut rng, 2, 6);
        for t in batch.iter_mut() {
            t.reward = 0.5;
        }
        let refs: Vec<&Transition> = batch.iter().collect();
        let first = agent.train_step(&refs, &mut rng).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..300 {
            last = agent.train_step(&refs, &mut rng).unwrap().critic_loss;
        }
        assert!(last < first * 0.05, "{first} -> {last}");
    }

    #[test]
    fn replay_buffer_wraps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut buf = ReplayBuffer::new(3);
        for (i, mut t) in toy_batch(&mut rng, 1, 5).into_iter().enumerate() {
            t.reward = i as f64;
            buf.push(t);
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.items.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
        assert_eq!(buf.sample(&mut rng, 10).len(), 10);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let agent = Td3Agent::new(small(), 3, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("agent.json");
        agent.save(&p).unwrap();
        assert_eq!(Td3Agent::load(&p).unwrap(), agent);
    }
}
