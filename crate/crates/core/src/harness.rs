//! Experiment configuration, the training loop and the command bodies
//! behind the `tsnsched` binary.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{default_mix, load_mix_csv, AdmissionEnv, EnvConfig, EnvError, EpochStats, FallbackReport};
use crate::gcl::{export_gcl, read_gcl_csv};
use crate::model::{
    build_topology_with_rate, load_flows_csv, two_bridge_line_spec, two_bridge_static_flows, Flow,
    ModelError, Topology, TopologySpec, DEFAULT_LINK_RATE_BPS, DEFAULT_TICK_NS,
};
use crate::scheduler::{solve_static, verify_schedule, ScheduleAssignment, ScheduleError, SchedulerConfig};
use crate::sim::{self, dispatch_plan, BeLoad, DispatchEntry, SimConfig, SimError, SimMetrics};
use crate::td3::{AgentError, ReplayBuffer, Td3Agent, Td3Config, Transition};

pub const METRICS_CSV_HEADER: &str =
    "epoch,total_flows,requested_flows,admission_rate,avg_latency_ns,jitter_std_ns";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("input error: {0}")]
    Input(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("checkpoint was trained on {trained} bridges, topology has {current}: retrain required")]
    RetrainRequired { trained: usize, current: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for infeasible instances, 3 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Infeasible(_) => 2,
            HarnessError::Input(_) | HarnessError::RetrainRequired { .. } => 3,
            HarnessError::Env(EnvError::Schedule(
                ScheduleError::Infeasible(_) | ScheduleError::BudgetExceeded { .. },
            )) => 2,
            HarnessError::Env(EnvError::Model(_) | EnvError::MixParse { .. } | EnvError::EmptyMix) => 3,
            _ => 1,
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Input(e.to_string())
    }
}

impl From<ScheduleError> for HarnessError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::Model(m) => HarnessError::Input(m.to_string()),
            other => HarnessError::Infeasible(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Topology JSON; the built-in two-bridge line when absent.
    pub topology: Option<PathBuf>,
    /// Static flows CSV; the built-in two TT plus two AVB set when absent.
    pub flows: Option<PathBuf>,
    /// Arrival mix CSV; the three-class TT mix when absent.
    pub mix: Option<PathBuf>,
    pub seed: u64,
    /// Seed of the arrival stream; derived from `seed` when absent.
    pub arrival_seed: Option<u64>,
    pub omega: usize,
    pub epochs: usize,
    pub link_rate_bps: u64,
    pub guard_band_ns: i64,
    pub tick_ns: i64,
    pub eval_hyperperiods: usize,
    pub sim_hyperperiods: usize,
    pub be_rate_hz: f64,
    pub max_steps_per_epoch: usize,
    pub warmup_steps: usize,
    pub gradient_steps: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub checkpoint_every: usize,
    pub output_dir: PathBuf,
    /// Write one `decisions.csv` row per offered flow during training.
    pub decision_log: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: None,
            flows: None,
            mix: None,
            seed: 0,
            arrival_seed: None,
            omega: crate::gcl::DEFAULT_OMEGA,
            epochs: 200,
            link_rate_bps: DEFAULT_LINK_RATE_BPS,
            guard_band_ns: 608,
            tick_ns: DEFAULT_TICK_NS,
            eval_hyperperiods: 4,
            sim_hyperperiods: 10,
            be_rate_hz: 20_000.0,
            max_steps_per_epoch: 64,
            warmup_steps: 1000,
            gradient_steps: 1,
            hidden: 256,
            batch_size: 100,
            checkpoint_every: 50,
            output_dir: PathBuf::from("out"),
            decision_log: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 {
            return Err(HarnessError::Input("epochs must be at least 1".into()));
        }
        if self.omega == 0 {
            return Err(HarnessError::Input("omega must be at least 1".into()));
        }
        for p in [&self.topology, &self.flows, &self.mix].into_iter().flatten() {
            if !p.exists() {
                return Err(HarnessError::Input(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig {
            tick: self.tick_ns,
            omega: self.omega,
            ..SchedulerConfig::default()
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            be_load: BeLoad {
                rate_hz: self.be_rate_hz,
                ..BeLoad::default()
            },
            guard_band: self.guard_band_ns,
            trace: false,
        }
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            omega: self.omega,
            eval_hyperperiods: self.eval_hyperperiods,
            guard_band: self.guard_band_ns,
            tick: self.tick_ns,
            be_load: self.sim().be_load,
            max_steps_per_epoch: self.max_steps_per_epoch,
            sim_seed: self.seed,
            ..EnvConfig::default()
        }
    }

    pub fn td3(&self, ddpg: bool) -> Td3Config {
        let base = if ddpg { Td3Config::ddpg() } else { Td3Config::default() };
        Td3Config {
            hidden: self.hidden,
            batch_size: self.batch_size,
            ..base
        }
    }

    fn arrival_seed(&self) -> u64 {
        self.arrival_seed.unwrap_or(self.seed ^ 0x5EED_A11E)
    }
}

pub fn load_topology(cfg: &ExperimentConfig) -> Result<Topology, HarnessError> {
    let spec = match &cfg.topology {
        Some(p) => TopologySpec::load(p)?,
        None => two_bridge_line_spec(),
    };
    Ok(build_topology_with_rate(&spec, cfg.link_rate_bps)?)
}

pub fn load_static_flows(cfg: &ExperimentConfig) -> Result<Vec<Flow>, HarnessError> {
    match &cfg.flows {
        Some(p) => Ok(load_flows_csv(p, cfg.link_rate_bps)?),
        None => Ok(two_bridge_static_flows()),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub assignment: ScheduleAssignment,
    pub violations: usize,
    pub beta: usize,
}

/// Solve the static set and write `schedule.json`, `gcl.csv`,
/// `dispatch.json` and `report.txt` into the output directory.
pub fn cmd_solve_static(cfg: &ExperimentConfig) -> Result<SolveReport, HarnessError> {
    cfg.validate()?;
    let topo = load_topology(cfg)?;
    let flows = load_static_flows(cfg)?;
    let assign = solve_static(&flows, &topo, &cfg.scheduler())?;
    let violations = verify_schedule(&assign, &flows, &topo);
    let gcls = assign
        .to_gcls(&topo, cfg.omega)
        .map_err(|e| HarnessError::Infeasible(e.to_string()))?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("schedule.json"), assign.to_json())?;
    fs::write(cfg.output_dir.join("gcl.csv"), export_gcl(gcls.ports.values()))?;
    fs::write(
        cfg.output_dir.join("dispatch.json"),
        serde_json::to_string_pretty(&dispatch_plan(&assign)).expect("plan serializes"),
    )?;
    let mut report = format!(
        "objective {}\n{} violations\n",
        assign.objective,
        violations.len()
    );
    for v in &violations {
        report.push_str(&format!("{v:?}\n"));
    }
    fs::write(cfg.output_dir.join("report.txt"), report)?;
    Ok(SolveReport {
        beta: gcls.beta(),
        violations: violations.len(),
        assignment: assign,
    })
}

/// Simulate a GCL CSV plus dispatch document, or the solved static set
/// when either is missing. Writes `metrics.json` and, if requested,
/// `trace.csv`.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    gcl: Option<&Path>,
    dispatch: Option<&Path>,
    trace: bool,
) -> Result<SimMetrics, HarnessError> {
    cfg.validate()?;
    let topo = load_topology(cfg)?;
    let flows = load_static_flows(cfg)?;
    let (gcls, sim_flows) = match (gcl, dispatch) {
        (Some(g), Some(d)) => {
            let plan: Vec<DispatchEntry> = serde_json::from_str(&fs::read_to_string(d)?)
                .map_err(|e| HarnessError::Input(format!("{}: {e}", d.display())))?;
            let sim_flows = sim::sim_flows_from_plan(&plan, &flows, &topo)?;
            let hp = crate::model::hyperperiod(&flows)?;
            let gcls = read_gcl_csv(fs::File::open(g)?, &topo, hp, cfg.omega)
                .map_err(|e| HarnessError::Input(e.to_string()))?;
            (gcls, sim_flows)
        }
        _ => {
            let assign = solve_static(&flows, &topo, &cfg.scheduler())?;
            let gcls = assign
                .to_gcls(&topo, cfg.omega)
                .map_err(|e| HarnessError::Infeasible(e.to_string()))?;
            (gcls, sim::sim_flows_from_assignment(&assign, &flows))
        }
    };
    let mut sim_cfg = cfg.sim();
    sim_cfg.trace = trace;
    let mut simulator = sim::Simulator::new(&topo, gcls, sim_flows, sim_cfg, cfg.seed)?;
    let horizon = cfg.sim_hyperperiods.max(1) as i64 * simulator.hyperperiod();
    simulator.run_until(horizon);
    let metrics = simulator.metrics();
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("metrics.json"), metrics.to_json())?;
    if trace {
        fs::write(cfg.output_dir.join("trace.csv"), sim::trace_csv(simulator.trace()))?;
    }
    Ok(metrics)
}

/// How actions are chosen during a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Uniform random actions throughout; no learning.
    Random,
    /// Exploring agent with warm-up and gradient steps.
    Learn,
    /// Noise-free agent, no learning.
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stats: EpochStats,
    pub max_beta: usize,
    /// Accepted flows whose merged schedule failed verification.
    pub safety_violations: usize,
    /// Steps after which a committed flow missed its deadline in simulation.
    pub deadline_misses: usize,
    /// Steps where beta exceeded omega, or reached it without ending the epoch.
    pub budget_violations: usize,
    pub fallback: Option<FallbackReport>,
    /// True when the epoch ended with the budget exactly full.
    pub ended_full: bool,
    pub mean_reward: f64,
    /// Per-step rows, filled only when the decision log is enabled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<Decision>,
}

pub const DECISION_CSV_HEADER: &str =
    "epoch,step,flow_id,accepted,admitted,structural_reject,r_o,r_s,r_b,beta,reward,done";

/// One offered flow and what became of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub epoch: usize,
    pub step: usize,
    pub flow_id: String,
    pub accepted: bool,
    pub admitted: bool,
    pub structural_reject: bool,
    pub r_o: u8,
    pub r_s: u8,
    pub r_b: u8,
    pub beta: usize,
    pub reward: f64,
    pub done: bool,
}

pub fn decisions_csv(records: &[EpochRecord]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for d in records.iter().flat_map(|r| &r.decisions) {
        w.serialize(d).map_err(|e| HarnessError::Io(std::io::Error::other(e)))?;
    }
    let body = w.into_inner().map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))?;
    Ok(format!("{DECISION_CSV_HEADER}\n{}", String::from_utf8_lossy(&body)))
}

pub fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.3},{:.3}\n",
            r.epoch,
            r.stats.total_flows,
            r.stats.requested,
            r.stats.admission_rate,
            r.stats.avg_latency_ns,
            r.stats.jitter_std_ns
        ));
    }
    out
}

/// Run `epochs` epochs. `on_epoch` sees each finished record.
pub fn run_epochs(
    env: &mut AdmissionEnv,
    agent: &mut Td3Agent,
    buffer: &mut ReplayBuffer,
    policy: Policy,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
    mut on_epoch: impl FnMut(&EpochRecord, &Td3Agent) -> Result<(), HarnessError>,
) -> Result<Vec<EpochRecord>, HarnessError> {
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut env_steps = 0usize;
    let omega = env.config().omega;
    for epoch in 1..=cfg.epochs {
        let mut state = env.reset()?;
        let mut max_beta = env.gcls().beta();
        let mut safety_violations = 0;
        let mut deadline_misses = 0;
        let mut budget_violations = 0;
        let mut reward_sum = 0.0;
        let mut steps = 0usize;
        let mut decisions = Vec::new();
        loop {
            let action = match policy {
                Policy::Random => agent.random_action(rng),
                Policy::Learn if env_steps < cfg.warmup_steps => agent.random_action(rng),
                Policy::Learn => agent.act(&state, true, rng)?,
                Policy::Greedy => agent.act(&state, false, rng)?,
            };
            let res = env.step(&action)?;
            env_steps += 1;
            steps += 1;
            reward_sum += res.reward;
            max_beta = max_beta.max(res.info.beta);
            if res.info.beta > omega || (res.info.beta == omega && !res.done) {
                budget_violations += 1;
            }
            if res.info.admitted {
                safety_violations += verify_schedule(env.assignment(), env.flows(), env.topology()).len();
                if !crate::env::reward_o(env.flows(), env.metrics()) {
                    deadline_misses += 1;
                }
            }
            if cfg.decision_log {
                let b = &res.info.breakdown;
                decisions.push(Decision {
                    epoch,
                    step: steps,
                    flow_id: res.info.flow_id.clone(),
                    accepted: res.info.accepted,
                    admitted: res.info.admitted,
                    structural_reject: res.info.structural_reject,
                    r_o: b.r_o,
                    r_s: b.r_s,
                    r_b: b.r_b,
                    beta: res.info.beta,
                    reward: res.reward,
                    done: res.done,
                });
            }
            let done = res.done;
            let ended_full = done && res.info.beta == omega;
            let fallback = res.info.fallback.clone();
            if policy == Policy::Learn {
                buffer.push(Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: res.reward,
                    next_state: res.state.clone(),
                    done: done && !res.truncated,
                });
                if env_steps >= cfg.warmup_steps && buffer.len() >= agent.config.batch_size {
                    for _ in 0..cfg.gradient_steps {
                        let batch = buffer.sample(rng, agent.config.batch_size);
                        agent.train_step(&batch, rng)?;
                    }
                }
            }
            state = res.state;
            if done {
                let record = EpochRecord {
                    epoch,
                    stats: env.epoch_stats(),
                    max_beta,
                    safety_violations,
                    deadline_misses,
                    budget_violations,
                    fallback,
                    ended_full,
                    mean_reward: reward_sum / steps as f64,
                    decisions: std::mem::take(&mut decisions),
                };
                log::info!(
                    "epoch {epoch}: admitted {}/{} beta {}",
                    record.stats.admitted,
                    record.stats.requested,
                    record.stats.beta
                );
                on_epoch(&record, agent)?;
                records.push(record);
                break;
            }
        }
    }
    Ok(records)
}

/// Checkpoint with the topology shape it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub bridge_count: usize,
    pub action_dim: usize,
    pub agent: Td3Agent,
}

impl AgentCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string(self).expect("checkpoint serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AgentCheckpoint, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
    }
}

pub fn build_env(cfg: &ExperimentConfig) -> Result<AdmissionEnv, HarnessError> {
    let topo = load_topology(cfg)?;
    let flows = load_static_flows(cfg)?;
    let mix = match &cfg.mix {
        Some(p) => load_mix_csv(p)?,
        None => default_mix(),
    };
    Ok(AdmissionEnv::new(topo, flows, mix, cfg.env(), cfg.arrival_seed())?)
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    pub agent: Td3Agent,
    pub csv_path: PathBuf,
}

/// Train for `cfg.epochs` epochs, writing `metrics.csv`, periodic
/// checkpoints and `agent.json`.
pub fn cmd_train(cfg: &ExperimentConfig, ddpg: bool) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let mut env = build_env(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Td3Agent::new(cfg.td3(ddpg), env.action_dim(), &mut rng);
    let mut buffer = ReplayBuffer::new(agent.config.buffer_capacity);
    let bridges = env.topology().bridge_count();
    let action_dim = env.action_dim();
    fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.clone();
    let every = cfg.checkpoint_every;
    let records = run_epochs(&mut env, &mut agent, &mut buffer, Policy::Learn, cfg, &mut rng, |r, a| {
        if every > 0 && r.epoch % every == 0 {
            AgentCheckpoint {
                bridge_count: bridges,
                action_dim,
                agent: a.clone(),
            }
            .save(&out.join(format!("checkpoint_{:05}.json", r.epoch)))?;
        }
        Ok(())
    })?;
    let csv_path = cfg.output_dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(&records))?;
    if cfg.decision_log {
        fs::write(cfg.output_dir.join("decisions.csv"), decisions_csv(&records)?)?;
    }
    AgentCheckpoint {
        bridge_count: bridges,
        action_dim,
        agent: agent.clone(),
    }
    .save(&cfg.output_dir.join("agent.json"))?;
    Ok(TrainOutcome {
        records,
        agent,
        csv_path,
    })
}

/// Uniform random actions over the same arrival stream; no learning.
pub fn cmd_random_baseline(cfg: &ExperimentConfig) -> Result<Vec<EpochRecord>, HarnessError> {
    cfg.validate()?;
    let mut env = build_env(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Td3Agent::new(cfg.td3(false), env.action_dim(), &mut rng);
    let mut buffer = ReplayBuffer::new(1);
    run_epochs(&mut env, &mut agent, &mut buffer, Policy::Random, cfg, &mut rng, |_, _| Ok(()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowVerdict {
    pub flow_id: String,
    pub deadline_ns: i64,
    pub max_latency_ns: Option<i64>,
    pub met: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub stats: EpochStats,
    pub flows: Vec<FlowVerdict>,
}

/// One noise-free epoch with a trained checkpoint; writes `evaluation.json`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let ckpt = AgentCheckpoint::load(checkpoint)?;
    let mut env = build_env(cfg)?;
    let current = env.topology().bridge_count();
    if ckpt.bridge_count != current || ckpt.action_dim != env.action_dim() {
        return Err(HarnessError::RetrainRequired {
            trained: ckpt.bridge_count,
            current,
        });
    }
    let mut agent = ckpt.agent;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut buffer = ReplayBuffer::new(1);
    let one = ExperimentConfig {
        epochs: 1,
        ..cfg.clone()
    };
    let rec = run_epochs(&mut env, &mut agent, &mut buffer, Policy::Greedy, &one, &mut rng, |_, _| Ok(()))?
        .pop()
        .expect("one epoch");
    let flows = env
        .flows()
        .iter()
        .map(|f| {
            let m = env.metrics().flows.get(&f.id);
            let max = m.and_then(|m| m.latencies.iter().max().copied());
            FlowVerdict {
                flow_id: f.id.clone(),
                deadline_ns: f.deadline,
                max_latency_ns: max,
                met: max.is_none_or(|l| l <= f.deadline) && m.is_none_or(|m| m.dropped == 0),
            }
        })
        .collect();
    let report = EvalReport {
        stats: rec.stats,
        flows,
    };
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(
        cfg.output_dir.join("evaluation.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// Run `k` copies of `job` with seeds `seed..seed+k`, each in its own
/// output subdirectory, on separate threads.
pub fn run_parallel_seeds<T: Send>(
    cfg: &ExperimentConfig,
    k: usize,
    job: impl Fn(&ExperimentConfig) -> Result<T, HarnessError> + Sync,
) -> Vec<Result<T, HarnessError>> {
    let configs: Vec<ExperimentConfig> = (0..k as u64)
        .map(|i| ExperimentConfig {
            seed: cfg.seed + i,
            arrival_seed: cfg.arrival_seed.map(|s| s + i),
            output_dir: cfg.output_dir.join(format!("seed_{}", cfg.seed + i)),
            ..cfg.clone()
        })
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(|| job(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed worker panicked"))
            .collect()
    })
}

/// 50-epoch (or shorter) trailing moving average.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &values[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            epochs: 2,
            warmup_steps: 5,
            hidden: 16,
            batch_size: 4,
            max_steps_per_epoch: 6,
            eval_hyperperiods: 1,
            output_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn solve_static_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let rep = cmd_solve_static(&small(dir.path())).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.assignment.objective, 0);
        let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(report.contains("0 violations"));
        assert!(dir.path().join("gcl.csv").exists());
    }

    #[test]
    fn simulate_from_written_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        cmd_solve_static(&cfg).unwrap();
        let m = cmd_simulate(
            &cfg,
            Some(&dir.path().join("gcl.csv")),
            Some(&dir.path().join("dispatch.json")),
            true,
        )
        .unwrap();
        assert!(m.flows.values().all(|f| f.jitter_std == 0.0 && f.delivered > 0));
        assert!(dir.path().join("trace.csv").exists());
    }

    #[test]
    fn empty_flow_file_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let flows = dir.path().join("flows.csv");
        fs::write(&flows, format!("{}\n", crate::model::FLOWS_CSV_HEADER)).unwrap();
        let cfg = ExperimentConfig {
            flows: Some(flows),
            ..small(dir.path())
        };
        let e = cmd_solve_static(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("no flows"), "{e}");
    }

    #[test]
    fn train_and_evaluate_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let out = cmd_train(&cfg, false).unwrap();
        let csv = fs::read_to_string(&out.csv_path).unwrap();
        assert_eq!(csv.lines().next().unwrap(), METRICS_CSV_HEADER);
        assert_eq!(csv.lines().count(), 3);
        let rep = cmd_evaluate(&cfg, &dir.path().join("agent.json")).unwrap();
        assert!(rep.flows.iter().all(|f| f.met));
    }

    #[test]
    fn decision_log_has_one_row_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { decision_log: true, ..small(dir.path()) };
        let out = cmd_train(&cfg, false).unwrap();
        let steps: usize = out.records.iter().map(|r| r.stats.steps).sum();
        let text = fs::read_to_string(dir.path().join("decisions.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(DECISION_CSV_HEADER));
        assert_eq!(lines.count(), steps);
        let quiet = tempfile::tempdir().unwrap();
        cmd_train(&small(quiet.path()), false).unwrap();
        assert!(!quiet.path().join("decisions.csv").exists());
    }

    #[test]
    fn evaluate_rejects_other_topology() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { epochs: 1, ..small(dir.path()) };
        cmd_train(&cfg, true).unwrap();
        let mut spec = two_bridge_line_spec();
        spec.nodes.push(crate::model::DeviceSpec {
            id: "BR3".into(),
            kind: crate::model::DeviceKind::Bridge,
        });
        spec.links.push(crate::model::LinkSpec {
            a: "BR2".into(),
            b: "BR3".into(),
            rate_bps: None,
        });
        let topo_path = dir.path().join("three.json");
        fs::write(&topo_path, serde_json::to_string(&spec).unwrap()).unwrap();
        let other = ExperimentConfig {
            topology: Some(topo_path),
            ..cfg
        };
        let e = cmd_evaluate(&other, &dir.path().join("agent.json")).unwrap_err();
        assert!(e.to_string().contains("retrain required"));
    }

    #[test]
    fn moving_average_short_prefix() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }
}
