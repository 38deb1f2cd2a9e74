//! Admission environment for dynamically arriving time-triggered flows.
//!
//! Each step offers one incoming flow. The agent's raw action in [-1, 1]
//! decodes into accept/reject, a queue choice, a dispatch offset and one
//! gate opening per bridge and phase. An accepted placement is checked
//! against the committed gate control lists, merged, verified, simulated
//! for a few hyperperiods and only then committed. An epoch ends when the
//! fullest port's list reaches the budget, when the next accepted flow
//! would overflow it, or after `max_steps_per_epoch` offers.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcl::{be_gaps, GateEvent, GclError, GclSet};
use crate::gcn::{GraphNode, GraphState, NodeType};
use crate::model::{
    default_datapath, derive_datapath, hyperperiod_of, DeviceKind, Flow, FlowKind, ModelError,
    Nanos, NodeKind, Topology, DEFAULT_TICK_NS, MTU_BYTES, QUEUE_BE, QUEUE_RESERVED,
};
use crate::scheduler::{
    solve_with_paths, verify_schedule, FlowSchedule, ScheduleAssignment, ScheduleError,
    SchedulerConfig,
};
use crate::sim::{self, BeLoad, SimConfig, SimError, SimFlow, SimMetrics};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gcl(#[from] GclError),
    #[error("flow mix is empty")]
    EmptyMix,
    #[error("no talker-to-listener routes in the topology")]
    NoRoutes,
    #[error("action has {got} entries, expected {expected}")]
    ActionLen { got: usize, expected: usize },
    #[error("flow mix line {line}: {msg}")]
    MixParse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One row of the arrival mix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixEntry {
    pub size_bytes: u32,
    pub period_ns: Nanos,
    pub deadline_ns: Nanos,
    pub pcp: u8,
}

pub const MIX_CSV_HEADER: &str = "size_bytes,period_ns,deadline_ns,pcp";

/// Three TT classes, 1 ms deadline, highest priority.
pub fn default_mix() -> Vec<MixEntry> {
    [(50, 250_000), (100, 500_000), (500, 1_000_000)]
        .into_iter()
        .map(|(size_bytes, period_ns)| MixEntry {
            size_bytes,
            period_ns,
            deadline_ns: 1_000_000,
            pcp: 7,
        })
        .collect()
}

pub fn read_mix_csv<R: std::io::Read>(reader: R) -> Result<Vec<MixEntry>, EnvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<MixEntry>().enumerate() {
        let line = i + 2;
        let e = rec.map_err(|e| EnvError::MixParse {
            line,
            msg: e.to_string(),
        })?;
        if e.size_bytes == 0 || e.size_bytes > MTU_BYTES || e.period_ns <= 0 || e.deadline_ns <= 0
        {
            return Err(EnvError::MixParse {
                line,
                msg: "size, period and deadline must be positive and within the MTU".into(),
            });
        }
        out.push(e);
    }
    if out.is_empty() {
        return Err(EnvError::EmptyMix);
    }
    Ok(out)
}

pub fn load_mix_csv(path: impl AsRef<Path>) -> Result<Vec<MixEntry>, EnvError> {
    read_mix_csv(std::fs::File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub omega: usize,
    pub eval_hyperperiods: usize,
    pub guard_band: Nanos,
    pub tick: Nanos,
    pub be_load: BeLoad,
    pub max_steps_per_epoch: usize,
    /// Require the candidate to sit inside the guard-shrunk gap instead of
    /// merely overlapping it.
    pub strict_be_containment: bool,
    pub fallback_node_limit: u64,
    pub sim_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            omega: crate::gcl::DEFAULT_OMEGA,
            eval_hyperperiods: 4,
            guard_band: 608,
            tick: DEFAULT_TICK_NS,
            be_load: BeLoad {
                rate_hz: 20_000.0,
                ..BeLoad::default()
            },
            max_steps_per_epoch: 64,
            strict_be_containment: false,
            fallback_node_limit: 2_000_000,
            sim_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedAction {
    pub accept: bool,
    pub reserved: bool,
    pub dispatch: Nanos,
    /// `gate_opens[phase][bridge]`, absolute within the hyperperiod.
    pub gate_opens: Vec<Vec<Nanos>>,
}

impl DecodedAction {
    pub fn schedule(&self, flow: &Flow, path: crate::model::Datapath) -> FlowSchedule {
        let hop_starts = self
            .gate_opens
            .iter()
            .enumerate()
            .map(|(k, opens)| {
                let mut v = vec![k as Nanos * flow.period + self.dispatch];
                v.extend(opens);
                v
            })
            .collect();
        FlowSchedule {
            flow_id: flow.id.clone(),
            offset: self.dispatch,
            path,
            hop_starts,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("action has {got} entries, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("empty interval [{lo}, {hi}] for coordinate {index}")]
    EmptyInterval { index: usize, lo: Nanos, hi: Nanos },
    #[error("flow needs {needed} phases or bridges, action encodes {available}")]
    Capacity { needed: usize, available: usize },
}

/// Map `raw` from [-1, 1] into `[lo, hi]` on a tick grid anchored at `lo`;
/// the top end is clamped so both bounds are reachable.
fn scale(raw: f64, lo: Nanos, hi: Nanos, tick: Nanos) -> Nanos {
    let u = (raw.clamp(-1.0, 1.0) + 1.0) / 2.0;
    let steps = (u * (hi - lo) as f64 / tick as f64).round() as Nanos;
    (lo + steps * tick).min(hi)
}

/// Decode a raw action for `flow` along `path`.
///
/// Layout: `[accept, queue, dispatch, opens...]` with opens laid out phase
/// by phase, `max_bridges` slots per phase. Each bridge window must start
/// after the previous hop ends plus the inter-frame gap, and late enough
/// that the remaining hops still finish inside the period.
pub fn decode_action(
    raw: &[f64],
    flow: &Flow,
    path: &crate::model::Datapath,
    hyperperiod: Nanos,
    max_bridges: usize,
    max_phases: usize,
    tick: Nanos,
) -> Result<DecodedAction, DecodeError> {
    let expected = 3 + max_bridges * max_phases;
    if raw.len() != expected {
        return Err(DecodeError::Length {
            got: raw.len(),
            expected,
        });
    }
    let hops = &path.hops;
    let m = hops.len() - 1;
    let n = flow.instances(hyperperiod);
    let p = flow.period;
    if n > max_phases || m > max_bridges {
        return Err(DecodeError::Capacity {
            needed: n.max(m),
            available: if n > max_phases { max_phases } else { max_bridges },
        });
    }
    // tail[f]: no-wait time from the start of hop f to the end of the last hop
    let mut tail = vec![0; hops.len() + 1];
    for f in (0..hops.len()).rev() {
        let gap = if f + 1 < hops.len() { hops[f].ifg } else { 0 };
        tail[f] = tail[f + 1] + hops[f].duration + gap;
    }
    let check = |index, lo: Nanos, hi: Nanos| {
        if lo > hi {
            Err(DecodeError::EmptyInterval { index, lo, hi })
        } else {
            Ok(())
        }
    };
    check(2, 0, p - tail[0])?;
    let dispatch = scale(raw[2], 0, p - tail[0], tick);
    let mut gate_opens = Vec::with_capacity(n);
    for k in 0..n {
        let base = k as Nanos * p;
        let mut prev = base + dispatch;
        let mut opens = Vec::with_capacity(m);
        for j in 1..=m {
            let index = 3 + k * max_bridges + (j - 1);
            let lo = prev + hops[j - 1].duration + hops[j - 1].ifg;
            let hi = base + p - tail[j];
            check(index, lo, hi)?;
            let g = scale(raw[index], lo, hi, tick);
            opens.push(g);
            prev = g;
        }
        gate_opens.push(opens);
    }
    Ok(DecodedAction {
        accept: raw[0] > 0.0,
        reserved: raw[1] > 0.0,
        dispatch,
        gate_opens,
    })
}

/// Scheduled-queue check: `[open, close)` must not overlap any event.
pub fn reward_s(open: Nanos, close: Nanos, events: &[GateEvent]) -> bool {
    !events.iter().any(|e| open < e.close && close > e.open)
}

/// Best-effort check against the gaps with guard band `lg`. The default
/// form asks for overlap with some guard-shrunk gap; `strict` asks for
/// containment in one. Gaps no longer than `2 * lg` never qualify.
pub fn reward_b(open: Nanos, close: Nanos, gaps: &[(Nanos, Nanos)], lg: Nanos, strict: bool) -> bool {
    gaps.iter().any(|&(o, c)| {
        if c - lg <= o + lg {
            // nothing usable left once both guard bands are removed
            false
        } else if strict {
            open >= o + lg && close <= c - lg
        } else {
            open < c - lg && close > o + lg
        }
    })
}

/// Deadline check over simulated flows. A dropped scheduled frame counts
/// as a miss.
pub fn reward_o(flows: &[Flow], metrics: &SimMetrics) -> bool {
    flows.iter().all(|f| match metrics.flows.get(&f.id) {
        Some(m) => m.dropped == 0 && m.latencies.iter().all(|&l| l <= f.deadline),
        None => true,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_o: u8,
    pub r_s: u8,
    pub r_b: u8,
    pub accept: u8,
    pub gcl_penalty: f64,
    pub drop_penalty: f64,
    pub jitter_penalty: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_o: bool, r_s: bool, r_b: bool, accept: bool, beta: usize, omega: usize, metrics: &SimMetrics) -> RewardBreakdown {
        let (fd, fc) = (metrics.dropped_total() as f64, metrics.contained_total() as f64);
        let drop_penalty = if fd + fc == 0.0 { 0.0 } else { fd / (fd + fc) };
        let jitter_penalty = jitter_ratio(metrics);
        let gcl_penalty = beta as f64 / omega as f64;
        let gate = (r_o && r_s && r_b && accept) as u8 as f64;
        RewardBreakdown {
            r_o: r_o as u8,
            r_s: r_s as u8,
            r_b: r_b as u8,
            accept: accept as u8,
            gcl_penalty,
            drop_penalty,
            jitter_penalty,
            total: gate - gcl_penalty - drop_penalty - jitter_penalty,
        }
    }
}

/// Mean over flows of latency standard deviation divided by mean latency.
pub fn jitter_ratio(metrics: &SimMetrics) -> f64 {
    let ratios: Vec<f64> = metrics
        .flows
        .values()
        .filter(|m| !m.latencies.is_empty())
        .map(|m| {
            if m.mean_latency == 0.0 {
                0.0
            } else {
                m.jitter_std / m.mean_latency
            }
        })
        .collect();
    if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    }
}

/// Running maxima used to scale count features.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountScale {
    pub flows_per_node: f64,
    pub contained: f64,
}

impl CountScale {
    fn norm(max: &mut f64, v: f64) -> f64 {
        *max = max.max(v).max(1.0);
        v / *max
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Build the typed feature graph for the encoder.
#[allow(clippy::too_many_arguments)]
pub fn assemble_state(
    topology: &Topology,
    flows: &[Flow],
    assignment: &ScheduleAssignment,
    gcls: &GclSet,
    metrics: &SimMetrics,
    pending: Option<&Flow>,
    scale: &mut CountScale,
) -> GraphState {
    let hp = gcls.hyperperiod as f64;
    let omega = gcls.omega as f64;
    let mtu = MTU_BYTES as f64;
    let observed = |f: &Flow| -> (f64, f64, f64) {
        match metrics.flows.get(&f.id) {
            Some(m) if !m.latencies.is_empty() => (
                m.mean_latency / f.deadline as f64,
                if m.mean_latency > 0.0 { m.jitter_std / m.mean_latency } else { 0.0 },
                m.delivered as f64 / m.dispatched.max(1) as f64,
            ),
            _ => (0.0, 0.0, 0.0),
        }
    };
    let mut nodes = Vec::with_capacity(topology.nodes.len());
    for node in &topology.nodes {
        let n = match node.kind {
            NodeKind::Talker => {
                let own: Vec<&Flow> = flows.iter().filter(|f| f.source == node.id).collect();
                let offset = |f: &Flow| assignment.get(&f.id).map(|s| s.offset).unwrap_or(0) as f64;
                let mut features = vec![
                    mean(own.iter().map(|f| f.weight as f64 / 7.0)),
                    mean(own.iter().map(|f| f.size_bytes as f64 / mtu)),
                    mean(own.iter().map(|f| f.period as f64 / hp)),
                    mean(own.iter().map(|f| f.deadline as f64 / hp)),
                    mean(own.iter().map(|f| offset(f) / hp)),
                    mean(own.iter().map(|f| observed(f).0)),
                    CountScale::norm(&mut scale.flows_per_node, own.len() as f64),
                ];
                let mut tokens = vec![node.id.clone()];
                match pending.filter(|p| p.source == node.id) {
                    Some(p) => {
                        features.extend([1.0, p.size_bytes as f64 / mtu, p.period as f64 / hp]);
                        tokens.push(p.destination.clone());
                    }
                    None => features.extend([0.0, 0.0, 0.0]),
                }
                GraphNode {
                    node_type: NodeType::Talker,
                    features,
                    tokens,
                }
            }
            NodeKind::Listener => {
                let inc: Vec<&Flow> = flows.iter().filter(|f| f.destination == node.id).collect();
                GraphNode {
                    node_type: NodeType::Listener,
                    features: vec![
                        CountScale::norm(&mut scale.flows_per_node, inc.len() as f64),
                        mean(inc.iter().map(|f| observed(f).0)),
                        mean(inc.iter().map(|f| observed(f).1)),
                        mean(inc.iter().map(|f| observed(f).2)),
                    ],
                    tokens: vec![node.id.clone()],
                }
            }
            NodeKind::BridgeQueue => {
                let q = node.queue.as_ref().expect("queue vertex carries queue info");
                let ports: Vec<String> = topology
                    .links
                    .iter()
                    .filter(|l| l.from == q.switch_id)
                    .map(|l| l.port_name())
                    .collect();
                let (fc, fd) = metrics
                    .queues
                    .iter()
                    .filter(|m| m.switch_id == q.switch_id && m.queue == q.queue_id)
                    .fold((0.0, 0.0), |(c, d), m| (c + m.contained as f64, d + m.dropped as f64));
                let drop_ratio = if fc + fd == 0.0 { 0.0 } else { fd / (fc + fd) };
                let contained = CountScale::norm(&mut scale.contained, fc);
                let tokens = vec![q.switch_id.clone(), format!("Q{}", q.queue_id)];
                if q.queue_id == QUEUE_BE {
                    let gap_frac = ports
                        .iter()
                        .filter_map(|p| gcls.port(p))
                        .map(|g| g.be_gaps().iter().map(|(o, c)| (c - o) as f64).sum::<f64>() / hp)
                        .fold(1.0, f64::min);
                    GraphNode {
                        node_type: NodeType::BeQueue,
                        features: vec![gap_frac, contained, drop_ratio],
                        tokens,
                    }
                } else {
                    let lists: Vec<_> = ports.iter().filter_map(|p| gcls.port(p)).collect();
                    let open: f64 = lists
                        .iter()
                        .flat_map(|g| g.events())
                        .filter(|e| e.queue == q.queue_id)
                        .map(|e| (e.close - e.open) as f64)
                        .sum();
                    let fullest = lists.iter().map(|g| g.beta()).max().unwrap_or(0) as f64;
                    GraphNode {
                        node_type: NodeType::ScheduledQueue,
                        features: vec![
                            q.queue_id as f64 / 3.0,
                            open / (hp * lists.len().max(1) as f64),
                            fullest / omega,
                            contained,
                            drop_ratio,
                            q.preemptive as u8 as f64,
                        ],
                        tokens,
                    }
                }
            }
        };
        nodes.push(n);
    }
    let mut edges = Vec::new();
    for (i, row) in topology.adjacency.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            if a != 0 && i < j {
                edges.push((i, j));
            } else if a != 0 && i > j && topology.adjacency[j][i] == 0 {
                edges.push((j, i));
            }
        }
    }
    GraphState { nodes, edges }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FallbackReport {
    pub survivors: usize,
    pub shed: Vec<String>,
    pub beta: usize,
    pub violations: usize,
}

/// Re-solve the union of `flows` from scratch. While infeasible, drop the
/// lowest-weight flow (latest in the list on ties) and retry.
pub fn fallback_reschedule(
    flows: &[Flow],
    paths: &HashMap<String, crate::model::Datapath>,
    topology: &Topology,
    config: &SchedulerConfig,
    hyperperiod: Nanos,
) -> Result<(ScheduleAssignment, GclSet, FallbackReport), EnvError> {
    let mut survivors: Vec<Flow> = flows.to_vec();
    let mut shed = Vec::new();
    loop {
        let p = survivors
            .iter()
            .map(|f| match paths.get(&f.id) {
                Some(p) => Ok(p.clone()),
                None => default_datapath(f, topology),
            })
            .collect::<Result<Vec<_>, _>>()?;
        match solve_with_paths(&survivors, p, &[], topology, config, hyperperiod) {
            Ok(assign) => {
                let gcls = assign.to_gcls(topology, config.omega)?;
                let violations = verify_schedule(&assign, &survivors, topology).len();
                let report = FallbackReport {
                    survivors: survivors.len(),
                    shed,
                    beta: gcls.beta(),
                    violations,
                };
                return Ok((assign, gcls, report));
            }
            Err(
                ScheduleError::Infeasible(_)
                | ScheduleError::SearchLimit(_)
                | ScheduleError::BudgetExceeded { .. },
            ) if survivors.len() > 1 => {
                let (idx, _) = survivors
                    .iter()
                    .enumerate()
                    .min_by_key(|(i, f)| (f.weight, std::cmp::Reverse(*i)))
                    .expect("non-empty");
                let f = survivors.remove(idx);
                log::warn!("fallback sheds flow {} (pcp {})", f.id, f.weight);
                shed.push(f.id);
            }
            Err(e) => return Err(e.into()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub flow_id: String,
    pub breakdown: RewardBreakdown,
    pub accepted: bool,
    pub admitted: bool,
    pub structural_reject: bool,
    pub verifier_violations: usize,
    pub budget_overflow: bool,
    pub beta: usize,
    pub fallback: Option<FallbackReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub total_flows: usize,
    pub requested: usize,
    pub admitted: usize,
    pub admission_rate: f64,
    pub avg_latency_ns: f64,
    pub jitter_std_ns: f64,
    pub steps: usize,
    pub beta: usize,
}

pub struct StepResult {
    pub state: GraphState,
    pub reward: f64,
    pub done: bool,
    /// The epoch ended only because of the step cap. Learners should
    /// bootstrap through such an end rather than treat it as terminal.
    pub truncated: bool,
    pub info: StepInfo,
}

/// The admission environment. Epochs restart from the static schedule.
pub struct AdmissionEnv {
    topology: Topology,
    config: EnvConfig,
    hyperperiod: Nanos,
    static_flows: Vec<Flow>,
    static_assignment: ScheduleAssignment,
    static_metrics: SimMetrics,
    mix: Vec<MixEntry>,
    routes: Vec<(String, String)>,
    max_bridges: usize,
    max_phases: usize,
    arrivals: ChaCha8Rng,
    next_id: u64,
    scale: CountScale,
    // epoch state
    flows: Vec<Flow>,
    assignment: ScheduleAssignment,
    gcls: GclSet,
    metrics: SimMetrics,
    pending: Option<Flow>,
    carry: Option<Flow>,
    requested: usize,
    admitted: usize,
    steps: usize,
    total_steps: u64,
}

impl AdmissionEnv {
    pub fn new(
        topology: Topology,
        static_flows: Vec<Flow>,
        mix: Vec<MixEntry>,
        config: EnvConfig,
        arrival_seed: u64,
    ) -> Result<AdmissionEnv, EnvError> {
        if mix.is_empty() {
            return Err(EnvError::EmptyMix);
        }
        let routes: Vec<(String, String)> = topology
            .routes
            .keys()
            .filter(|(s, d)| {
                topology.device_kind(s) == Some(DeviceKind::Talker)
                    && topology.device_kind(d) == Some(DeviceKind::Listener)
            })
            .cloned()
            .collect();
        if routes.is_empty() {
            return Err(EnvError::NoRoutes);
        }
        let hyperperiod = hyperperiod_of(
            static_flows
                .iter()
                .map(|f| f.period)
                .chain(mix.iter().map(|e| e.period_ns)),
        )?;
        let max_bridges = routes
            .iter()
            .filter_map(|(s, d)| topology.route_bridges(s, d))
            .max()
            .unwrap_or(0);
        let max_phases = mix
            .iter()
            .map(|e| (hyperperiod / e.period_ns) as usize)
            .max()
            .unwrap_or(1);
        let sched_cfg = SchedulerConfig {
            tick: config.tick,
            omega: config.omega,
            node_limit: Some(config.fallback_node_limit),
        };
        let static_assignment = if static_flows.is_empty() {
            ScheduleAssignment {
                hyperperiod,
                flows: Vec::new(),
                objective: 0,
            }
        } else {
            let paths = static_flows
                .iter()
                .map(|f| default_datapath(f, &topology))
                .collect::<Result<Vec<_>, _>>()?;
            solve_with_paths(&static_flows, paths, &[], &topology, &sched_cfg, hyperperiod)?
        };
        let gcls = static_assignment.to_gcls(&topology, config.omega)?;
        let static_metrics = Self::simulate(
            &topology,
            &config,
            &gcls,
            &static_flows,
            &static_assignment,
            config.sim_seed,
        )?;
        Ok(AdmissionEnv {
            arrivals: ChaCha8Rng::seed_from_u64(arrival_seed),
            next_id: 0,
            scale: CountScale::default(),
            flows: static_flows.clone(),
            assignment: static_assignment.clone(),
            metrics: static_metrics.clone(),
            gcls,
            pending: None,
            carry: None,
            requested: 0,
            admitted: 0,
            steps: 0,
            total_steps: 0,
            topology,
            config,
            hyperperiod,
            static_flows,
            static_assignment,
            static_metrics,
            mix,
            routes,
            max_bridges,
            max_phases,
        })
    }

    pub fn action_dim(&self) -> usize {
        3 + self.max_bridges * self.max_phases
    }

    pub fn hyperperiod(&self) -> Nanos {
        self.hyperperiod
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn assignment(&self) -> &ScheduleAssignment {
        &self.assignment
    }

    pub fn gcls(&self) -> &GclSet {
        &self.gcls
    }

    pub fn metrics(&self) -> &SimMetrics {
        &self.metrics
    }

    pub fn pending(&self) -> Option<&Flow> {
        self.pending.as_ref()
    }

    pub fn static_flow_count(&self) -> usize {
        self.static_flows.len()
    }

    fn simulate(
        topology: &Topology,
        config: &EnvConfig,
        gcls: &GclSet,
        flows: &[Flow],
        assignment: &ScheduleAssignment,
        seed: u64,
    ) -> Result<SimMetrics, EnvError> {
        let sim_cfg = SimConfig {
            be_load: config.be_load.clone(),
            guard_band: config.guard_band,
            trace: false,
        };
        let sf: Vec<SimFlow> = sim::sim_flows_from_assignment(assignment, flows);
        Ok(sim::run(
            topology,
            gcls,
            sf,
            config.eval_hyperperiods.max(1),
            &sim_cfg,
            seed,
        )?)
    }

    fn draw_flow(&mut self) -> Result<Flow, EnvError> {
        let e = self.mix[self.arrivals.random_range(0..self.mix.len())].clone();
        let (src, dst) = self.routes[self.arrivals.random_range(0..self.routes.len())].clone();
        self.next_id += 1;
        Ok(Flow::new(
            format!("dyn{}", self.next_id),
            FlowKind::TT,
            src,
            dst,
            e.size_bytes,
            e.period_ns,
            e.deadline_ns,
            e.pcp,
            self.topology.default_rate_bps,
        )?)
    }

    pub fn state(&mut self) -> GraphState {
        assemble_state(
            &self.topology,
            &self.flows,
            &self.assignment,
            &self.gcls,
            &self.metrics,
            self.pending.as_ref(),
            &mut self.scale,
        )
    }

    /// Start a new epoch from the static schedule.
    pub fn reset(&mut self) -> Result<GraphState, EnvError> {
        self.flows = self.static_flows.clone();
        self.assignment = self.static_assignment.clone();
        self.gcls = self.static_assignment.to_gcls(&self.topology, self.config.omega)?;
        self.metrics = self.static_metrics.clone();
        self.requested = 0;
        self.admitted = 0;
        self.steps = 0;
        self.pending = Some(match self.carry.take() {
            Some(f) => f,
            None => self.draw_flow()?,
        });
        Ok(self.state())
    }

    pub fn epoch_stats(&self) -> EpochStats {
        let lat: Vec<f64> = self
            .metrics
            .flows
            .values()
            .filter(|m| !m.latencies.is_empty())
            .map(|m| m.mean_latency)
            .collect();
        let jit: Vec<f64> = self
            .metrics
            .flows
            .values()
            .filter(|m| !m.latencies.is_empty())
            .map(|m| m.jitter_std)
            .collect();
        EpochStats {
            total_flows: self.flows.len(),
            requested: self.requested,
            admitted: self.admitted,
            admission_rate: if self.requested == 0 {
                0.0
            } else {
                self.admitted as f64 / self.requested as f64
            },
            avg_latency_ns: mean(lat),
            jitter_std_ns: mean(jit),
            steps: self.steps,
            beta: self.gcls.beta(),
        }
    }

    /// Offer the pending flow to the agent's `raw` action.
    pub fn step(&mut self, raw: &[f64]) -> Result<StepResult, EnvError> {
        if raw.len() != self.action_dim() {
            return Err(EnvError::ActionLen {
                got: raw.len(),
                expected: self.action_dim(),
            });
        }
        let flow = match self.pending.take() {
            Some(f) => f,
            None => self.draw_flow()?,
        };
        self.steps += 1;
        self.total_steps += 1;
        let mut info = StepInfo {
            flow_id: flow.id.clone(),
            ..Default::default()
        };
        let bridges = self
            .topology
            .route_bridges(&flow.source, &flow.destination)
            .ok_or_else(|| ModelError::NoRoute(flow.source.clone(), flow.destination.clone()))?;
        let mut r_o = true;
        let mut r_s = false;
        let mut r_b = false;
        let mut eval_metrics: Option<SimMetrics> = None;
        let mut overflow = false;

        let queue = if raw[1] > 0.0 { QUEUE_RESERVED } else { flow.kind.default_queue() };
        let path = derive_datapath(&flow, &self.topology, &vec![queue; bridges])?;
        let decoded = decode_action(
            raw,
            &flow,
            &path,
            self.hyperperiod,
            self.max_bridges,
            self.max_phases,
            self.config.tick,
        );
        let accept = match &decoded {
            Ok(d) => d.accept,
            Err(_) => {
                info.structural_reject = true;
                false
            }
        };
        info.accepted = accept;
        if accept {
            let d = decoded.expect("accepted implies decoded");
            let cand = d.schedule(&flow, path);
            let events = cand.gate_events(&self.topology);
            // budget first: an accepted flow that cannot fit ends the epoch
            let mut per_port: BTreeMap<&str, usize> = BTreeMap::new();
            for (p, _) in &events {
                *per_port.entry(p.as_str()).or_default() += 1;
            }
            overflow = per_port.iter().any(|(p, n)| {
                self.gcls.port(p).map(|g| g.beta()).unwrap_or(0) + n > self.config.omega
            });
            if !overflow {
                r_s = true;
                r_b = true;
                for (p, ev) in &events {
                    let gcl = self.gcls.port(p).expect("route ports have lists");
                    r_s &= reward_s(ev.open, ev.close, gcl.events());
                    let gaps = be_gaps(gcl.events(), self.hyperperiod);
                    r_b &= reward_b(
                        ev.open,
                        ev.close,
                        &gaps,
                        self.config.guard_band,
                        self.config.strict_be_containment,
                    );
                }
                if r_s && r_b {
                    let mut merged = self.assignment.clone();
                    merged.flows.push(cand);
                    let mut flows = self.flows.clone();
                    flows.push(flow.clone());
                    let violations = verify_schedule(&merged, &flows, &self.topology);
                    info.verifier_violations = violations.len();
                    let mut gcls = self.gcls.clone();
                    if violations.is_empty() && gcls.insert_all(&events).is_ok() {
                        let m = Self::simulate(
                            &self.topology,
                            &self.config,
                            &gcls,
                            &flows,
                            &merged,
                            self.config.sim_seed ^ self.total_steps,
                        )?;
                        r_o = reward_o(&flows, &m);
                        if r_o {
                            self.flows = flows;
                            self.assignment = merged;
                            self.gcls = gcls;
                            self.metrics = m.clone();
                            self.admitted += 1;
                            info.admitted = true;
                        }
                        eval_metrics = Some(m);
                    } else {
                        r_s = false;
                    }
                }
            }
        }
        if overflow {
            // the flow is offered again at the start of the next epoch
            self.carry = Some(flow.clone());
        } else {
            self.requested += 1;
        }
        info.budget_overflow = overflow;
        let beta = self.gcls.beta();
        info.beta = beta;
        let m = eval_metrics.as_ref().unwrap_or(&self.metrics);
        info.breakdown = RewardBreakdown::new(r_o, r_s, r_b, accept && !overflow, beta, self.config.omega, m);
        let terminal = overflow || beta >= self.config.omega;
        let truncated = !terminal && self.steps >= self.config.max_steps_per_epoch;
        let done = terminal || truncated;
        if done {
            let paths: HashMap<String, crate::model::Datapath> = self
                .assignment
                .flows
                .iter()
                .map(|s| (s.flow_id.clone(), s.path.clone()))
                .collect();
            let cfg = SchedulerConfig {
                tick: self.config.tick,
                omega: self.config.omega,
                node_limit: Some(self.config.fallback_node_limit),
            };
            let (_, _, report) =
                fallback_reschedule(&self.flows, &paths, &self.topology, &cfg, self.hyperperiod)?;
            info.fallback = Some(report);
        } else {
            self.pending = Some(self.draw_flow()?);
        }
        let state = self.state();
        Ok(StepResult {
            state,
            reward: info.breakdown.total,
            done,
            truncated,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn env() -> AdmissionEnv {
        let topo = build_topology(&two_bridge_line_spec()).unwrap();
        AdmissionEnv::new(topo, two_bridge_static_flows(), default_mix(), EnvConfig::default(), 1).unwrap()
    }

    fn tt(period: Nanos, size: u32) -> Flow {
        Flow::new("x", FlowKind::TT, "TK1", "LR1", size, period, 1_000_000, 7, DEFAULT_LINK_RATE_BPS).unwrap()
    }

    #[test]
    fn decode_bounds_single_phase() {
        let topo = build_topology(&two_bridge_line_spec()).unwrap();
        let f = tt(250_000, 50);
        let p = default_datapath(&f, &topo).unwrap();
        let lo = decode_action(&[-1.0; 5], &f, &p, 250_000, 2, 1, 10).unwrap();
        assert!(!lo.accept && !lo.reserved);
        assert_eq!(lo.dispatch, 0);
        assert_eq!(lo.gate_opens, vec![vec![496, 992]]);
        let hi = decode_action(&[1.0; 5], &f, &p, 250_000, 2, 1, 10).unwrap();
        assert_eq!(hi.dispatch, 248_608);
        assert_eq!(hi.gate_opens, vec![vec![249_104, 249_600]]);
        assert!(hi.accept && hi.reserved);
    }

    #[test]
    fn decode_chains_phases() {
        let topo = build_topology(&two_bridge_line_spec()).unwrap();
        let f = tt(500_000, 100);
        let p = default_datapath(&f, &topo).unwrap();
        let raw: Vec<f64> = (0..3 + 2 * 16).map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0).collect();
        let d = decode_action(&raw, &f, &p, 4_000_000, 2, 16, 10).unwrap();
        assert_eq!(d.gate_opens.len(), 8);
        let s = d.schedule(&f, p.clone());
        let a = ScheduleAssignment { hyperperiod: 4_000_000, flows: vec![s], objective: 0 };
        assert!(verify_schedule(&a, &[f], &topo).is_empty());
    }

    proptest::proptest! {
        #[test]
        fn decoded_placements_are_no_wait_feasible(
            raw in proptest::collection::vec(-1.0f64..=1.0, 35),
            cls in 0usize..3,
        ) {
            let topo = build_topology(&two_bridge_line_spec()).unwrap();
            let (period, size) = [(250_000, 50), (500_000, 100), (1_000_000, 500)][cls];
            let f = tt(period, size);
            let p = default_datapath(&f, &topo).unwrap();
            let d = decode_action(&raw, &f, &p, 4_000_000, 2, 16, 10).unwrap();
            proptest::prop_assert_eq!(d.gate_opens.len(), (4_000_000 / period) as usize);
            for (k, opens) in d.gate_opens.iter().enumerate() {
                let base = k as Nanos * period;
                let mut prev = base + d.dispatch;
                let last = p.hops.len() - 1;
                for (j, &g) in opens.iter().enumerate() {
                    let lo = prev + p.hops[j].duration + p.hops[j].ifg;
                    // no-wait time from this hop to the end of the path
                    let tail: Nanos = (j + 1..=last)
                        .map(|f| p.hops[f].duration + if f < last { p.hops[f].ifg } else { 0 })
                        .sum();
                    let hi = base + period - tail;
                    proptest::prop_assert!(lo <= g && g <= hi);
                    proptest::prop_assert!((g - lo) % 10 == 0 || g == hi);
                    prev = g;
                }
                proptest::prop_assert!(prev + p.hops[last].duration <= base + period);
            }
        }
    }

    #[test]
    fn decode_rejects_impossible_phase() {
        let topo = build_topology(&two_bridge_line_spec()).unwrap();
        let mut f = tt(250_000, 1500);
        f.period = 4000;
        let p = default_datapath(&f, &topo).unwrap();
        let e = decode_action(&[1.0; 5], &f, &p, 4000, 2, 1, 10).unwrap_err();
        assert!(matches!(e, DecodeError::EmptyInterval { index: 2, .. }));
    }

    #[test]
    fn reward_s_and_b_examples() {
        let ev = [GateEvent::new(3, 400, 800, 0)];
        assert!(reward_s(100, 400, &[]));
        assert!(!reward_s(100, 500, &ev));
        assert!(reward_s(100, 400, &ev));
        assert!(reward_b(2000, 2400, &[(0, 10_000)], 608, false));
        assert!(!reward_b(2000, 2400, &[], 608, false));
        assert!(!reward_b(0, 500, &[(0, 10_000)], 608, false));
        assert!(!reward_b(500, 900, &[(0, 10_000)], 608, true));
    }

    #[test]
    fn penalties_are_finite_on_empty_metrics() {
        let b = RewardBreakdown::new(true, true, true, false, 0, 128, &SimMetrics::default());
        assert_eq!(b.total, 0.0);
        let b = RewardBreakdown::new(true, true, true, true, 32, 128, &SimMetrics::default());
        assert_eq!(b.total, 1.0 - 0.25);
    }

    #[test]
    fn rejection_keeps_schedule() {
        let mut e = env();
        e.reset().unwrap();
        let before = e.gcls().clone();
        let raw = vec![-1.0; e.action_dim()];
        let r = e.step(&raw).unwrap();
        assert!(!r.info.accepted);
        assert_eq!(e.gcls(), &before);
        let beta = before.beta() as f64 / 128.0;
        assert!((r.reward + beta + r.info.breakdown.drop_penalty + r.info.breakdown.jitter_penalty).abs() < 1e-12);
    }

    #[test]
    fn accepting_free_placement_admits() {
        let mut e = env();
        e.reset().unwrap();
        let mut admitted = 0;
        for i in 0..12 {
            let raw: Vec<f64> = (0..e.action_dim())
                .map(|k| if k < 2 { if k == 0 { 1.0 } else { -1.0 } } else { ((k * 13 + i * 7) % 17) as f64 / 8.5 - 1.0 })
                .collect();
            let r = e.step(&raw).unwrap();
            admitted += r.info.admitted as usize;
            assert!(r.info.beta <= 128);
            let v = verify_schedule(e.assignment(), e.flows(), e.topology());
            assert!(v.is_empty(), "{v:?}");
            if r.done {
                let fb = r.info.fallback.unwrap();
                assert_eq!(fb.violations, 0);
                break;
            }
        }
        assert!(admitted > 0);
        assert_eq!(e.epoch_stats().admitted, admitted);
    }

    #[test]
    fn step_cap_truncates() {
        let mut e = env();
        e.config.max_steps_per_epoch = 3;
        e.reset().unwrap();
        let reject = vec![-1.0; e.action_dim()];
        let ends: Vec<(bool, bool)> = (0..3)
            .map(|_| {
                let r = e.step(&reject).unwrap();
                (r.done, r.truncated)
            })
            .collect();
        assert_eq!(ends, vec![(false, false), (false, false), (true, true)]);
    }

    #[test]
    fn state_is_pure_and_sensitive() {
        let mut e = env();
        e.reset().unwrap();
        let a = e.state();
        let b = e.state();
        assert_eq!(a, b);
        assert_eq!(a.nodes.len(), 2 + 2 + 8);
    }

    #[test]
    fn fallback_sheds_lowest_pcp_first() {
        let topo = build_topology(&two_bridge_line_spec()).unwrap();
        let mut flows = two_bridge_static_flows();
        // two huge flows that cannot share BR1->BR2 in a 30 us period
        for (i, pcp) in [(0, 2), (1, 5)] {
            flows.push(
                Flow::new(format!("big{i}"), FlowKind::TT, "TK1", "LR1", 1500, 250_000 / 10, 1_000_000, pcp, DEFAULT_LINK_RATE_BPS).unwrap(),
            );
        }
        let hp = 4_000_000;
        let cfg = SchedulerConfig { node_limit: Some(200_000), ..Default::default() };
        let (_, _, rep) = fallback_reschedule(&flows, &HashMap::new(), &topo, &cfg, hp).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(!rep.shed.is_empty());
        assert!(rep.shed[0] == "big0", "{:?}", rep.shed);
    }

    #[test]
    fn mix_csv_roundtrip() {
        let text = format!("{MIX_CSV_HEADER}\n50,250000,1000000,7\n");
        assert_eq!(read_mix_csv(text.as_bytes()).unwrap(), default_mix()[..1].to_vec());
        let bad = format!("{MIX_CSV_HEADER}\n0,250000,1000000,7\n");
        assert!(matches!(read_mix_csv(bad.as_bytes()), Err(EnvError::MixParse { line: 2, .. })));
    }
}
