//! Discrete-event simulation of gate-controlled store-and-forward bridging.
//!
//! Only transmission delay is modelled. A frame becomes eligible at the
//! next egress one inter-frame gap after its last bit arrives, and a link
//! stays idle for one inter-frame gap after every frame. Scheduled queues
//! transmit only inside their gate windows and only if the frame completes
//! before the window closes. The best-effort queue owns the gaps between
//! scheduled windows and may start a frame only if it (plus its IFG) ends
//! before the gap closes and it starts outside the trailing guard band.
//!
//! Configuration changes are staged and take effect at the next
//! hyperperiod boundary.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcl::{be_gaps, GateEvent, GclError, GclSet};
use crate::model::{
    default_datapath, derive_datapath, transmission_duration, Datapath, DeviceKind, Flow, LinkId,
    ModelError, Nanos, Topology, QUEUES_PER_BRIDGE, QUEUE_BE,
};
use crate::scheduler::ScheduleAssignment;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("gate control list references unknown port `{0}`")]
    UnknownPort(String),
    #[error("runtime update rejected: {0}")]
    Rejected(#[from] GclError),
    #[error("flow `{0}` has no dispatch plan entry")]
    MissingFlow(String),
    #[error("invalid dispatch plan for `{flow}`: {reason}")]
    BadPlan { flow: String, reason: String },
    #[error("horizon must cover at least one hyperperiod")]
    EmptyHorizon,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Poisson best-effort background load, injected at every bridge egress port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeLoad {
    /// Mean arrivals per second per port. Zero disables the generator.
    pub rate_hz: f64,
    pub min_bytes: u32,
    pub max_bytes: u32,
    pub capacity: usize,
}

impl Default for BeLoad {
    fn default() -> Self {
        BeLoad {
            rate_hz: 0.0,
            min_bytes: 64,
            max_bytes: 1500,
            capacity: 16,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub be_load: BeLoad,
    pub guard_band: Nanos,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            be_load: BeLoad::default(),
            guard_band: 608,
            trace: false,
        }
    }
}

/// A scheduled flow as the simulator sees it: its path and one dispatch
/// time per phase, relative to the start of each hyperperiod.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimFlow {
    pub flow: Flow,
    pub path: Datapath,
    pub dispatch: Vec<Nanos>,
}

/// Dispatch-offset document: one entry per flow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchEntry {
    pub flow_id: String,
    #[serde(default)]
    pub queues: Option<Vec<u8>>,
    pub dispatch_ns: Vec<Nanos>,
}

pub fn dispatch_plan(assign: &ScheduleAssignment) -> Vec<DispatchEntry> {
    assign
        .flows
        .iter()
        .map(|s| DispatchEntry {
            flow_id: s.flow_id.clone(),
            queues: Some(s.path.hops.iter().skip(1).filter_map(|h| h.queue).collect()),
            dispatch_ns: s.hop_starts.iter().map(|h| h[0]).collect(),
        })
        .collect()
}

/// Resolve a dispatch document against flows and topology.
pub fn sim_flows_from_plan(
    plan: &[DispatchEntry],
    flows: &[Flow],
    topology: &Topology,
) -> Result<Vec<SimFlow>, SimError> {
    let by_id: HashMap<&str, &Flow> = flows.iter().map(|f| (f.id.as_str(), f)).collect();
    plan.iter()
        .map(|e| {
            let flow = *by_id
                .get(e.flow_id.as_str())
                .ok_or_else(|| SimError::MissingFlow(e.flow_id.clone()))?;
            let path = match &e.queues {
                Some(q) => derive_datapath(flow, topology, q)?,
                None => default_datapath(flow, topology)?,
            };
            Ok(SimFlow {
                flow: flow.clone(),
                path,
                dispatch: e.dispatch_ns.clone(),
            })
        })
        .collect()
}

pub fn sim_flows_from_assignment(assign: &ScheduleAssignment, flows: &[Flow]) -> Vec<SimFlow> {
    let by_id: HashMap<&str, &Flow> = flows.iter().map(|f| (f.id.as_str(), f)).collect();
    assign
        .flows
        .iter()
        .filter_map(|s| {
            by_id.get(s.flow_id.as_str()).map(|f| SimFlow {
                flow: (*f).clone(),
                path: s.path.clone(),
                dispatch: s.hop_starts.iter().map(|h| h[0]).collect(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SimEventKind {
    Dispatch,
    ArriveAtBridge,
    GateOpen,
    TxComplete,
    ConfigUpdate,
    LinkIdle,
    BeArrival,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: Nanos,
    pub kind: SimEventKind,
    pub link: Option<usize>,
    pub flow: Option<String>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowMetrics {
    pub flow_id: String,
    pub dispatched: usize,
    pub delivered: usize,
    pub dropped: usize,
    pub in_flight: usize,
    /// Dispatch to delivery, per delivered instance.
    pub latencies: Vec<Nanos>,
    /// Delivery time measured from the start of the instance's period.
    pub arrivals: Vec<Nanos>,
    /// Offset of each delivered instance's dispatch within its period.
    pub dispatch_offsets: Vec<Nanos>,
    pub mean_latency: f64,
    pub jitter_mean: f64,
    pub jitter_std: f64,
    /// Longest time any frame of this flow waited at a bridge.
    pub max_wait: Nanos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueMetrics {
    pub port: String,
    pub switch_id: String,
    pub queue: u8,
    pub contained: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub horizon: Nanos,
    pub flows: BTreeMap<String, FlowMetrics>,
    pub queues: Vec<QueueMetrics>,
    pub be_generated: usize,
    pub gate_violations: usize,
}

impl SimMetrics {
    pub fn contained_total(&self) -> usize {
        self.queues.iter().map(|q| q.contained).sum()
    }

    pub fn dropped_total(&self) -> usize {
        self.queues.iter().map(|q| q.dropped).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("jitter statistics need at least one latency sample")]
pub struct EmptySeries;

/// Mean and population standard deviation.
pub fn jitter_stats(latencies: &[Nanos]) -> Result<(f64, f64), EmptySeries> {
    if latencies.is_empty() {
        return Err(EmptySeries);
    }
    let n = latencies.len() as f64;
    let mean = latencies.iter().map(|&l| l as f64).sum::<f64>() / n;
    let var = latencies
        .iter()
        .map(|&l| (l as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Debug)]
struct Frame {
    flow: Option<usize>,
    hop: usize,
    duration: Nanos,
    queue: u8,
    dispatch: Nanos,
    release: Nanos,
    phase_end: Nanos,
    eligible: Nanos,
}

#[derive(Debug)]
enum Payload {
    Dispatch { flow: usize, phase: usize },
    Arrive { link: usize, frame: Frame },
    GateOpen { link: usize },
    TxComplete { link: usize, frame: Frame },
    ConfigUpdate,
    LinkIdle { link: usize },
    BeArrival { link: usize },
}

impl Payload {
    fn kind(&self) -> SimEventKind {
        match self {
            Payload::Dispatch { .. } => SimEventKind::Dispatch,
            Payload::Arrive { .. } => SimEventKind::ArriveAtBridge,
            Payload::GateOpen { .. } => SimEventKind::GateOpen,
            Payload::TxComplete { .. } => SimEventKind::TxComplete,
            Payload::ConfigUpdate => SimEventKind::ConfigUpdate,
            Payload::LinkIdle { .. } => SimEventKind::LinkIdle,
            Payload::BeArrival { .. } => SimEventKind::BeArrival,
        }
    }

    fn rank(&self) -> usize {
        match self {
            Payload::Dispatch { flow, .. } => *flow,
            Payload::Arrive { frame, .. } | Payload::TxComplete { frame, .. } => {
                frame.flow.unwrap_or(usize::MAX)
            }
            Payload::GateOpen { link }
            | Payload::LinkIdle { link }
            | Payload::BeArrival { link } => *link,
            Payload::ConfigUpdate => 0,
        }
    }
}

#[derive(Debug)]
struct Event {
    time: Nanos,
    kind: SimEventKind,
    rank: usize,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.kind, other.rank, other.seq).cmp(&(
            self.time, self.kind, self.rank, self.seq,
        ))
    }
}

struct Egress {
    link: LinkId,
    port: String,
    switch: Option<String>,
    ifg: Nanos,
    busy_until: Nanos,
    queues: [VecDeque<Frame>; QUEUES_PER_BRIDGE as usize],
    events: Vec<GateEvent>,
    gaps: Vec<(Nanos, Nanos)>,
    contained: [usize; QUEUES_PER_BRIDGE as usize],
    dropped: [usize; QUEUES_PER_BRIDGE as usize],
    rng: ChaCha8Rng,
}

struct FlowState {
    sim: SimFlow,
    active: bool,
    metrics: FlowMetrics,
}

/// A staged change to the running configuration.
#[derive(Clone, Debug, Default)]
pub struct RuntimeDelta {
    pub gate_events: Vec<(String, GateEvent)>,
    pub flows: Vec<SimFlow>,
    pub remove_flows: Vec<String>,
}

impl RuntimeDelta {
    pub fn is_empty(&self) -> bool {
        self.gate_events.is_empty() && self.flows.is_empty() && self.remove_flows.is_empty()
    }
}

pub struct Simulator<'t> {
    topology: &'t Topology,
    config: SimConfig,
    hyperperiod: Nanos,
    gcls: GclSet,
    now: Nanos,
    next_boundary: Nanos,
    seq: u64,
    heap: BinaryHeap<Event>,
    egress: Vec<Egress>,
    flows: Vec<FlowState>,
    pending: Vec<(Nanos, GclSet, RuntimeDelta)>,
    be_generated: usize,
    gate_violations: usize,
    trace: Vec<TraceRow>,
}

impl<'t> Simulator<'t> {
    pub fn new(
        topology: &'t Topology,
        gcls: GclSet,
        flows: Vec<SimFlow>,
        config: SimConfig,
        seed: u64,
    ) -> Result<Simulator<'t>, SimError> {
        let hp = gcls.hyperperiod;
        for name in gcls.ports.keys() {
            if !topology.egress_ports().any(|l| &l.port_name() == name) {
                return Err(SimError::UnknownPort(name.clone()));
            }
        }
        let egress = topology
            .links
            .iter()
            .map(|l| {
                let port = l.port_name();
                let is_bridge = topology.device_kind(&l.from) == Some(DeviceKind::Bridge);
                let events = gcls
                    .port(&port)
                    .map(|g| g.events().to_vec())
                    .unwrap_or_default();
                let gaps = if is_bridge { be_gaps(&events, hp) } else { Vec::new() };
                Egress {
                    link: l.id,
                    switch: is_bridge.then(|| l.from.clone()),
                    ifg: crate::model::ifg_duration(l.rate_bps),
                    busy_until: 0,
                    queues: Default::default(),
                    events,
                    gaps,
                    contained: [0; 4],
                    dropped: [0; 4],
                    rng: ChaCha8Rng::seed_from_u64(
                        seed ^ (l.id.0 as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    ),
                    port,
                }
            })
            .collect();
        let mut sim = Simulator {
            topology,
            config,
            hyperperiod: hp,
            gcls,
            now: 0,
            next_boundary: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            egress,
            flows: Vec::new(),
            pending: Vec::new(),
            be_generated: 0,
            gate_violations: 0,
            trace: Vec::new(),
        };
        for f in flows {
            sim.check_flow(&f)?;
            sim.flows.push(FlowState {
                metrics: FlowMetrics {
                    flow_id: f.flow.id.clone(),
                    ..Default::default()
                },
                sim: f,
                active: true,
            });
        }
        sim.push(0, Payload::ConfigUpdate);
        if sim.config.be_load.rate_hz > 0.0 {
            for i in 0..sim.egress.len() {
                if sim.egress[i].switch.is_some() {
                    let t = sim.next_be_gap(i);
                    sim.push(t, Payload::BeArrival { link: i });
                }
            }
        }
        Ok(sim)
    }

    pub fn hyperperiod(&self) -> Nanos {
        self.hyperperiod
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn gcls(&self) -> &GclSet {
        &self.gcls
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    fn check_flow(&self, f: &SimFlow) -> Result<(), SimError> {
        let bad = |reason: &str| SimError::BadPlan {
            flow: f.flow.id.clone(),
            reason: reason.into(),
        };
        if f.dispatch.len() != f.flow.instances(self.hyperperiod) {
            return Err(bad("need one dispatch time per phase"));
        }
        for (k, &d) in f.dispatch.iter().enumerate() {
            let release = k as Nanos * f.flow.period;
            if d < release || d >= release + f.flow.period {
                return Err(bad("dispatch time outside its phase"));
            }
        }
        if f.path.hops.is_empty() {
            return Err(bad("empty path"));
        }
        Ok(())
    }

    fn push(&mut self, time: Nanos, payload: Payload) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            kind: payload.kind(),
            rank: payload.rank(),
            seq: self.seq,
            payload,
        });
    }

    /// Stage a configuration change. Returns the activation time: the next
    /// hyperperiod boundary, or now for an empty delta. Overlapping gate
    /// events reject the whole delta.
    pub fn apply_runtime_update(&mut self, delta: RuntimeDelta) -> Result<Nanos, SimError> {
        if delta.is_empty() {
            return Ok(self.now);
        }
        let base = self
            .pending
            .last()
            .map(|p| p.1.clone())
            .unwrap_or_else(|| self.gcls.clone());
        let mut staged = base;
        for id in &delta.remove_flows {
            for gcl in staged.ports.values_mut() {
                let kept: Vec<GateEvent> = gcl
                    .events()
                    .iter()
                    .filter(|e| e.flow.as_deref() != Some(id))
                    .cloned()
                    .collect();
                let mut fresh = crate::gcl::GateControlList::new(
                    gcl.port.clone(),
                    gcl.hyperperiod,
                    gcl.omega,
                );
                for e in kept {
                    fresh.insert(e)?;
                }
                *gcl = fresh;
            }
        }
        staged.insert_all(&delta.gate_events)?;
        for f in &delta.flows {
            self.check_flow(f)?;
        }
        let at = self.next_boundary;
        self.pending.push((at, staged, delta));
        Ok(at)
    }

    fn activate_pending(&mut self) {
        while self
            .pending
            .first()
            .is_some_and(|(at, _, _)| *at <= self.now)
        {
            let (_, gcls, delta) = self.pending.remove(0);
            for e in self.egress.iter_mut() {
                if let Some(g) = gcls.port(&e.port) {
                    e.events = g.events().to_vec();
                    e.gaps = be_gaps(&e.events, self.hyperperiod);
                }
            }
            self.gcls = gcls;
            for id in &delta.remove_flows {
                for f in self.flows.iter_mut().filter(|f| &f.sim.flow.id == id) {
                    f.active = false;
                }
            }
            for nf in delta.flows {
                if let Some(existing) = self.flows.iter_mut().find(|f| f.sim.flow.id == nf.flow.id)
                {
                    existing.sim = nf;
                    existing.active = true;
                } else {
                    self.flows.push(FlowState {
                        metrics: FlowMetrics {
                            flow_id: nf.flow.id.clone(),
                            ..Default::default()
                        },
                        sim: nf,
                        active: true,
                    });
                }
            }
        }
    }

    fn start_cycle(&mut self) {
        self.activate_pending();
        let base = self.now;
        for fi in 0..self.flows.len() {
            if !self.flows[fi].active {
                continue;
            }
            for phase in 0..self.flows[fi].sim.dispatch.len() {
                let t = base + self.flows[fi].sim.dispatch[phase];
                self.push(t, Payload::Dispatch { flow: fi, phase });
            }
        }
        for li in 0..self.egress.len() {
            if self.egress[li].switch.is_none() {
                continue;
            }
            let opens: Vec<Nanos> = self.egress[li]
                .events
                .iter()
                .map(|e| e.open)
                .chain(self.egress[li].gaps.iter().map(|g| g.0))
                .collect();
            for o in opens {
                self.push(base + o, Payload::GateOpen { link: li });
            }
        }
        self.next_boundary = base + self.hyperperiod;
        self.push(self.next_boundary, Payload::ConfigUpdate);
    }

    fn log(&mut self, kind: SimEventKind, link: Option<usize>, flow: Option<usize>, detail: String) {
        if self.config.trace {
            let flow = flow.map(|f| self.flows[f].sim.flow.id.clone());
            self.trace.push(TraceRow {
                time: self.now,
                kind,
                link,
                flow,
                detail,
            });
        }
    }

    /// Process every event strictly before `until`.
    pub fn run_until(&mut self, until: Nanos) {
        while self.heap.peek().is_some_and(|e| e.time < until) {
            let ev = self.heap.pop().expect("peeked");
            self.now = ev.time;
            match ev.payload {
                Payload::ConfigUpdate => {
                    self.log(SimEventKind::ConfigUpdate, None, None, String::new());
                    self.start_cycle();
                }
                Payload::Dispatch { flow, phase } => self.dispatch(flow, phase),
                Payload::Arrive { link, frame } => {
                    self.log(SimEventKind::ArriveAtBridge, Some(link), frame.flow, String::new());
                    let q = frame.queue as usize;
                    self.egress[link].queues[q].push_back(frame);
                    self.try_transmit(link);
                }
                Payload::GateOpen { link } | Payload::LinkIdle { link } => self.try_transmit(link),
                Payload::TxComplete { link, frame } => self.tx_complete(link, frame),
                Payload::BeArrival { link } => self.be_arrival(link),
            }
        }
        self.now = self.now.max(until);
    }

    fn dispatch(&mut self, fi: usize, phase: usize) {
        let cycle_start = self.now - self.flows[fi].sim.dispatch[phase];
        let f = &self.flows[fi].sim;
        let release = cycle_start + phase as Nanos * f.flow.period;
        let frame = Frame {
            flow: Some(fi),
            hop: 0,
            duration: f.path.hops[0].duration,
            queue: 0,
            dispatch: self.now,
            release,
            phase_end: release + f.flow.period,
            eligible: self.now,
        };
        let link = f.path.hops[0].link.0;
        self.flows[fi].metrics.dispatched += 1;
        self.log(SimEventKind::Dispatch, Some(link), Some(fi), format!("phase {phase}"));
        self.egress[link].queues[0].push_back(frame);
        self.try_transmit(link);
    }

    fn tx_complete(&mut self, link: usize, mut frame: Frame) {
        self.log(SimEventKind::TxComplete, Some(link), frame.flow, String::new());
        let Some(fi) = frame.flow else {
            return;
        };
        let hops = &self.flows[fi].sim.path.hops;
        if frame.hop + 1 == hops.len() {
            let m = &mut self.flows[fi].metrics;
            m.delivered += 1;
            m.latencies.push(self.now - frame.dispatch);
            m.arrivals.push(self.now - frame.release);
            m.dispatch_offsets.push(frame.dispatch - frame.release);
            return;
        }
        frame.hop += 1;
        let next = &hops[frame.hop];
        frame.duration = next.duration;
        frame.queue = next.queue.unwrap_or(QUEUE_BE);
        frame.eligible = self.now + self.egress[link].ifg;
        let t = frame.eligible;
        self.push(
            t,
            Payload::Arrive {
                link: next.link.0,
                frame,
            },
        );
    }

    fn active_window(&self, li: usize, t: Nanos) -> Option<&GateEvent> {
        let e = &self.egress[li];
        let rel = t.rem_euclid(self.hyperperiod);
        let i = e.events.partition_point(|ev| ev.open <= rel);
        (i > 0)
            .then(|| &e.events[i - 1])
            .filter(|ev| rel < ev.close)
    }

    /// Absolute close of the best-effort gap containing `t`, if any.
    fn be_gap_close(&self, li: usize, t: Nanos) -> Option<Nanos> {
        let e = &self.egress[li];
        let hp = self.hyperperiod;
        let cycle = t.div_euclid(hp) * hp;
        let rel = t - cycle;
        let g = e.gaps.iter().find(|g| g.0 <= rel && rel < g.1)?;
        let mut close = cycle + g.1;
        if g.1 == hp {
            if let Some(first) = e.gaps.first().filter(|f| f.0 == 0) {
                close = cycle + hp + first.1.min(hp);
            }
        }
        Some(close)
    }

    fn next_be_gap(&self, li: usize) -> Nanos {
        self.egress[li].gaps.first().map(|g| g.0).unwrap_or(0)
    }

    fn purge_expired(&mut self, li: usize) {
        let now = self.now;
        let mut dropped_flows = Vec::new();
        let e = &mut self.egress[li];
        for q in 1..QUEUES_PER_BRIDGE as usize {
            let before = e.queues[q].len();
            e.queues[q].retain(|fr| {
                let keep = now + fr.duration <= fr.phase_end;
                if !keep {
                    dropped_flows.push(fr.flow);
                }
                keep
            });
            e.dropped[q] += before - e.queues[q].len();
        }
        if e.switch.is_none() {
            e.queues[0].retain(|fr| {
                let keep = now + fr.duration <= fr.phase_end;
                if !keep {
                    dropped_flows.push(fr.flow);
                }
                keep
            });
        }
        for f in dropped_flows.into_iter().flatten() {
            self.flows[f].metrics.dropped += 1;
        }
    }

    fn try_transmit(&mut self, li: usize) {
        if self.egress[li].busy_until > self.now {
            return;
        }
        self.purge_expired(li);
        let now = self.now;
        let chosen: Option<(usize, Nanos)> = if self.egress[li].switch.is_none() {
            // end stations transmit in dispatch order without gates
            self.egress[li].queues[0].front().map(|_| (0, Nanos::MAX))
        } else if let Some(win) = self.active_window(li, now) {
            let q = win.queue as usize;
            let close = now - now.rem_euclid(self.hyperperiod) + win.close;
            self.egress[li].queues[q]
                .front()
                .filter(|fr| now + fr.duration <= close)
                .map(|_| (q, close))
        } else if let Some(close) = self.be_gap_close(li, now) {
            let e = &self.egress[li];
            e.queues[QUEUE_BE as usize]
                .front()
                .filter(|fr| {
                    now + fr.duration + e.ifg <= close && now < close - self.config.guard_band
                })
                .map(|_| (QUEUE_BE as usize, close))
        } else {
            None
        };
        let Some((q, close)) = chosen else {
            return;
        };
        let frame = self.egress[li].queues[q].pop_front().expect("front checked");
        let end = now + frame.duration;
        if end > close {
            self.gate_violations += 1;
        }
        let ifg = self.egress[li].ifg;
        let e = &mut self.egress[li];
        e.busy_until = end + ifg;
        if e.switch.is_some() {
            e.contained[q] += 1;
        }
        if let Some(fi) = frame.flow {
            if e.switch.is_some() {
                let m = &mut self.flows[fi].metrics;
                m.max_wait = m.max_wait.max(now - frame.eligible);
            }
        }
        self.push(end, Payload::TxComplete { link: li, frame });
        self.push(end + ifg, Payload::LinkIdle { link: li });
    }

    fn be_arrival(&mut self, li: usize) {
        let load = self.config.be_load.clone();
        let e = &mut self.egress[li];
        let size = e.rng.random_range(load.min_bytes..=load.max_bytes);
        let gap_wait = Exp::new(load.rate_hz / 1e9)
            .expect("positive rate")
            .sample(&mut e.rng)
            .ceil() as Nanos;
        let rate = self.topology.link(e.link).rate_bps;
        let duration = transmission_duration(size, rate);
        let fits_somewhere = e
            .gaps
            .iter()
            .any(|g| g.1 - g.0 >= duration + e.ifg)
            || (e.gaps.len() > 1
                && e.gaps.first().is_some_and(|f| f.0 == 0)
                && e.gaps.last().is_some_and(|l| l.1 == self.hyperperiod)
                && e.gaps[0].1 + self.hyperperiod - e.gaps.last().unwrap().0 >= duration + e.ifg);
        self.be_generated += 1;
        let full = e.queues[QUEUE_BE as usize].len() >= load.capacity;
        if !fits_somewhere || full {
            e.dropped[QUEUE_BE as usize] += 1;
        } else {
            e.queues[QUEUE_BE as usize].push_back(Frame {
                flow: None,
                hop: 0,
                duration,
                queue: QUEUE_BE,
                dispatch: self.now,
                release: self.now,
                phase_end: Nanos::MAX,
                eligible: self.now,
            });
        }
        let next = self.now + gap_wait.max(1);
        self.push(next, Payload::BeArrival { link: li });
        self.try_transmit(li);
    }

    /// Final metrics at the current time. Frames still queued past the end
    /// of their phase count as dropped; the rest are in flight.
    pub fn metrics(&self) -> SimMetrics {
        let mut flows: BTreeMap<String, FlowMetrics> = BTreeMap::new();
        let mut queued_dropped: HashMap<usize, usize> = HashMap::new();
        for e in &self.egress {
            for q in &e.queues {
                for fr in q {
                    if let Some(fi) = fr.flow {
                        if self.now + fr.duration > fr.phase_end {
                            *queued_dropped.entry(fi).or_default() += 1;
                        }
                    }
                }
            }
        }
        for (fi, f) in self.flows.iter().enumerate() {
            let mut m = f.metrics.clone();
            m.dropped += queued_dropped.get(&fi).copied().unwrap_or(0);
            m.in_flight = m.dispatched - m.delivered - m.dropped;
            if let Ok((mean, std)) = jitter_stats(&m.latencies) {
                m.mean_latency = mean;
                m.jitter_mean = mean;
                m.jitter_std = std;
            }
            flows.insert(m.flow_id.clone(), m);
        }
        let mut queues = Vec::new();
        for e in &self.egress {
            let Some(sw) = &e.switch else { continue };
            for q in 0..QUEUES_PER_BRIDGE as usize {
                queues.push(QueueMetrics {
                    port: e.port.clone(),
                    switch_id: sw.clone(),
                    queue: q as u8,
                    contained: e.contained[q],
                    dropped: e.dropped[q],
                });
            }
        }
        SimMetrics {
            horizon: self.now,
            flows,
            queues,
            be_generated: self.be_generated,
            gate_violations: self.gate_violations,
        }
    }

}

/// Simulate `horizon_hps` hyperperiods from a clean start.
pub fn run(
    topology: &Topology,
    gcls: &GclSet,
    flows: Vec<SimFlow>,
    horizon_hps: usize,
    config: &SimConfig,
    seed: u64,
) -> Result<SimMetrics, SimError> {
    if horizon_hps == 0 {
        return Err(SimError::EmptyHorizon);
    }
    let mut sim = Simulator::new(topology, gcls.clone(), flows, config.clone(), seed)?;
    sim.run_until(horizon_hps as Nanos * gcls.hyperperiod);
    Ok(sim.metrics())
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("time_ns,kind,link,flow,detail\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{},{},{}\n",
            r.time,
            r.kind,
            r.link.map(|l| l.to_string()).unwrap_or_default(),
            r.flow.clone().unwrap_or_default(),
            r.detail
        ));
    }
    out
}
