//! Exact offline scheduler for the no-wait flow-shop formulation.
//!
//! Each flow gets one dispatch offset `phi`, repeated rigidly every period;
//! hop `f` starts `duration + ifg` after hop `f-1`. A depth-first
//! branch-and-bound over tick-aligned offsets minimises the weighted
//! tardiness `z = sum_i w_i * max(0, E_i - D_i)` where `E_i` is the arrival
//! time measured from the start of the period.
//!
//! Constraints checked here and by [`verify_schedule`]:
//! 1. hop `f` starts no earlier than hop `f-1` ends plus the inter-frame gap;
//! 2. dispatch-to-arrival latency stays within the deadline;
//! 3. the offset is non-negative and every instance finishes inside its period;
//! 4. no two frames occupy the same link at the same time (frame plus IFG).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcl::{GateEvent, GclError, GclSet, DEFAULT_OMEGA};
use crate::model::{
    default_datapath, hyperperiod, Datapath, Flow, LinkId, ModelError, Nanos, NdpRegistry,
    Topology, DEFAULT_TICK_NS,
};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("no feasible schedule: {0}")]
    Infeasible(String),
    #[error("gate control budget exceeded on {port}: {needed} entries > omega {omega}")]
    BudgetExceeded {
        port: String,
        needed: usize,
        omega: usize,
    },
    #[error("search node limit {0} reached before the search completed")]
    SearchLimit(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gcl(#[from] GclError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub tick: Nanos,
    pub omega: usize,
    /// Abort with [`ScheduleError::SearchLimit`] after this many placements.
    pub node_limit: Option<u64>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            tick: DEFAULT_TICK_NS,
            omega: DEFAULT_OMEGA,
            node_limit: Some(50_000_000),
        }
    }
}

/// Placement of one flow over a hyperperiod.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub flow_id: String,
    pub offset: Nanos,
    pub path: Datapath,
    /// `hop_starts[phase][hop]`, absolute within the hyperperiod.
    pub hop_starts: Vec<Vec<Nanos>>,
}

impl FlowSchedule {
    /// Rigid no-wait placement at dispatch offset `phi`.
    pub fn no_wait(flow: &Flow, path: Datapath, phi: Nanos, hyperperiod: Nanos) -> FlowSchedule {
        let rel = path.no_wait_starts();
        let hop_starts = (0..flow.instances(hyperperiod))
            .map(|k| {
                let base = k as Nanos * flow.period + phi;
                rel.iter().map(|r| base + r).collect()
            })
            .collect();
        FlowSchedule {
            flow_id: flow.id.clone(),
            offset: phi,
            path,
            hop_starts,
        }
    }

    /// Completion time at the listener of instance `phase`.
    pub fn arrival(&self, phase: usize) -> Nanos {
        let starts = &self.hop_starts[phase];
        let last = self.path.hops.len() - 1;
        starts[last] + self.path.hops[last].duration
    }

    pub fn latency(&self, phase: usize) -> Nanos {
        self.arrival(phase) - self.hop_starts[phase][0]
    }

    /// Gate windows this flow needs on bridge egress ports.
    pub fn gate_events(&self, topology: &Topology) -> Vec<(String, GateEvent)> {
        let mut out = Vec::new();
        for (k, starts) in self.hop_starts.iter().enumerate() {
            for (f, hop) in self.path.hops.iter().enumerate().skip(1) {
                let port = topology.link(hop.link).port_name();
                let q = hop.queue.unwrap_or(0);
                out.push((
                    port,
                    GateEvent::new(q, starts[f], starts[f] + hop.duration, k)
                        .for_flow(self.flow_id.clone()),
                ));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleAssignment {
    pub hyperperiod: Nanos,
    pub flows: Vec<FlowSchedule>,
    /// Weighted tardiness, in PCP-weighted nanoseconds.
    pub objective: i64,
}

impl ScheduleAssignment {
    pub fn get(&self, flow_id: &str) -> Option<&FlowSchedule> {
        self.flows.iter().find(|f| f.flow_id == flow_id)
    }

    pub fn to_gcls(&self, topology: &Topology, omega: usize) -> Result<GclSet, GclError> {
        let mut set = GclSet::for_topology(topology, self.hyperperiod, omega);
        let batch: Vec<_> = self
            .flows
            .iter()
            .flat_map(|f| f.gate_events(topology))
            .collect();
        set.insert_all(&batch)?;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }
}

/// Weighted tardiness of a set of placements.
pub fn objective(flows: &[Flow], sched: &[FlowSchedule]) -> i64 {
    let by_id: HashMap<&str, &Flow> = flows.iter().map(|f| (f.id.as_str(), f)).collect();
    sched
        .iter()
        .filter_map(|s| by_id.get(s.flow_id.as_str()).map(|f| (f, s)))
        .map(|(f, s)| {
            let worst = (0..s.hop_starts.len())
                .map(|k| s.arrival(k) - k as Nanos * f.period)
                .max()
                .unwrap_or(0);
            f.weight as i64 * (worst - f.deadline).max(0)
        })
        .sum()
}

/// Busy intervals on one link, cyclic over the hyperperiod.
#[derive(Clone, Debug, Default)]
struct LinkTimeline {
    spans: Vec<(Nanos, Nanos)>,
}

impl LinkTimeline {
    /// End of a blocking span (shifted into the frame of `[a, b)`) if any.
    fn blocking_end(&self, a: Nanos, b: Nanos, hp: Nanos) -> Option<Nanos> {
        for &(c, d) in &self.spans {
            for shift in [-hp, 0, hp] {
                let (c2, d2) = (c + shift, d + shift);
                if c2 < b && a < d2 {
                    return Some(d2);
                }
            }
        }
        None
    }
}

struct Candidate<'a> {
    flow: &'a Flow,
    path: Datapath,
    rel: Vec<Nanos>,
    latency: Nanos,
    max_offset: Nanos,
}

/// Solve a full static instance from scratch.
pub fn solve_static(
    flows: &[Flow],
    topology: &Topology,
    config: &SchedulerConfig,
) -> Result<ScheduleAssignment, ScheduleError> {
    solve_with_fixed(flows, &[], topology, config)
}

/// Solve for `free` flows around already-placed `fixed` ones. The
/// hyperperiod covers both sets.
pub fn solve_with_fixed(
    free: &[Flow],
    fixed: &[(Flow, FlowSchedule)],
    topology: &Topology,
    config: &SchedulerConfig,
) -> Result<ScheduleAssignment, ScheduleError> {
    let all: Vec<Flow> = free
        .iter()
        .cloned()
        .chain(fixed.iter().map(|(f, _)| f.clone()))
        .collect();
    let hp = hyperperiod(&all)?;
    let paths = free
        .iter()
        .map(|f| default_datapath(f, topology))
        .collect::<Result<Vec<_>, _>>()?;
    solve_with_paths(free, paths, fixed, topology, config, hp)
}

pub fn solve_with_paths(
    free: &[Flow],
    paths: Vec<Datapath>,
    fixed: &[(Flow, FlowSchedule)],
    topology: &Topology,
    config: &SchedulerConfig,
    hp: Nanos,
) -> Result<ScheduleAssignment, ScheduleError> {
    if free.is_empty() && fixed.is_empty() {
        return Err(ScheduleError::Model(ModelError::NoFlows));
    }
    check_budget(free, &paths, fixed, topology, config.omega, hp)?;

    let mut cands = Vec::with_capacity(free.len());
    for (flow, path) in free.iter().zip(paths) {
        let rel = path.no_wait_starts();
        let latency = path.no_wait_latency();
        if latency > flow.deadline {
            return Err(ScheduleError::Infeasible(format!(
                "flow {} needs {latency} ns end to end but its deadline is {} ns",
                flow.id, flow.deadline
            )));
        }
        if latency > flow.period {
            return Err(ScheduleError::Infeasible(format!(
                "flow {} needs {latency} ns end to end, longer than its {} ns period",
                flow.id, flow.period
            )));
        }
        cands.push(Candidate {
            flow,
            path,
            rel,
            latency,
            max_offset: flow.period - latency,
        });
    }
    // heavier flows first, then tighter slack
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by_key(|&i| {
        let c = &cands[i];
        let slack = c.flow.deadline - c.path.op_count() as Nanos * c.flow.duration;
        (std::cmp::Reverse(c.flow.weight), slack, i)
    });

    let mut timelines: HashMap<LinkId, LinkTimeline> = HashMap::new();
    for (_, s) in fixed {
        for starts in &s.hop_starts {
            for (f, hop) in s.path.hops.iter().enumerate() {
                timelines
                    .entry(hop.link)
                    .or_default()
                    .spans
                    .push((starts[f], starts[f] + hop.duration + hop.ifg));
            }
        }
    }

    let mut search = Search {
        cands: &cands,
        order: &order,
        hp,
        tick: config.tick.max(1),
        node_limit: config.node_limit,
        nodes: 0,
        timelines,
        offsets: vec![0; cands.len()],
        best: None,
    };
    search.dfs(0, 0)?;
    let (best_z, offsets) = search.best.take().ok_or_else(|| {
        ScheduleError::Infeasible("search exhausted without a conflict-free assignment".into())
    })?;

    let mut placed: Vec<FlowSchedule> = fixed.iter().map(|(_, s)| s.clone()).collect();
    for (i, c) in cands.iter().enumerate() {
        placed.push(FlowSchedule::no_wait(c.flow, c.path.clone(), offsets[i], hp));
    }
    let fixed_z = objective(
        &fixed.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>(),
        &fixed.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>(),
    );
    Ok(ScheduleAssignment {
        hyperperiod: hp,
        flows: placed,
        objective: best_z + fixed_z,
    })
}

fn check_budget(
    free: &[Flow],
    paths: &[Datapath],
    fixed: &[(Flow, FlowSchedule)],
    topology: &Topology,
    omega: usize,
    hp: Nanos,
) -> Result<(), ScheduleError> {
    let mut per_port: BTreeMap<String, usize> = BTreeMap::new();
    let mut count = |flow: &Flow, path: &Datapath| {
        for hop in path.hops.iter().skip(1) {
            *per_port
                .entry(topology.link(hop.link).port_name())
                .or_default() += flow.instances(hp);
        }
    };
    for (f, p) in free.iter().zip(paths) {
        count(f, p);
    }
    for (f, s) in fixed {
        count(f, &s.path);
    }
    if let Some((port, &needed)) = per_port.iter().find(|(_, &n)| n > omega) {
        return Err(ScheduleError::BudgetExceeded {
            port: port.clone(),
            needed,
            omega,
        });
    }
    Ok(())
}

struct Search<'a> {
    cands: &'a [Candidate<'a>],
    order: &'a [usize],
    hp: Nanos,
    tick: Nanos,
    node_limit: Option<u64>,
    nodes: u64,
    timelines: HashMap<LinkId, LinkTimeline>,
    offsets: Vec<Nanos>,
    best: Option<(i64, Vec<Nanos>)>,
}

impl Search<'_> {
    fn incumbent(&self) -> i64 {
        self.best.as_ref().map(|b| b.0).unwrap_or(i64::MAX)
    }

    /// Smallest offset after `phi` that can clear the first conflict, or
    /// `None` when `phi` is conflict-free.
    fn next_clear(&self, c: &Candidate, phi: Nanos) -> Option<Nanos> {
        let p = c.flow.period;
        for k in 0..c.flow.instances(self.hp) {
            let base = k as Nanos * p + phi;
            for (f, hop) in c.path.hops.iter().enumerate() {
                let a = base + c.rel[f];
                let b = a + hop.duration + hop.ifg;
                if let Some(tl) = self.timelines.get(&hop.link) {
                    if let Some(end) = tl.blocking_end(a, b, self.hp) {
                        return Some(phi + (end - a));
                    }
                }
            }
        }
        None
    }

    fn occupy(&mut self, c: &Candidate, phi: Nanos) {
        for k in 0..c.flow.instances(self.hp) {
            let base = k as Nanos * c.flow.period + phi;
            for (f, hop) in c.path.hops.iter().enumerate() {
                let a = base + c.rel[f];
                self.timelines
                    .entry(hop.link)
                    .or_default()
                    .spans
                    .push((a, a + hop.duration + hop.ifg));
            }
        }
    }

    fn release(&mut self, c: &Candidate) {
        let n = c.flow.instances(self.hp);
        for hop in &c.path.hops {
            let tl = self.timelines.get_mut(&hop.link).expect("occupied link");
            let len = tl.spans.len();
            tl.spans.truncate(len - n);
        }
    }

    fn dfs(&mut self, depth: usize, partial: i64) -> Result<(), ScheduleError> {
        if depth == self.order.len() {
            if partial < self.incumbent() {
                self.best = Some((partial, self.offsets.clone()));
            }
            return Ok(());
        }
        let idx = self.order[depth];
        let c = &self.cands[idx];
        let mut phi = 0;
        while phi <= c.max_offset {
            let cost = c.flow.weight as i64 * (phi + c.latency - c.flow.deadline).max(0);
            // tardiness never decreases with phi
            if partial + cost >= self.incumbent() {
                break;
            }
            if let Some(next) = self.next_clear(c, phi) {
                phi = num_integer::Integer::div_ceil(&next, &self.tick) * self.tick;
                continue;
            }
            self.nodes += 1;
            if let Some(limit) = self.node_limit {
                if self.nodes > limit {
                    return Err(ScheduleError::SearchLimit(limit));
                }
            }
            self.offsets[idx] = phi;
            self.occupy(c, phi);
            let r = self.dfs(depth + 1, partial + cost);
            self.release(c);
            r?;
            if self.incumbent() == 0 {
                return Ok(());
            }
            phi += self.tick;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1..=4 for the constraint broken, 0 for a structural mismatch.
    pub constraint: u8,
    pub flow: String,
    pub other: Option<String>,
    pub ndp: Option<usize>,
    pub phase: Option<usize>,
    pub window: (Nanos, Nanos),
    pub detail: String,
}

fn cyclic_overlap(a: (Nanos, Nanos), b: (Nanos, Nanos), hp: Nanos) -> bool {
    [-hp, 0, hp]
        .iter()
        .any(|s| b.0 + s < a.1 && a.0 < b.1 + s)
}

/// Check an assignment against all four constraints. An empty result means
/// the schedule is valid.
pub fn verify_schedule(
    assign: &ScheduleAssignment,
    flows: &[Flow],
    _topology: &Topology,
) -> Vec<Violation> {
    let hp = assign.hyperperiod;
    let by_id: HashMap<&str, &Flow> = flows.iter().map(|f| (f.id.as_str(), f)).collect();
    let registry = NdpRegistry::from_datapaths(assign.flows.iter().map(|s| &s.path));
    let mut out = Vec::new();
    let violation = |constraint, flow: &str, phase, window, detail: String| Violation {
        constraint,
        flow: flow.to_string(),
        other: None,
        ndp: None,
        phase,
        window,
        detail,
    };

    // (link, flow index, phase, hop, span)
    let mut occupancy: BTreeMap<LinkId, Vec<(usize, usize, usize, (Nanos, Nanos))>> =
        BTreeMap::new();

    for (si, s) in assign.flows.iter().enumerate() {
        let Some(flow) = by_id.get(s.flow_id.as_str()) else {
            out.push(violation(0, &s.flow_id, None, (0, 0), "unknown flow".into()));
            continue;
        };
        let hops = &s.path.hops;
        if hops.is_empty()
            || s.hop_starts.len() != flow.instances(hp)
            || s.hop_starts.iter().any(|h| h.len() != hops.len())
        {
            out.push(violation(
                0,
                &s.flow_id,
                None,
                (0, 0),
                "phase or hop count does not match the flow".into(),
            ));
            continue;
        }
        if s.offset < 0 {
            out.push(violation(
                3,
                &s.flow_id,
                Some(0),
                (s.offset, s.offset),
                format!("negative offset {}", s.offset),
            ));
        }
        for (k, starts) in s.hop_starts.iter().enumerate() {
            let release = k as Nanos * flow.period;
            let end = s.arrival(k);
            if starts[0] < release || end > release + flow.period {
                out.push(violation(
                    3,
                    &s.flow_id,
                    Some(k),
                    (starts[0], end),
                    format!(
                        "instance window leaves period [{release}, {})",
                        release + flow.period
                    ),
                ));
            }
            for f in 1..hops.len() {
                let ready = starts[f - 1] + hops[f - 1].duration + hops[f - 1].ifg;
                if starts[f] < ready {
                    out.push(violation(
                        1,
                        &s.flow_id,
                        Some(k),
                        (starts[f], ready),
                        format!("hop {f} starts before hop {} completes", f - 1),
                    ));
                }
            }
            let lat = end - starts[0];
            if lat > flow.deadline {
                out.push(violation(
                    2,
                    &s.flow_id,
                    Some(k),
                    (starts[0], end),
                    format!("latency {lat} ns exceeds deadline {} ns", flow.deadline),
                ));
            }
            for (f, hop) in hops.iter().enumerate() {
                occupancy.entry(hop.link).or_default().push((
                    si,
                    k,
                    f,
                    (starts[f], starts[f] + hop.duration + hop.ifg),
                ));
            }
        }
    }

    let mut reported = std::collections::BTreeSet::new();
    for spans in occupancy.values() {
        for (i, a) in spans.iter().enumerate() {
            for b in &spans[i + 1..] {
                if a.0 == b.0 && a.1 == b.1 {
                    continue;
                }
                if !cyclic_overlap(a.3, b.3, hp) {
                    continue;
                }
                let sa = &assign.flows[a.0];
                let sb = &assign.flows[b.0];
                let link = sa.path.hops[a.2].link;
                if !reported.insert((a.0.min(b.0), a.0.max(b.0), link)) {
                    continue;
                }
                let key = sa.path.ndps[a.2];
                out.push(Violation {
                    constraint: 4,
                    flow: sa.flow_id.clone(),
                    other: Some(sb.flow_id.clone()),
                    ndp: registry.id(&key),
                    phase: Some(a.1),
                    window: a.3,
                    detail: format!(
                        "overlaps {} [{}, {}) on link {}",
                        sb.flow_id, b.3 .0, b.3 .1, link
                    ),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn fig1b() -> Topology {
        build_topology(&two_bridge_line_spec()).unwrap()
    }

    #[test]
    fn static_set_is_feasible_with_zero_tardiness() {
        let topo = fig1b();
        let flows = two_bridge_static_flows();
        let a = solve_static(&flows, &topo, &SchedulerConfig::default()).unwrap();
        assert_eq!(a.objective, 0);
        assert_eq!(a.hyperperiod, 4_000_000);
        assert!(verify_schedule(&a, &flows, &topo).is_empty());
        // GCLs respect the per-port budget
        let gcls = a.to_gcls(&topo, DEFAULT_OMEGA).unwrap();
        assert!(gcls.beta() <= DEFAULT_OMEGA);
        assert_eq!(gcls.port("BR1->BR2").unwrap().beta(), 16 + 8 + 1 + 1);
    }

    #[test]
    fn single_flow_gets_zero_offset() {
        let topo = fig1b();
        let f = Flow::new("f", FlowKind::TT, "TK1", "LR1", 64, 100_000, 100_000, 7, DEFAULT_LINK_RATE_BPS).unwrap();
        let a = solve_static(&[f], &topo, &SchedulerConfig::default()).unwrap();
        assert_eq!(a.flows[0].offset, 0);
        assert_eq!(a.objective, 0);
    }

    #[test]
    fn negative_offset_is_a_constraint_three_violation() {
        let topo = fig1b();
        let flows = two_bridge_static_flows();
        let mut a = solve_static(&flows, &topo, &SchedulerConfig::default()).unwrap();
        a.flows[0].offset = -1;
        let v = verify_schedule(&a, &flows, &topo);
        assert!(v.iter().any(|v| v.constraint == 3 && v.flow == a.flows[0].flow_id));
    }

    #[test]
    fn impossible_deadline_is_infeasible() {
        let topo = fig1b();
        // 1500 B needs 3 * 12 us + 2 IFG on the two-bridge path
        let f = Flow::new("f", FlowKind::TT, "TK1", "LR1", 1500, 250_000, 30_000, 7, DEFAULT_LINK_RATE_BPS).unwrap();
        assert!(matches!(
            solve_static(&[f], &topo, &SchedulerConfig::default()),
            Err(ScheduleError::Infeasible(_))
        ));
    }

    #[test]
    fn budget_exceeded_reported() {
        let topo = fig1b();
        let flows = two_bridge_static_flows();
        let cfg = SchedulerConfig { omega: 20, ..Default::default() };
        assert!(matches!(
            solve_static(&flows, &topo, &cfg),
            Err(ScheduleError::BudgetExceeded { needed: 26, omega: 20, .. })
        ));
    }

    #[test]
    fn no_wait_gaps_are_exact() {
        let topo = fig1b();
        let flows = two_bridge_static_flows();
        let a = solve_static(&flows, &topo, &SchedulerConfig::default()).unwrap();
        for s in &a.flows {
            for starts in &s.hop_starts {
                for f in 1..starts.len() {
                    let prev = &s.path.hops[f - 1];
                    assert_eq!(starts[f] - starts[f - 1], prev.duration + prev.ifg);
                }
            }
        }
    }

    #[test]
    fn resolving_own_output_as_fixed_is_clean() {
        let topo = fig1b();
        let flows = two_bridge_static_flows();
        let a = solve_static(&flows, &topo, &SchedulerConfig::default()).unwrap();
        let fixed: Vec<_> = flows
            .iter()
            .map(|f| (f.clone(), a.get(&f.id).unwrap().clone()))
            .collect();
        let b = solve_with_fixed(&[], &fixed, &topo, &SchedulerConfig::default()).unwrap();
        assert!(verify_schedule(&b, &flows, &topo).is_empty());
        assert_eq!(b.objective, a.objective);
    }

    #[test]
    fn hand_built_overlap_on_shared_ndp() {
        let topo = fig1b();
        let r = DEFAULT_LINK_RATE_BPS;
        let a_flow = Flow::new("a", FlowKind::TT, "TK1", "LR1", 100, 100_000, 100_000, 7, r).unwrap();
        let b_flow = Flow::new("b", FlowKind::TT, "TK2", "LR2", 100, 100_000, 100_000, 7, r).unwrap();
        let pa = default_datapath(&a_flow, &topo).unwrap();
        let pb = default_datapath(&b_flow, &topo).unwrap();
        let sa = FlowSchedule::no_wait(&a_flow, pa, 0, 100_000);
        let sb = FlowSchedule::no_wait(&b_flow, pb, 0, 100_000);
        let assign = ScheduleAssignment { hyperperiod: 100_000, flows: vec![sa, sb], objective: 0 };
        let v = verify_schedule(&assign, &[a_flow, b_flow], &topo);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].constraint, 4);
        assert_eq!(v[0].ndp, Some(3));
    }

    #[test]
    fn two_flows_sharing_one_ndp_split_the_period() {
        let spec = TopologySpec {
            nodes: vec![
                DeviceSpec { id: "TK".into(), kind: DeviceKind::Talker },
                DeviceSpec { id: "LR".into(), kind: DeviceKind::Listener },
            ],
            links: vec![LinkSpec { a: "TK".into(), b: "LR".into(), rate_bps: None }],
            routes: vec![RouteSpec { src: "TK".into(), dst: "LR".into(), path: vec!["TK".into(), "LR".into()] }],
        };
        let topo = build_topology(&spec).unwrap();
        let r = DEFAULT_LINK_RATE_BPS;
        // 125 B -> 1000 ns, period 2000 ns
        let flows = vec![
            Flow::new("a", FlowKind::TT, "TK", "LR", 125, 2000, 2000, 7, r).unwrap(),
            Flow::new("b", FlowKind::TT, "TK", "LR", 125, 2000, 2000, 7, r).unwrap(),
        ];
        let paths: Vec<_> = flows
            .iter()
            .map(|f| {
                let mut p = derive_datapath(f, &topo, &[]).unwrap();
                p.hops[0].ifg = 0;
                p
            })
            .collect();
        let cfg = SchedulerConfig { tick: 500, ..Default::default() };
        let a = solve_with_paths(&flows, paths, &[], &topo, &cfg, 2000).unwrap();
        let offs: Vec<_> = a.flows.iter().map(|s| s.offset).collect();
        assert_eq!(offs, vec![0, 1000]);
        assert_eq!(a.objective, 0);
        assert!(verify_schedule(&a, &flows, &topo).is_empty());
    }

    #[test]
    fn avb_tardiness_counts_offset() {
        let topo = fig1b();
        let r = DEFAULT_LINK_RATE_BPS;
        let f = Flow::new("x", FlowKind::AVB, "TK1", "LR1", 1000, 100_000, 30_000, 3, r).unwrap();
        let p = default_datapath(&f, &topo).unwrap();
        let late = FlowSchedule::no_wait(&f, p.clone(), 10_000, 100_000);
        let lat = p.no_wait_latency();
        assert_eq!(objective(&[f.clone()], &[late]), 3 * (10_000 + lat - 30_000));
        let early = FlowSchedule::no_wait(&f, p, 0, 100_000);
        assert_eq!(objective(&[f], &[early]), 0);
    }
}
