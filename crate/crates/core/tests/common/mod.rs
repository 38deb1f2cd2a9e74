//! Oracles shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsnsched::env::{reward_b, reward_o, reward_s};
use tsnsched::gcl::{be_gaps, GateEvent};
use tsnsched::model::{
    build_topology, DeviceKind, DeviceSpec, Flow, FlowKind, LinkSpec, RouteSpec, TopologySpec,
    DEFAULT_LINK_RATE_BPS,
};
use tsnsched::scheduler::{solve_static, verify_schedule, ScheduleError, SchedulerConfig};
use tsnsched::sim::{FlowMetrics, SimMetrics};

const IFG: i64 = 96;


fn line_spec(bridges: usize) -> TopologySpec {
    let dev = |id: &str, kind| DeviceSpec { id: id.into(), kind };
    let brs: Vec<String> = (1..=bridges).map(|i| format!("BR{i}")).collect();
    let mut nodes = vec![dev("TK1", DeviceKind::Talker), dev("TK2", DeviceKind::Talker)];
    nodes.extend(brs.iter().map(|b| dev(b, DeviceKind::Bridge)));
    nodes.push(dev("LR1", DeviceKind::Listener));
    nodes.push(dev("LR2", DeviceKind::Listener));
    let link = |a: &str, b: &str| LinkSpec { a: a.into(), b: b.into(), rate_bps: None };
    let mut links = vec![link("TK1", &brs[0]), link("TK2", &brs[0])];
    for w in brs.windows(2) {
        links.push(link(&w[0], &w[1]));
    }
    let last = brs.last().unwrap();
    links.push(link(last, "LR1"));
    links.push(link(last, "LR2"));
    let mut routes = Vec::new();
    for s in ["TK1", "TK2"] {
        for d in ["LR1", "LR2"] {
            let mut path = vec![s.to_string()];
            path.extend(brs.iter().cloned());
            path.push(d.into());
            routes.push(RouteSpec { src: s.into(), dst: d.into(), path });
        }
    }
    TopologySpec { nodes, links, routes }
}

struct Item {
    links: Vec<(String, String)>,
    period: i64,
    dur: i64,
    latency: i64,
    deadline: i64,
    weight: i64,
}

fn hops(src: &str, dst: &str, bridges: usize) -> Vec<(String, String)> {
    let mut names = vec![src.to_string()];
    names.extend((1..=bridges).map(|i| format!("BR{i}")));
    names.push(dst.to_string());
    names.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
}

/// Busy spans of one flow at offset `phi`, per directed link.
fn spans(it: &Item, phi: i64, hp: i64) -> Vec<(usize, i64, i64)> {
    let mut out = Vec::new();
    for k in 0..hp / it.period {
        for f in 0..it.links.len() {
            let s = k * it.period + phi + f as i64 * (it.dur + IFG);
            out.push((f, s, s + it.dur + IFG));
        }
    }
    out
}

fn clash(a: &Item, pa: i64, b: &Item, pb: i64, hp: i64) -> bool {
    let sa = spans(a, pa, hp);
    let sb = spans(b, pb, hp);
    for &(fa, s1, e1) in &sa {
        for &(fb, s2, e2) in &sb {
            if a.links[fa] != b.links[fb] {
                continue;
            }
            for shift in [-hp, 0, hp] {
                if s1 < e2 + shift && s2 + shift < e1 {
                    return true;
                }
            }
        }
    }
    false
}

fn brute(items: &[Item], tick: i64, hp: i64) -> Option<i64> {
    fn rec(items: &[Item], tick: i64, hp: i64, chosen: &mut Vec<i64>, best: &mut Option<i64>) {
        let i = chosen.len();
        if i == items.len() {
            let z: i64 = items
                .iter()
                .zip(chosen.iter())
                .map(|(it, &phi)| it.weight * (phi + it.latency - it.deadline).max(0))
                .sum();
            if best.is_none_or(|b| z < b) {
                *best = Some(z);
            }
            return;
        }
        let it = &items[i];
        let mut phi = 0;
        while phi + it.latency <= it.period {
            if (0..i).all(|j| !clash(&items[j], chosen[j], it, phi, hp)) {
                chosen.push(phi);
                rec(items, tick, hp, chosen, best);
                chosen.pop();
            }
            phi += tick;
        }
    }
    if items.iter().any(|it| it.latency > it.deadline || it.latency > it.period) {
        return None;
    }
    let mut best = None;
    rec(items, tick, hp, &mut Vec::new(), &mut best);
    best
}

pub struct SolverOracleReport {
    pub cases: usize,
    pub feasible: usize,
    pub tardy: usize,
    pub mismatches: Vec<String>,
    pub elapsed: std::time::Duration,
}

/// Compare branch-and-bound with enumeration on `cases` random instances
/// of at most 5 flows over 1 or 2 bridges, tick = half the shortest frame.
pub fn solver_oracle(cases: usize, seed: u64) -> SolverOracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = std::time::Instant::now();
    let mut mismatches = Vec::new();
    let mut feasible = 0;
    let mut tardy = 0;
    for case in 0..cases {
        let bridges = rng.random_range(1..=2);
        let topo = build_topology(&line_spec(bridges)).unwrap();
        let n = rng.random_range(1..=5);
        let mut flows = Vec::new();
        let mut items = Vec::new();
        for i in 0..n {
            let src = ["TK1", "TK2"][rng.random_range(0..2)];
            let dst = ["LR1", "LR2"][rng.random_range(0..2)];
            let size: u32 = [50, 75, 100][rng.random_range(0..3)];
            let period: i64 = [4000, 8000][rng.random_range(0..2)];
            let dur = size as i64 * 8;
            let links = hops(src, dst, bridges);
            let latency = (links.len() as i64 - 1) * (dur + IFG) + dur;
            // a few deadlines below the no-wait latency, most with some slack
            let deadline: i64 = rng.random_range(latency - 200..=period.max(latency));
            let pcp: u8 = rng.random_range(1..=7);
            let f = Flow::new(
                format!("f{i}"),
                FlowKind::TT,
                src,
                dst,
                size,
                period,
                deadline,
                pcp,
                DEFAULT_LINK_RATE_BPS,
            )
            .unwrap();
            items.push(Item { links, period, dur, latency, deadline, weight: pcp as i64 });
            flows.push(f);
        }
        let hp = items.iter().map(|i| i.period).max().unwrap();
        let tick = items.iter().map(|i| i.dur).min().unwrap() / 2;
        let cfg = SchedulerConfig { tick, ..SchedulerConfig::default() };
        let expect = brute(&items, tick, hp);
        match (solve_static(&flows, &topo, &cfg), expect) {
            (Ok(a), Some(z)) => {
                if a.objective != z {
                    mismatches.push(format!("case {case}: objective {} vs {z}", a.objective));
                }
                if !verify_schedule(&a, &flows, &topo).is_empty() {
                    mismatches.push(format!("case {case}: verifier rejects the solver's schedule"));
                }
                tardy += (z > 0) as usize;
                feasible += 1;
            }
            (Err(ScheduleError::Infeasible(_)), None) => {}
            (got, want) => mismatches.push(format!("case {case}: solver {got:?}, enumeration {want:?}")),
        }
    }
    SolverOracleReport { cases, feasible, tardy, mismatches, elapsed: started.elapsed() }
}

// Reward predicates against a tick-by-tick occupancy scan. All times are
// multiples of the tick, so a half-open interval is occupied at tick t
// exactly when open <= t < close.
const TICK: i64 = 10;
const HP: i64 = 20_000;

fn occupied(t: i64, open: i64, close: i64) -> bool {
    open <= t && t < close
}

/// Non-overlapping scheduled windows, as a GCL would hold.
fn random_events(rng: &mut ChaCha8Rng) -> Vec<GateEvent> {
    let mut events = Vec::new();
    let mut t = rng.random_range(0..40) * TICK;
    while events.len() < 8 {
        let len = rng.random_range(1..80) * TICK;
        if t + len > HP {
            break;
        }
        events.push(GateEvent::new(3, t, t + len, events.len()));
        t += len + rng.random_range(0..300) * TICK;
    }
    events
}

fn scan_s(open: i64, close: i64, events: &[GateEvent]) -> bool {
    !(0..HP / TICK).map(|i| i * TICK).any(|t| {
        occupied(t, open, close) && events.iter().any(|e| occupied(t, e.open, e.close))
    })
}

/// Ticks that are BE-open and at least `lg` away from both gap ends.
fn usable(t: i64, events: &[GateEvent], lg: i64) -> Option<(i64, i64)> {
    if events.iter().any(|e| occupied(t, e.open, e.close)) {
        return None;
    }
    let start = events.iter().filter(|e| e.close <= t).map(|e| e.close).max().unwrap_or(0);
    let end = events.iter().filter(|e| e.open > t).map(|e| e.open).min().unwrap_or(HP);
    occupied(t, start + lg, end - lg).then_some((start, end))
}

fn scan_b(open: i64, close: i64, events: &[GateEvent], lg: i64, strict: bool) -> bool {
    let ticks: Vec<i64> = (open / TICK..close / TICK).map(|i| i * TICK).collect();
    if strict {
        // every occupied tick usable and all inside the same gap
        let gaps: Vec<_> = ticks.iter().map(|&t| usable(t, events, lg)).collect();
        !gaps.is_empty() && gaps.iter().all(|g| g.is_some() && *g == gaps[0])
    } else {
        ticks.iter().any(|&t| usable(t, events, lg).is_some())
    }
}

pub struct RewardOracleReport {
    pub configs: usize,
    /// Positive outcomes of reward_S, reward_B and strict reward_B.
    pub positives: [usize; 3],
    pub mismatches: Vec<String>,
}

/// reward_S and both reward_B forms against the tick scan on random
/// windows and GCLs.
pub fn reward_sb_oracle(configs: usize, seed: u64) -> RewardOracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    let mut positives = [0usize; 3];
    for case in 0..configs {
        let events = random_events(&mut rng);
        let gaps = be_gaps(&events, HP);
        let open = rng.random_range(0..HP / TICK - 1) * TICK;
        let close = (open + rng.random_range(1..60) * TICK).min(HP);
        let lg = rng.random_range(0..80) * TICK;
        let s = reward_s(open, close, &events);
        let b = reward_b(open, close, &gaps, lg, false);
        let bs = reward_b(open, close, &gaps, lg, true);
        positives[0] += s as usize;
        positives[1] += b as usize;
        positives[2] += bs as usize;
        if s != scan_s(open, close, &events) {
            mismatches.push(format!("{case}: S [{open},{close})"));
        }
        if b != scan_b(open, close, &events, lg, false) {
            mismatches.push(format!("{case}: B [{open},{close}) lg {lg}"));
        }
        if bs != scan_b(open, close, &events, lg, true) {
            mismatches.push(format!("{case}: strict B [{open},{close}) lg {lg}"));
        }
    }
    RewardOracleReport { configs, positives, mismatches }
}

/// reward_O against a direct scan of every observed latency, plus the
/// inclusive deadline boundary. Returns the number of mismatches.
pub fn reward_o_oracle(configs: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..configs {
        let n = rng.random_range(1..5);
        let mut flows = Vec::new();
        let mut metrics = SimMetrics::default();
        let mut expect = true;
        for i in 0..n {
            let deadline = rng.random_range(100..200) * TICK;
            let f = Flow::new(format!("f{i}"), FlowKind::TT, "TK1", "LR1", 50, HP, deadline, 7, DEFAULT_LINK_RATE_BPS)
                .unwrap();
            let lat: Vec<i64> = (0..rng.random_range(0..4)).map(|_| rng.random_range(50..220) * TICK).collect();
            let dropped = rng.random_bool(0.1) as usize;
            // arrival minus dispatch offset, one instance at a time
            for &l in &lat {
                if l > deadline {
                    expect = false;
                }
            }
            if dropped > 0 {
                expect = false;
            }
            metrics.flows.insert(
                f.id.clone(),
                FlowMetrics { flow_id: f.id.clone(), latencies: lat, dropped, ..FlowMetrics::default() },
            );
            flows.push(f);
        }
        mismatches += (reward_o(&flows, &metrics) != expect) as usize;
    }
    // boundary: exactly the deadline passes, one nanosecond more fails
    let f = Flow::new("x", FlowKind::TT, "TK1", "LR1", 50, HP, 1000, 7, DEFAULT_LINK_RATE_BPS).unwrap();
    let mut m = SimMetrics { flows: BTreeMap::new(), ..SimMetrics::default() };
    m.flows.insert("x".into(), FlowMetrics { latencies: vec![1000], ..FlowMetrics::default() });
    mismatches += !reward_o(std::slice::from_ref(&f), &m) as usize;
    m.flows.get_mut("x").unwrap().latencies = vec![1001];
    mismatches += reward_o(&[f], &m) as usize;
    mismatches
}
