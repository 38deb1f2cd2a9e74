//! Network and flow model: talkers, listeners, bridges expanded into queue
//! vertices, static routes, and the datapath / NDP decomposition of a flow.
//!
//! All times are integer nanoseconds.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Nanos = i64;

pub const MTU_BYTES: u32 = 1500;
pub const QUEUES_PER_BRIDGE: u8 = 4;
pub const DEFAULT_LINK_RATE_BPS: u64 = 1_000_000_000;
pub const DEFAULT_TICK_NS: Nanos = 10;
pub const IFG_BYTES: u32 = 12;

/// Queue ids inside a bridge. Q3 carries TT, Q2 AVB, Q1 is held back for
/// dynamically admitted flows and Q0 is best effort.
pub const QUEUE_TT: u8 = 3;
pub const QUEUE_AVB: u8 = 2;
pub const QUEUE_RESERVED: u8 = 1;
pub const QUEUE_BE: u8 = 0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("link endpoint `{0}` does not exist")]
    DanglingEndpoint(String),
    #[error("invalid route {src} -> {dst}: {reason}")]
    InvalidRoute { src: String, dst: String, reason: String },
    #[error("no route from `{0}` to `{1}`")]
    NoRoute(String, String),
    #[error("flow `{flow}` cannot use best-effort queue {queue} for scheduled traffic")]
    BeQueueForScheduled { flow: String, queue: u8 },
    #[error("expected {expected} queue choices, got {got}")]
    QueueChoiceLen { expected: usize, got: usize },
    #[error("invalid flow `{flow}`: {reason}")]
    InvalidFlow { flow: String, reason: String },
    #[error("no flows")]
    NoFlows,
    #[error("hyperperiod overflows i64")]
    HyperperiodOverflow,
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlowKind {
    TT,
    AVB,
    BE,
}

impl FlowKind {
    pub fn is_scheduled(self) -> bool {
        !matches!(self, FlowKind::BE)
    }

    /// Queue a statically scheduled flow of this class binds to.
    pub fn default_queue(self) -> u8 {
        match self {
            FlowKind::TT => QUEUE_TT,
            FlowKind::AVB => QUEUE_AVB,
            FlowKind::BE => QUEUE_BE,
        }
    }
}

impl std::str::FromStr for FlowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TT" => Ok(FlowKind::TT),
            "AVB" => Ok(FlowKind::AVB),
            "BE" => Ok(FlowKind::BE),
            other => Err(format!("unknown flow kind `{other}`")),
        }
    }
}

/// One periodic stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub id: String,
    pub kind: FlowKind,
    pub source: String,
    pub destination: String,
    pub size_bytes: u32,
    pub period: Nanos,
    pub deadline: Nanos,
    /// Per-hop transmission time at the reference link rate.
    pub duration: Nanos,
    /// PCP value, used as the tardiness weight.
    pub weight: u8,
    pub offset: Option<Nanos>,
}

impl Flow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        kind: FlowKind,
        source: impl Into<String>,
        destination: impl Into<String>,
        size_bytes: u32,
        period: Nanos,
        deadline: Nanos,
        pcp: u8,
        link_rate_bps: u64,
    ) -> Result<Flow, ModelError> {
        let id = id.into();
        if size_bytes == 0 || link_rate_bps == 0 {
            return Err(ModelError::InvalidFlow {
                flow: id,
                reason: "size and link rate must be positive".into(),
            });
        }
        let flow = Flow {
            duration: transmission_duration(size_bytes, link_rate_bps),
            id,
            kind,
            source: source.into(),
            destination: destination.into(),
            size_bytes,
            period,
            deadline,
            weight: pcp,
            offset: None,
        };
        flow.validate()?;
        Ok(flow)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: &str| {
            Err(ModelError::InvalidFlow {
                flow: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.period <= 0 {
            return fail("period must be positive");
        }
        if self.deadline <= 0 {
            return fail("deadline must be positive");
        }
        if self.duration <= 0 {
            return fail("duration must be positive");
        }
        if self.size_bytes > MTU_BYTES {
            return fail("size exceeds the 1500 B MTU");
        }
        if self.weight > 7 {
            return fail("pcp must be in 0..=7");
        }
        if let Some(phi) = self.offset {
            if phi < 0 || phi + self.duration > self.period {
                return fail("offset window does not fit inside the period");
            }
        }
        Ok(())
    }

    /// Number of instances of this flow per hyperperiod.
    pub fn instances(&self, hyperperiod: Nanos) -> usize {
        (hyperperiod / self.period) as usize
    }
}

/// `ceil(size * 8 / rate)` in nanoseconds.
pub fn transmission_duration(size_bytes: u32, rate_bps: u64) -> Nanos {
    let bits = size_bytes as u128 * 8 * 1_000_000_000;
    bits.div_ceil(rate_bps as u128) as Nanos
}

pub fn ifg_duration(rate_bps: u64) -> Nanos {
    transmission_duration(IFG_BYTES, rate_bps)
}

/// Least common multiple of all flow periods.
pub fn hyperperiod(flows: &[Flow]) -> Result<Nanos, ModelError> {
    hyperperiod_of(flows.iter().map(|f| f.period))
}

pub fn hyperperiod_of(periods: impl IntoIterator<Item = Nanos>) -> Result<Nanos, ModelError> {
    let mut acc: Option<Nanos> = None;
    for p in periods {
        if p <= 0 {
            return Err(ModelError::InvalidFlow {
                flow: "?".into(),
                reason: format!("non-positive period {p}"),
            });
        }
        acc = Some(match acc {
            None => p,
            Some(a) => (a / a.gcd(&p))
                .checked_mul(p)
                .ok_or(ModelError::HyperperiodOverflow)?,
        });
    }
    acc.ok_or(ModelError::NoFlows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Talker,
    Listener,
    Bridge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Talker,
    Listener,
    BridgeQueue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueueClass {
    Scheduled,
    BestEffort,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueInfo {
    pub switch_id: String,
    pub queue_id: u8,
    pub class: QueueClass,
    pub preemptive: bool,
}

/// A vertex of the topology graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub queue: Option<QueueInfo>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub usize);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// Directed half of a full-duplex link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub from: String,
    pub to: String,
    pub rate_bps: u64,
}

impl Link {
    /// Egress port name, `BR1->BR2`.
    pub fn port_name(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

// ---- JSON topology description ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: Vec<DeviceSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub routes: Vec<RouteSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: String,
    pub kind: DeviceKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub rate_bps: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RouteSpec {
    pub src: String,
    pub dst: String,
    pub path: Vec<String>,
}

impl TopologySpec {
    pub fn from_json(text: &str) -> Result<TopologySpec, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TopologySpec, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The network graph. Immutable once built.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Topology {
    pub devices: Vec<DeviceSpec>,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub adjacency: Vec<Vec<u8>>,
    pub routes: BTreeMap<(String, String), Vec<String>>,
    pub default_rate_bps: u64,
}

pub fn build_topology(spec: &TopologySpec) -> Result<Topology, ModelError> {
    build_topology_with_rate(spec, DEFAULT_LINK_RATE_BPS)
}

pub fn build_topology_with_rate(
    spec: &TopologySpec,
    default_rate_bps: u64,
) -> Result<Topology, ModelError> {
    let mut kinds: HashMap<&str, DeviceKind> = HashMap::new();
    for d in &spec.nodes {
        if kinds.insert(d.id.as_str(), d.kind).is_some() {
            return Err(ModelError::DuplicateId(d.id.clone()));
        }
    }

    let mut nodes = Vec::new();
    for d in &spec.nodes {
        match d.kind {
            DeviceKind::Talker => nodes.push(Node {
                id: d.id.clone(),
                kind: NodeKind::Talker,
                queue: None,
            }),
            DeviceKind::Listener => nodes.push(Node {
                id: d.id.clone(),
                kind: NodeKind::Listener,
                queue: None,
            }),
            DeviceKind::Bridge => {
                for q in 0..QUEUES_PER_BRIDGE {
                    let class = if q == QUEUE_BE {
                        QueueClass::BestEffort
                    } else {
                        QueueClass::Scheduled
                    };
                    nodes.push(Node {
                        id: queue_vertex_name(&d.id, q),
                        kind: NodeKind::BridgeQueue,
                        queue: Some(QueueInfo {
                            switch_id: d.id.clone(),
                            queue_id: q,
                            class,
                            preemptive: class == QueueClass::BestEffort,
                        }),
                    });
                }
            }
        }
    }

    let mut links = Vec::new();
    let mut seen_pairs = BTreeSet::new();
    for l in &spec.links {
        for end in [&l.a, &l.b] {
            if !kinds.contains_key(end.as_str()) {
                return Err(ModelError::DanglingEndpoint(end.clone()));
            }
        }
        let rate = l.rate_bps.unwrap_or(default_rate_bps);
        for (from, to) in [(&l.a, &l.b), (&l.b, &l.a)] {
            if !seen_pairs.insert((from.clone(), to.clone())) {
                continue;
            }
            links.push(Link {
                id: LinkId(links.len()),
                from: from.clone(),
                to: to.clone(),
                rate_bps: rate,
            });
        }
    }

    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let vertices_of = |dev: &str| -> Vec<usize> {
        match kinds[dev] {
            DeviceKind::Bridge => (0..QUEUES_PER_BRIDGE)
                .map(|q| index[queue_vertex_name(dev, q).as_str()])
                .collect(),
            _ => vec![index[dev]],
        }
    };
    let n = nodes.len();
    let mut adjacency = vec![vec![0u8; n]; n];
    for l in &links {
        for &u in &vertices_of(&l.from) {
            for &v in &vertices_of(&l.to) {
                adjacency[u][v] = 1;
            }
        }
    }

    let mut topo = Topology {
        devices: spec.nodes.clone(),
        nodes,
        links,
        adjacency,
        routes: BTreeMap::new(),
        default_rate_bps,
    };
    for r in &spec.routes {
        topo.check_route(r)?;
        topo.routes
            .insert((r.src.clone(), r.dst.clone()), r.path.clone());
    }
    Ok(topo)
}

pub fn queue_vertex_name(bridge: &str, queue: u8) -> String {
    format!("{bridge}.Q{queue}")
}

impl Topology {
    fn check_route(&self, r: &RouteSpec) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidRoute {
            src: r.src.clone(),
            dst: r.dst.clone(),
            reason,
        };
        if r.path.len() < 2 || r.path.first() != Some(&r.src) || r.path.last() != Some(&r.dst) {
            return Err(bad("path must start at src and end at dst".into()));
        }
        if self.device_kind(&r.src) != Some(DeviceKind::Talker) {
            return Err(bad("src is not a talker".into()));
        }
        if self.device_kind(&r.dst) != Some(DeviceKind::Listener) {
            return Err(bad("dst is not a listener".into()));
        }
        for mid in &r.path[1..r.path.len() - 1] {
            if self.device_kind(mid) != Some(DeviceKind::Bridge) {
                return Err(bad(format!("intermediate hop `{mid}` is not a bridge")));
            }
        }
        let unique: BTreeSet<_> = r.path.iter().collect();
        if unique.len() != r.path.len() {
            return Err(bad("path revisits a node".into()));
        }
        for w in r.path.windows(2) {
            if self.link_between(&w[0], &w[1]).is_none() {
                return Err(bad(format!("no link {} -> {}", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn device_kind(&self, id: &str) -> Option<DeviceKind> {
        self.devices.iter().find(|d| d.id == id).map(|d| d.kind)
    }

    pub fn bridges(&self) -> impl Iterator<Item = &str> {
        self.devices
            .iter()
            .filter(|d| d.kind == DeviceKind::Bridge)
            .map(|d| d.id.as_str())
    }

    pub fn talkers(&self) -> impl Iterator<Item = &str> {
        self.devices
            .iter()
            .filter(|d| d.kind == DeviceKind::Talker)
            .map(|d| d.id.as_str())
    }

    pub fn listeners(&self) -> impl Iterator<Item = &str> {
        self.devices
            .iter()
            .filter(|d| d.kind == DeviceKind::Listener)
            .map(|d| d.id.as_str())
    }

    pub fn bridge_count(&self) -> usize {
        self.bridges().count()
    }

    pub fn link_between(&self, from: &str, to: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.from == from && l.to == to)
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    /// Directed links leaving a bridge. These carry gate control lists.
    pub fn egress_ports(&self) -> impl Iterator<Item = &Link> {
        self.links
            .iter()
            .filter(|l| self.device_kind(&l.from) == Some(DeviceKind::Bridge))
    }

    pub fn queue_vertex_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::BridgeQueue)
            .count()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn route(&self, src: &str, dst: &str) -> Option<&[String]> {
        self.routes
            .get(&(src.to_string(), dst.to_string()))
            .map(|v| v.as_slice())
    }

    /// Bridges on the static route between two end stations.
    pub fn route_bridges(&self, src: &str, dst: &str) -> Option<usize> {
        self.route(src, dst).map(|p| p.len() - 2)
    }
}

/// Identity of a network datapath segment: the link plus, for bridge
/// egress, the queue the flow is bound to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NdpKey {
    pub link: LinkId,
    pub queue: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub link: LinkId,
    pub from: String,
    pub to: String,
    pub queue: Option<u8>,
    pub duration: Nanos,
    pub ifg: Nanos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datapath {
    pub flow_id: String,
    pub hops: Vec<Hop>,
    pub ndps: Vec<NdpKey>,
}

impl Datapath {
    /// Number of operations `h_i`.
    pub fn op_count(&self) -> usize {
        self.hops.len()
    }

    pub fn bridge_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    /// Start of each hop relative to dispatch under no-wait forwarding.
    pub fn no_wait_starts(&self) -> Vec<Nanos> {
        let mut t = 0;
        self.hops
            .iter()
            .map(|h| {
                let s = t;
                t += h.duration + h.ifg;
                s
            })
            .collect()
    }

    /// Dispatch to reception at the listener under no-wait forwarding.
    pub fn no_wait_latency(&self) -> Nanos {
        let last = self.hops.last().map(|h| h.duration).unwrap_or(0);
        self.no_wait_starts().last().copied().unwrap_or(0) + last
    }
}

pub fn derive_datapath(
    flow: &Flow,
    topology: &Topology,
    queue_choice: &[u8],
) -> Result<Datapath, ModelError> {
    let path = topology
        .route(&flow.source, &flow.destination)
        .ok_or_else(|| ModelError::NoRoute(flow.source.clone(), flow.destination.clone()))?;
    let bridges = path.len() - 2;
    if queue_choice.len() != bridges {
        return Err(ModelError::QueueChoiceLen {
            expected: bridges,
            got: queue_choice.len(),
        });
    }
    let mut hops = Vec::with_capacity(path.len() - 1);
    for (i, w) in path.windows(2).enumerate() {
        let link = topology
            .link_between(&w[0], &w[1])
            .ok_or_else(|| ModelError::NoRoute(w[0].clone(), w[1].clone()))?;
        let queue = if i == 0 {
            None
        } else {
            let q = queue_choice[i - 1];
            if q >= QUEUES_PER_BRIDGE || (q == QUEUE_BE && flow.kind.is_scheduled()) {
                return Err(ModelError::BeQueueForScheduled {
                    flow: flow.id.clone(),
                    queue: q,
                });
            }
            Some(q)
        };
        hops.push(Hop {
            link: link.id,
            from: w[0].clone(),
            to: w[1].clone(),
            queue,
            duration: transmission_duration(flow.size_bytes, link.rate_bps),
            ifg: ifg_duration(link.rate_bps),
        });
    }
    let ndps = hops
        .iter()
        .map(|h| NdpKey {
            link: h.link,
            queue: h.queue,
        })
        .collect();
    Ok(Datapath {
        flow_id: flow.id.clone(),
        hops,
        ndps,
    })
}

/// Datapath with every bridge using the flow class's default queue.
pub fn default_datapath(flow: &Flow, topology: &Topology) -> Result<Datapath, ModelError> {
    let m = topology
        .route_bridges(&flow.source, &flow.destination)
        .ok_or_else(|| ModelError::NoRoute(flow.source.clone(), flow.destination.clone()))?;
    derive_datapath(flow, topology, &vec![flow.kind.default_queue(); m])
}

/// Dense 1-based numbering of the NDPs used by a set of datapaths, ordered
/// by link then by descending queue id.
#[derive(Clone, Debug, Default)]
pub struct NdpRegistry {
    ids: BTreeMap<NdpKey, usize>,
}

impl NdpRegistry {
    pub fn from_datapaths<'a>(paths: impl IntoIterator<Item = &'a Datapath>) -> NdpRegistry {
        let mut keys: Vec<NdpKey> = paths
            .into_iter()
            .flat_map(|p| p.ndps.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        keys.sort_by(|a, b| a.link.cmp(&b.link).then(b.queue.cmp(&a.queue)));
        NdpRegistry {
            ids: keys.into_iter().enumerate().map(|(i, k)| (k, i + 1)).collect(),
        }
    }

    pub fn id(&self, key: &NdpKey) -> Option<usize> {
        self.ids.get(key).copied()
    }

    pub fn ids_of(&self, path: &Datapath) -> Vec<usize> {
        path.ndps.iter().filter_map(|k| self.id(k)).collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

// ---- flows CSV ----

pub const FLOWS_CSV_HEADER: &str = "id,kind,src,dst,size_bytes,period_ns,deadline_ns,pcp";

#[derive(Debug, Deserialize, Serialize)]
struct FlowRow {
    id: String,
    kind: String,
    src: String,
    dst: String,
    size_bytes: u32,
    period_ns: Nanos,
    deadline_ns: Nanos,
    pcp: u8,
}

pub fn read_flows_csv<R: Read>(reader: R, link_rate_bps: u64) -> Result<Vec<Flow>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut flows = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.deserialize::<FlowRow>() {
        let row = rec.map_err(|e| ModelError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = flows.len() as u64 + 2;
        let kind = row
            .kind
            .parse::<FlowKind>()
            .map_err(|msg| ModelError::Parse { line, msg })?;
        if !seen.insert(row.id.clone()) {
            return Err(ModelError::Parse {
                line,
                msg: format!("duplicate flow id `{}`", row.id),
            });
        }
        let flow = Flow::new(
            row.id,
            kind,
            row.src,
            row.dst,
            row.size_bytes,
            row.period_ns,
            row.deadline_ns,
            row.pcp,
            link_rate_bps,
        )
        .map_err(|e| ModelError::Parse {
            line,
            msg: e.to_string(),
        })?;
        flows.push(flow);
    }
    Ok(flows)
}

pub fn load_flows_csv(path: impl AsRef<Path>, link_rate_bps: u64) -> Result<Vec<Flow>, ModelError> {
    read_flows_csv(std::fs::File::open(path)?, link_rate_bps)
}

pub fn write_flows_csv(flows: &[Flow]) -> String {
    let mut out = String::from(FLOWS_CSV_HEADER);
    out.push('\n');
    for f in flows {
        let kind = match f.kind {
            FlowKind::TT => "TT",
            FlowKind::AVB => "AVB",
            FlowKind::BE => "BE",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            f.id, kind, f.source, f.destination, f.size_bytes, f.period, f.deadline, f.weight
        ));
    }
    out
}

/// The two-bridge line used throughout the examples: TK1, TK2 into BR1,
/// BR1 to BR2, BR2 out to LR1 and LR2.
pub fn two_bridge_line_spec() -> TopologySpec {
    let dev = |id: &str, kind| DeviceSpec {
        id: id.into(),
        kind,
    };
    let link = |a: &str, b: &str| LinkSpec {
        a: a.into(),
        b: b.into(),
        rate_bps: None,
    };
    let route = |s: &str, d: &str| RouteSpec {
        src: s.into(),
        dst: d.into(),
        path: vec![s.into(), "BR1".into(), "BR2".into(), d.into()],
    };
    TopologySpec {
        nodes: vec![
            dev("TK1", DeviceKind::Talker),
            dev("TK2", DeviceKind::Talker),
            dev("BR1", DeviceKind::Bridge),
            dev("BR2", DeviceKind::Bridge),
            dev("LR1", DeviceKind::Listener),
            dev("LR2", DeviceKind::Listener),
        ],
        links: vec![
            link("TK1", "BR1"),
            link("TK2", "BR1"),
            link("BR1", "BR2"),
            link("BR2", "LR1"),
            link("BR2", "LR2"),
        ],
        routes: vec![
            route("TK1", "LR1"),
            route("TK1", "LR2"),
            route("TK2", "LR1"),
            route("TK2", "LR2"),
        ],
    }
}

/// Two TT flows and two AVB audio flows, statically scheduled at start-up.
pub fn two_bridge_static_flows() -> Vec<Flow> {
    let rate = DEFAULT_LINK_RATE_BPS;
    vec![
        Flow::new("tt1", FlowKind::TT, "TK1", "LR2", 50, 250_000, 1_000_000, 7, rate).unwrap(),
        Flow::new("tt2", FlowKind::TT, "TK2", "LR1", 100, 500_000, 1_000_000, 7, rate).unwrap(),
        Flow::new("avb1", FlowKind::AVB, "TK2", "LR1", 1000, 4_000_000, 2_000_000, 3, rate)
            .unwrap(),
        Flow::new("avb2", FlowKind::AVB, "TK1", "LR2", 1200, 4_000_000, 2_000_000, 3, rate)
            .unwrap(),
    ]
}
