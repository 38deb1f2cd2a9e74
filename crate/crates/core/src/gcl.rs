//! Gate control lists per egress port.
//!
//! Only scheduled-queue windows are stored; the best-effort queue owns the
//! complement of their union within the hyperperiod and costs no entries.
//! Windows are half-open `[open, close)`, so back-to-back events may abut.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Nanos, Topology, QUEUES_PER_BRIDGE, QUEUE_BE};

pub const DEFAULT_OMEGA: usize = 128;
pub const GCL_CSV_HEADER: &str = "port,queue,phase,open_ns,close_ns";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GclError {
    #[error("port {port}: event [{open}, {close}) overlaps existing [{other_open}, {other_close})")]
    Overlap {
        port: String,
        open: Nanos,
        close: Nanos,
        other_open: Nanos,
        other_close: Nanos,
    },
    #[error("port {port}: {needed} entries exceed threshold {omega}")]
    BudgetExceeded {
        port: String,
        needed: usize,
        omega: usize,
    },
    #[error("malformed gate event: {0}")]
    Malformed(String),
    #[error("unknown port `{0}`")]
    UnknownPort(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEvent {
    pub queue: u8,
    pub open: Nanos,
    pub close: Nanos,
    pub phase: usize,
    /// Flow whose frame this window serves, when known.
    #[serde(default)]
    pub flow: Option<String>,
}

impl GateEvent {
    pub fn new(queue: u8, open: Nanos, close: Nanos, phase: usize) -> GateEvent {
        GateEvent {
            queue,
            open,
            close,
            phase,
            flow: None,
        }
    }

    pub fn for_flow(mut self, flow: impl Into<String>) -> GateEvent {
        self.flow = Some(flow.into());
        self
    }

    pub fn overlaps(&self, open: Nanos, close: Nanos) -> bool {
        self.open < close && open < self.close
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateControlList {
    pub port: String,
    pub hyperperiod: Nanos,
    pub omega: usize,
    events: Vec<GateEvent>,
}

impl GateControlList {
    pub fn new(port: impl Into<String>, hyperperiod: Nanos, omega: usize) -> GateControlList {
        GateControlList {
            port: port.into(),
            hyperperiod,
            omega,
            events: Vec::new(),
        }
    }

    pub fn events(&self) -> &[GateEvent] {
        &self.events
    }

    /// Length counter: number of entries in the list.
    pub fn beta(&self) -> usize {
        self.events.len()
    }

    pub fn remaining(&self) -> usize {
        self.omega.saturating_sub(self.events.len())
    }

    fn check_well_formed(&self, ev: &GateEvent) -> Result<(), GclError> {
        if ev.queue >= QUEUES_PER_BRIDGE || ev.queue == QUEUE_BE {
            return Err(GclError::Malformed(format!(
                "queue {} is not a scheduled queue",
                ev.queue
            )));
        }
        if ev.open < 0 || ev.open >= ev.close || ev.close > self.hyperperiod {
            return Err(GclError::Malformed(format!(
                "window [{}, {}) outside [0, {})",
                ev.open, ev.close, self.hyperperiod
            )));
        }
        Ok(())
    }

    /// First existing event intersecting `[open, close)`.
    pub fn conflict(&self, open: Nanos, close: Nanos) -> Option<&GateEvent> {
        // events are sorted and pairwise disjoint, so closes are sorted too
        let start = self.events.partition_point(|e| e.close <= open);
        self.events[start..]
            .iter()
            .take_while(|e| e.open < close)
            .find(|e| e.overlaps(open, close))
    }

    pub fn insert(&mut self, ev: GateEvent) -> Result<(), GclError> {
        self.check_well_formed(&ev)?;
        if let Some(other) = self.conflict(ev.open, ev.close) {
            return Err(GclError::Overlap {
                port: self.port.clone(),
                open: ev.open,
                close: ev.close,
                other_open: other.open,
                other_close: other.close,
            });
        }
        if self.events.len() + 1 > self.omega {
            return Err(GclError::BudgetExceeded {
                port: self.port.clone(),
                needed: self.events.len() + 1,
                omega: self.omega,
            });
        }
        let at = self.events.partition_point(|e| e.open < ev.open);
        self.events.insert(at, ev);
        Ok(())
    }

    /// Open windows of the best-effort queue.
    pub fn be_gaps(&self) -> Vec<(Nanos, Nanos)> {
        be_gaps(&self.events, self.hyperperiod)
    }
}

/// Free-standing insert, mirroring [`GateControlList::insert`].
pub fn insert_gate_event(
    mut gcl: GateControlList,
    ev: GateEvent,
) -> Result<GateControlList, GclError> {
    gcl.insert(ev)?;
    Ok(gcl)
}

/// Complement of the union of scheduled windows within `[0, hp)`.
pub fn be_gaps(events: &[GateEvent], hyperperiod: Nanos) -> Vec<(Nanos, Nanos)> {
    let mut spans: Vec<(Nanos, Nanos)> = events.iter().map(|e| (e.open, e.close)).collect();
    spans.sort_unstable();
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for (o, c) in spans {
        if o > cursor {
            gaps.push((cursor, o.min(hyperperiod)));
        }
        cursor = cursor.max(c);
        if cursor >= hyperperiod {
            break;
        }
    }
    if cursor < hyperperiod {
        gaps.push((cursor, hyperperiod));
    }
    gaps
}

/// All gate control lists of a network, keyed by port name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GclSet {
    pub hyperperiod: Nanos,
    pub omega: usize,
    pub ports: BTreeMap<String, GateControlList>,
}

impl GclSet {
    /// Empty list on every bridge egress port of the topology.
    pub fn for_topology(topology: &Topology, hyperperiod: Nanos, omega: usize) -> GclSet {
        let ports = topology
            .egress_ports()
            .map(|l| {
                let name = l.port_name();
                (name.clone(), GateControlList::new(name, hyperperiod, omega))
            })
            .collect();
        GclSet {
            hyperperiod,
            omega,
            ports,
        }
    }

    pub fn port(&self, name: &str) -> Option<&GateControlList> {
        self.ports.get(name)
    }

    pub fn insert(&mut self, port: &str, ev: GateEvent) -> Result<(), GclError> {
        self.ports
            .get_mut(port)
            .ok_or_else(|| GclError::UnknownPort(port.to_string()))?
            .insert(ev)
    }

    /// Insert a batch atomically: on any error nothing is applied.
    pub fn insert_all(&mut self, batch: &[(String, GateEvent)]) -> Result<(), GclError> {
        let mut staged = self.clone();
        for (port, ev) in batch {
            staged.insert(port, ev.clone())?;
        }
        *self = staged;
        Ok(())
    }

    /// The binding length counter: the fullest port's entry count.
    pub fn beta(&self) -> usize {
        self.ports.values().map(|g| g.beta()).max().unwrap_or(0)
    }

    pub fn total_entries(&self) -> usize {
        self.ports.values().map(|g| g.beta()).sum()
    }
}

pub fn export_gcl<'a>(gcls: impl IntoIterator<Item = &'a GateControlList>) -> String {
    let mut rows: Vec<(&str, &GateEvent)> = gcls
        .into_iter()
        .flat_map(|g| g.events.iter().map(move |e| (g.port.as_str(), e)))
        .collect();
    rows.sort_by(|a, b| {
        a.0.cmp(b.0)
            .then(a.1.open.cmp(&b.1.open))
            .then(a.1.queue.cmp(&b.1.queue))
    });
    let mut out = String::from(GCL_CSV_HEADER);
    out.push('\n');
    for (port, e) in rows {
        out.push_str(&format!(
            "{port},{},{},{},{}\n",
            e.queue, e.phase, e.open, e.close
        ));
    }
    out
}

#[derive(Debug, Deserialize)]
struct GclRow {
    port: String,
    queue: u8,
    phase: usize,
    open_ns: Nanos,
    close_ns: Nanos,
}

/// Read a GCL CSV back into a set with empty lists for every port of the
/// topology. Rows naming unknown ports are rejected.
pub fn read_gcl_csv<R: Read>(
    reader: R,
    topology: &Topology,
    hyperperiod: Nanos,
    omega: usize,
) -> Result<GclSet, GclError> {
    let mut set = GclSet::for_topology(topology, hyperperiod, omega);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for (i, rec) in rdr.deserialize::<GclRow>().enumerate() {
        let line = i as u64 + 2;
        let row = rec.map_err(|e| GclError::Parse {
            line,
            msg: e.to_string(),
        })?;
        set.insert(
            &row.port,
            GateEvent::new(row.queue, row.open_ns, row.close_ns, row.phase),
        )
        .map_err(|e| GclError::Parse {
            line,
            msg: e.to_string(),
        })?;
    }
    Ok(set)
}
