//! Event traces, derived metrics and the staleness audit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::staleness::{within_bounds, GradientStaleness, ReadKind, StalenessConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Scatter,
    UpdateEdge,
    Aggregate,
    UpdateVertex,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Scatter,
        Kernel::UpdateEdge,
        Kernel::Aggregate,
        Kernel::UpdateVertex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Scatter => "scatter",
            Kernel::UpdateEdge => "update_edge",
            Kernel::Aggregate => "aggregate",
            Kernel::UpdateVertex => "update_vertex",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    #[default]
    Forward,
    Backward,
}

/// One input channel of a task: every vertex of `source_part` read at
/// version `(iter, layer)` for the term `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadRecord {
    pub kind: ReadKind,
    pub source_part: usize,
    pub iter: usize,
    pub layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub worker: usize,
    pub kernel: Kernel,
    pub part: usize,
    pub layer: usize,
    pub iter: usize,
    pub start: f64,
    pub end: f64,
    pub reads: Vec<ReadRecord>,
    pub pass: Pass,
}

/// Everything a run did, in issue order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub workers: usize,
    pub events: Vec<TraceEvent>,
    /// Release times of global barriers.
    pub barriers: Vec<f64>,
    pub words: u64,
}

impl Trace {
    pub fn new(workers: usize) -> Self {
        Self {
            workers,
            ..Self::default()
        }
    }

    /// One JSON object per event.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("plain data"));
            s.push('\n');
        }
        s
    }

    pub fn makespan(&self) -> f64 {
        let ev = self.events.iter().map(|e| e.end).fold(0.0, f64::max);
        self.barriers.iter().copied().fold(ev, f64::max)
    }

    /// Every read with the version of the event it fed.
    pub fn reads(&self) -> impl Iterator<Item = (&TraceEvent, &ReadRecord)> {
        self.events.iter().flat_map(|e| e.reads.iter().map(move |r| (e, r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub makespan: f64,
    /// Busy time over `workers · makespan`.
    pub utilization: f64,
    pub worker_utilization: Vec<f64>,
    pub barriers: usize,
    pub words: u64,
    /// Fraction of busy time per kernel.
    pub kernel_share: BTreeMap<String, f64>,
}

pub fn pipeline_metrics(trace: &Trace) -> Metrics {
    let makespan = trace.makespan();
    let mut busy = vec![0.0; trace.workers];
    let mut per_kernel: BTreeMap<String, f64> = Kernel::ALL.iter().map(|k| (k.name().to_string(), 0.0)).collect();
    for e in &trace.events {
        let d = e.end - e.start;
        busy[e.worker] += d;
        *per_kernel.get_mut(e.kernel.name()).expect("all kernels present") += d;
    }
    let total: f64 = busy.iter().sum();
    let frac = |x: f64, of: f64| if of > 0.0 { x / of } else { 0.0 };
    Metrics {
        makespan,
        utilization: frac(total, trace.workers as f64 * makespan),
        worker_utilization: busy.iter().map(|b| frac(*b, makespan)).collect(),
        barriers: trace.barriers.len(),
        words: trace.words,
        kernel_share: per_kernel.into_iter().map(|(k, v)| (k, frac(v, total))).collect(),
    }
}

/// Describes every read outside its bound; empty when the trace is clean.
pub fn audit(trace: &Trace, stale: &StalenessConfig, grad: &GradientStaleness) -> Vec<String> {
    let mut bad = Vec::new();
    for (e, r) in trace.reads() {
        let ok = match r.kind {
            ReadKind::GradLocal | ReadKind::GradRemote => {
                let (bt, bl) = grad.bound(r.kind);
                r.iter <= e.iter && e.iter - r.iter <= bt && r.layer > e.layer && r.layer - e.layer <= bl
            }
            kind => within_bounds((e.iter, e.layer), (r.iter, r.layer), stale.bound(kind)),
        };
        if !ok {
            bad.push(format!(
                "worker {} computing ({}, {}) read {:?} version ({}, {}) of part {}",
                e.worker, e.iter, e.layer, r.kind, r.iter, r.layer, r.source_part
            ));
        }
    }
    bad
}
