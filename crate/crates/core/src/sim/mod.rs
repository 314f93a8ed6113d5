//! Discrete-event simulation of partition-parallel execution.
//!
//! Worker `p` owns partition `p`. Time is virtual: a kernel takes
//! `madd × (multiply-adds)` time units, moving `w` words takes `γ·w`, and a
//! barrier costs `β`. Feature values are computed for real from the
//! versions each task actually read, so staleness shows up in the numbers.

mod greedy;
mod staleness;
mod sync;
mod trace;
mod training;

pub use greedy::{run_async, run_greedy};
pub use staleness::{within_bounds, GradientStaleness, ReadKind, StalenessConfig, Version, VersionedBuffer};
pub use sync::run_sync;
pub use trace::{audit, pipeline_metrics, Kernel, Metrics, Pass, ReadRecord, Trace, TraceEvent};
pub use training::{run_async_training, TrainingRun};

use serde::{Deserialize, Serialize};

use crate::error::{GnnError, Result};
use crate::graph::{Graph, Partitioning};
use crate::lc::conv_neighbors;
use crate::model::ModelSpec;

/// Virtual-time cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Time per multiply-add.
    pub madd: f64,
    /// Time per communicated word.
    pub gamma: f64,
    /// Time per global barrier.
    pub beta: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            madd: 1.0,
            gamma: 1.0,
            beta: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if [self.madd, self.gamma, self.beta]
            .iter()
            .all(|c| c.is_finite() && *c >= 0.0)
        {
            Ok(())
        } else {
            Err(GnnError::InvalidParameter(format!(
                "negative or non-finite cost in {self:?}"
            )))
        }
    }
}

/// Partition-level view of the graph shared by the engines.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub members: Vec<Vec<usize>>,
    pub owner: Vec<usize>,
    /// `conv(i)` under the model's neighborhood convention.
    pub conv: Vec<Vec<usize>>,
    /// `cut_in[p][q]`: directed edges `(i, j)` with `i ∈ p`, `j ∈ q`, `p ≠ q`.
    pub cut_in: Vec<Vec<usize>>,
    /// Partitions `q ≠ p` that `p` reads from, ascending.
    pub remote_sources: Vec<Vec<usize>>,
    /// Whether some vertex of `p` has a neighbor `j ≠ i` inside `p`.
    pub has_local: Vec<bool>,
}

impl Topology {
    pub fn new(g: &Graph, part: &Partitioning, spec: &ModelSpec) -> Result<Self> {
        if part.owners().len() != g.n() {
            return Err(GnnError::InvalidParameter(format!(
                "partitioning covers {} vertices, graph has {}",
                part.owners().len(),
                g.n()
            )));
        }
        let np = part.num_parts();
        let members: Vec<Vec<usize>> = (0..np).map(|p| part.members(p)).collect();
        let owner = part.owners().to_vec();
        let conv = (0..g.n()).map(|i| conv_neighbors(g, spec.model, i)).collect();
        let mut cut_in = vec![vec![0usize; np]; np];
        let mut has_local = vec![false; np];
        for i in 0..g.n() {
            let p = owner[i];
            for &j in g.neighbors(i) {
                if owner[j] == p {
                    has_local[p] = true;
                } else {
                    cut_in[p][owner[j]] += 1;
                }
            }
        }
        let remote_sources = cut_in
            .iter()
            .map(|row| (0..np).filter(|&q| row[q] > 0).collect())
            .collect();
        Ok(Self {
            members,
            owner,
            conv,
            cut_in,
            remote_sources,
            has_local,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.members.len()
    }

    /// Words `p` pulls per layer of width `k`.
    pub fn pulled(&self, p: usize, k: usize) -> u64 {
        (k * self.cut_in[p].iter().sum::<usize>()) as u64
    }
}

/// Layer-gap reads substitute `H^{(l')}` for `H^{(l-1)}`, which needs one
/// width throughout.
pub(crate) fn check_uniform_widths(spec: &ModelSpec, max_l: usize) -> Result<()> {
    let w = spec.widths();
    if max_l > 1 && w.windows(2).any(|p| p[0] != p[1]) {
        return Err(GnnError::InvalidStaleness(format!(
            "layer bounds > 1 need uniform widths, got {w:?}"
        )));
    }
    Ok(())
}

/// Computes layer `l` (1-based) for every vertex of partition `p` from the
/// rows returned by `self_row(i)` and `nbr_row(i, j)`.
pub(crate) fn compute_part<'a, S, N>(
    g: &Graph,
    spec: &ModelSpec,
    topo: &Topology,
    l: usize,
    p: usize,
    self_row: S,
    nbr_row: N,
) -> Result<(Vec<Vec<f64>>, crate::cost::KernelTally)>
where
    S: Fn(usize) -> &'a [f64],
    N: Fn(usize, usize) -> &'a [f64],
{
    let mut outs = Vec::with_capacity(topo.members[p].len());
    let mut work = crate::cost::KernelTally::default();
    for &i in &topo.members[p] {
        let hi = self_row(i);
        let nbrs: Vec<(usize, &[f64])> = topo.conv[i]
            .iter()
            .map(|&j| (j, if j == i { hi } else { nbr_row(i, j) }))
            .collect();
        outs.push(crate::lc::compute_vertex(g, spec, l - 1, i, hi, &nbrs)?);
        work.add(&crate::lc::vertex_cost(spec, l - 1, nbrs.len()).0);
    }
    Ok((outs, work))
}

/// Read channels of partition `p` for a feature task at `(t, l)`, each
/// paired with the source partition.
pub(crate) fn feature_channels(topo: &Topology, p: usize) -> Vec<(ReadKind, usize)> {
    if topo.members[p].is_empty() {
        return Vec::new();
    }
    let mut ch = vec![(ReadKind::Phi, p)];
    if topo.has_local[p] {
        ch.push((ReadKind::PsiLocal, p));
    }
    ch.extend(topo.remote_sources[p].iter().map(|&q| (ReadKind::PsiRemote, q)));
    ch
}

/// Versions a feature read for `at` may use under `bound`, not older than
/// `floor`, newest first.
pub(crate) fn feature_window(at: Version, bound: (usize, usize), floor: Option<Version>) -> Vec<Version> {
    let (t, l) = at;
    let (bt, bl) = bound;
    let mut v: Vec<Version> = (t.saturating_sub(bt)..=t)
        .flat_map(|ti| (l.saturating_sub(bl)..l).map(move |li| (ti, li)))
        .filter(|v| floor.is_none_or(|f| *v >= f))
        .collect();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

/// Earliest time any candidate is delivered, and the newest candidate
/// delivered by `start`.
pub(crate) fn earliest<F>(cands: &[Version], delivery: F) -> Option<f64>
where
    F: Fn(Version) -> Option<f64>,
{
    cands.iter().filter_map(|&v| delivery(v)).reduce(f64::min)
}

pub(crate) fn newest_by<F>(cands: &[Version], start: f64, delivery: F) -> Option<Version>
where
    F: Fn(Version) -> Option<f64>,
{
    cands.iter().copied().find(|&v| delivery(v).is_some_and(|d| d <= start))
}

/// Total order on candidate task starts: time, then `(t, l, p)`.
pub(crate) fn task_order(a: &(f64, usize, usize, usize), b: &(f64, usize, usize, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3)))
}
