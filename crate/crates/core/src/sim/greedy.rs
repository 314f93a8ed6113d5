//! Greedy bounded-staleness schedule.
//!
//! Each worker runs its tasks `(t, l)` in lexicographic order. A task may
//! start once every input channel has a delivered version inside its
//! staleness window; among all workers the task with the earliest feasible
//! start runs next (ties: lowest `(t, l, p)`), reading the newest version
//! delivered by its start. Boundary vectors ship in the background: a
//! batch from `q` reaches `p` at `end + γ·words`.

use std::collections::HashMap;

use super::staleness::{ReadKind, StalenessConfig, Version, VersionedBuffer};
use super::trace::{Kernel, Pass, ReadRecord, Trace, TraceEvent};
use super::{
    check_uniform_widths, compute_part, earliest, feature_channels, feature_window, newest_by, run_sync, task_order,
    CostParams, Topology,
};
use crate::dense::FeatureMatrix;
use crate::error::{shape_err, GnnError, Result};
use crate::graph::{Graph, Partitioning};
use crate::model::ModelSpec;

/// Bounded-staleness forward execution. The synchronous identity
/// configuration reduces to the BSP schedule of [`run_sync`].
pub fn run_async(
    g: &Graph,
    part: &Partitioning,
    x: &FeatureMatrix,
    spec: &ModelSpec,
    stale: &StalenessConfig,
    iterations: usize,
    costs: &CostParams,
) -> Result<(FeatureMatrix, Trace)> {
    stale.validate()?;
    if stale.is_synchronous() {
        return run_sync(g, part, x, spec, costs, iterations);
    }
    run_greedy(g, part, x, spec, stale, iterations, costs)
}

type ChannelKey = (usize, ReadKind, usize, usize);

/// The greedy schedule for any valid configuration, including the
/// synchronous identity (no barriers).
pub fn run_greedy(
    g: &Graph,
    part: &Partitioning,
    x: &FeatureMatrix,
    spec: &ModelSpec,
    stale: &StalenessConfig,
    iterations: usize,
    costs: &CostParams,
) -> Result<(FeatureMatrix, Trace)> {
    if !spec.model.has_local() {
        return Err(GnnError::NoLocalFormulation(spec.model.name()));
    }
    stale.validate()?;
    costs.validate()?;
    check_uniform_widths(spec, stale.max_l())?;
    if x.rows() != g.n() {
        return Err(shape_err(format!("X has {} rows for n = {}", x.rows(), g.n())));
    }
    let topo = Topology::new(g, part, spec)?;
    let np = topo.num_parts();
    let nl = spec.num_layers();
    let widths = spec.widths();
    let mut trace = Trace::new(np);
    if iterations == 0 || nl == 0 {
        return Ok((x.clone(), trace));
    }
    let total_cut: u64 = (0..np).map(|p| topo.pulled(p, 1)).sum();
    trace.words = iterations as u64 * widths[..nl].iter().map(|&k| k as u64 * total_cut).sum::<u64>();

    let channels: Vec<_> = (0..np).map(|p| feature_channels(&topo, p)).collect();
    let mut ends: HashMap<(usize, Version), f64> = HashMap::new();
    let mut next: Vec<usize> = vec![0; np];
    let mut free = vec![0.0f64; np];
    let mut last_read: HashMap<ChannelKey, Version> = HashMap::new();
    let mut buf = VersionedBuffer::new(g.n());
    let total = iterations * nl;
    let task = |idx: usize| (idx / nl, idx % nl + 1);

    let delivery = |ends: &HashMap<(usize, Version), f64>, q: usize, p: usize, v: Version| -> Option<f64> {
        let ship = if q == p {
            0.0
        } else {
            costs.gamma * (widths[v.1] * topo.cut_in[p][q]) as f64
        };
        if v.1 == 0 {
            Some(ship)
        } else {
            ends.get(&(q, v)).map(|e| e + ship)
        }
    };

    loop {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        let mut blocked = Vec::new();
        for p in 0..np {
            if next[p] == total {
                continue;
            }
            let (t, l) = task(next[p]);
            let mut start = free[p];
            let mut missing = None;
            for &(kind, q) in &channels[p] {
                let cands = feature_window((t, l), stale.bound(kind), last_read.get(&(p, kind, q, l)).copied());
                match earliest(&cands, |v| delivery(&ends, q, p, v)) {
                    Some(e) => start = start.max(e),
                    None => {
                        missing = Some((kind, q));
                        break;
                    }
                }
            }
            match missing {
                Some((kind, q)) => blocked.push(format!("worker {p} at ({t}, {l}) waits on {kind:?} from part {q}")),
                None => {
                    let cand = (start, t, l, p);
                    if best.is_none_or(|b| task_order(&cand, &b).is_lt()) {
                        best = Some(cand);
                    }
                }
            }
        }
        let Some((start, t, l, p)) = best else {
            if blocked.is_empty() {
                break;
            }
            return Err(GnnError::Deadlock(blocked.join("; ")));
        };

        let mut chosen: HashMap<(ReadKind, usize), Version> = HashMap::new();
        let mut reads = Vec::with_capacity(channels[p].len());
        for &(kind, q) in &channels[p] {
            let key = (p, kind, q, l);
            let cands = feature_window((t, l), stale.bound(kind), last_read.get(&key).copied());
            let v = newest_by(&cands, start, |v| delivery(&ends, q, p, v)).expect("feasible start");
            last_read.insert(key, v);
            chosen.insert((kind, q), v);
            reads.push(ReadRecord {
                kind,
                source_part: q,
                iter: v.0,
                layer: v.1,
            });
        }
        let row = |i: usize, v: Version| -> &[f64] {
            if v.1 == 0 {
                x.row(i)
            } else {
                buf.get(i, v).expect("read versions are retained")
            }
        };
        let self_row = |i: usize| row(i, chosen[&(ReadKind::Phi, p)]);
        let nbr_row = |_: usize, j: usize| {
            let q = topo.owner[j];
            let kind = if q == p {
                ReadKind::PsiLocal
            } else {
                ReadKind::PsiRemote
            };
            row(j, chosen[&(kind, q)])
        };
        let (outs, work) = compute_part(g, spec, &topo, l, p, self_row, nbr_row)?;
        for (&i, r) in topo.members[p].iter().zip(outs) {
            buf.insert(i, (t, l), r);
        }

        let mut clock = start;
        for (kernel, w) in [
            (Kernel::Scatter, 0),
            (Kernel::UpdateEdge, work.update_edge),
            (Kernel::Aggregate, work.aggregate),
            (Kernel::UpdateVertex, work.update_vertex),
        ] {
            let end = clock + costs.madd * w as f64;
            trace.events.push(TraceEvent {
                worker: p,
                kernel,
                part: p,
                layer: l,
                iter: t,
                start: clock,
                end,
                reads: if kernel == Kernel::Scatter {
                    std::mem::take(&mut reads)
                } else {
                    Vec::new()
                },
                pass: Pass::Forward,
            });
            clock = end;
        }
        free[p] = clock;
        ends.insert((p, (t, l)), clock);
        next[p] += 1;

        let t_min = (0..np)
            .filter(|&q| next[q] < total)
            .map(|q| task(next[q]).0)
            .min()
            .unwrap_or(iterations - 1);
        buf.retire_before(t_min.saturating_sub(stale.max_t()));
    }

    let mut out = FeatureMatrix::zeros(g.n(), widths[nl]);
    for i in 0..g.n() {
        out.row_mut(i)
            .copy_from_slice(buf.get(i, (iterations - 1, nl)).expect("final layer retained"));
    }
    Ok((out, trace))
}
