//! Bulk-synchronous schedule: four kernel phases per layer, each closed
//! by a global barrier.

use super::trace::{Kernel, Pass, ReadRecord, Trace, TraceEvent};
use super::{compute_part, feature_channels, CostParams, Topology};
use crate::dense::FeatureMatrix;
use crate::error::{shape_err, GnnError, Result};
use crate::graph::{Graph, Partitioning};
use crate::model::ModelSpec;

/// Runs `iterations` forward passes in lock step.
pub fn run_sync(
    g: &Graph,
    part: &Partitioning,
    x: &FeatureMatrix,
    spec: &ModelSpec,
    costs: &CostParams,
    iterations: usize,
) -> Result<(FeatureMatrix, Trace)> {
    if !spec.model.has_local() {
        return Err(GnnError::NoLocalFormulation(spec.model.name()));
    }
    costs.validate()?;
    if x.rows() != g.n() {
        return Err(shape_err(format!("X has {} rows for n = {}", x.rows(), g.n())));
    }
    let topo = Topology::new(g, part, spec)?;
    let np = topo.num_parts();
    let widths = spec.widths();
    let mut trace = Trace::new(np);
    let mut now = 0.0;
    let mut out = x.clone();
    for t in 0..iterations {
        let mut h = x.clone();
        for l in 1..=spec.num_layers() {
            let kin = widths[l - 1];
            let phase = |trace: &mut Trace,
                         now: &mut f64,
                         kernel: Kernel,
                         dur: &dyn Fn(usize) -> f64,
                         reads: &dyn Fn(usize) -> Vec<ReadRecord>| {
                let mut end = *now;
                for p in 0..np {
                    let d = dur(p);
                    trace.events.push(TraceEvent {
                        worker: p,
                        kernel,
                        part: p,
                        layer: l,
                        iter: t,
                        start: *now,
                        end: *now + d,
                        reads: reads(p),
                        pass: Pass::Forward,
                    });
                    end = f64::max(end, *now + d);
                }
                *now = end + costs.beta;
                trace.barriers.push(*now);
            };
            let reads = |p: usize| {
                feature_channels(&topo, p)
                    .into_iter()
                    .map(|(kind, q)| ReadRecord {
                        kind,
                        source_part: q,
                        iter: t,
                        layer: l - 1,
                    })
                    .collect()
            };
            phase(
                &mut trace,
                &mut now,
                Kernel::Scatter,
                &|p| costs.gamma * topo.pulled(p, kin) as f64,
                &reads,
            );
            trace.words += (0..np).map(|p| topo.pulled(p, kin)).sum::<u64>();

            let mut next = FeatureMatrix::zeros(g.n(), widths[l]);
            let mut work = Vec::with_capacity(np);
            for p in 0..np {
                let (rows, w) = compute_part(g, spec, &topo, l, p, |i| h.row(i), |_, j| h.row(j))?;
                for (&i, r) in topo.members[p].iter().zip(rows) {
                    next.row_mut(i).copy_from_slice(&r);
                }
                work.push(w);
            }
            let none = |_: usize| Vec::new();
            phase(
                &mut trace,
                &mut now,
                Kernel::UpdateEdge,
                &|p| costs.madd * work[p].update_edge as f64,
                &none,
            );
            phase(
                &mut trace,
                &mut now,
                Kernel::Aggregate,
                &|p| costs.madd * work[p].aggregate as f64,
                &none,
            );
            phase(
                &mut trace,
                &mut now,
                Kernel::UpdateVertex,
                &|p| costs.madd * work[p].update_vertex as f64,
                &none,
            );
            h = next;
        }
        if t + 1 == iterations {
            out = h;
        }
    }
    Ok((out, trace))
}
