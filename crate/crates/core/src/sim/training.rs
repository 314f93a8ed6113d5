//! Greedy partition-parallel GCN training with stale features and stale
//! gradients.
//!
//! Worker `p` runs, per iteration `t`, forward tasks `F(t,1..L)` then
//! backward tasks `B(t,L..1)`. `B(t,l)` turns the upstream gradient of
//! each owned vertex into `∇W_l` partial sums and into per-vertex messages
//! `G_i = dZ_i W_lᵀ` that neighbors gather for `∇h^{(t,l-1)}`. Weights are
//! reduced after the last `B(t,l)` of all partitions; `F(t+1,l)` waits for
//! that reduction (`γ·|W_l|` when `P > 1`).

use std::collections::HashMap;

use super::staleness::{GradientStaleness, ReadKind, StalenessConfig, Version, VersionedBuffer};
use super::trace::{Kernel, Pass, ReadRecord, Trace, TraceEvent};
use super::{
    check_uniform_widths, earliest, feature_channels, feature_window, newest_by, task_order, CostParams, Topology,
};
use crate::cost::KernelTally;
use crate::dense::{vec_mat, DenseMatrix, FeatureMatrix};
use crate::error::{shape_err, GnnError, Result};
use crate::graph::{Graph, Partitioning};
use crate::lc::vertex_cost;
use crate::model::ModelSpec;
use crate::trainer::{accuracy, init_gcn, softmax_xent, EpochRecord, Labels, TrainConfig};

/// Result of [`run_async_training`].
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub spec: ModelSpec,
    pub curve: Vec<EpochRecord>,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Forward(usize, usize),
    Backward(usize, usize),
}

/// Gradient versions `(t', l+1)` admissible for `B(t, l)`, newest first.
fn grad_window(t: usize, l: usize, bt: usize, floor: Option<Version>) -> Vec<Version> {
    (t.saturating_sub(bt)..=t)
        .rev()
        .map(|ti| (ti, l + 1))
        .filter(|v| floor.is_none_or(|f| *v >= f))
        .collect()
}

fn outer_add(acc: &mut DenseMatrix, a: &[f64], b: &[f64]) {
    for (r, &ar) in a.iter().enumerate() {
        acc.row_mut(r).iter_mut().zip(b).for_each(|(o, bv)| *o += ar * bv);
    }
}

struct State<'a> {
    g: &'a Graph,
    topo: Topology,
    widths: Vec<usize>,
    costs: CostParams,
    /// Forward end times per `(part, version)`; backward likewise.
    fends: HashMap<(usize, Version), f64>,
    bends: HashMap<(usize, Version), f64>,
    /// Time `W_l` for iteration `t` becomes visible, keyed `(t, l)`.
    weights_ready: HashMap<Version, f64>,
}

impl State<'_> {
    fn coeff(&self, i: usize, j: usize) -> f64 {
        1.0 / (((self.g.degree(i) + 1) * (self.g.degree(j) + 1)) as f64).sqrt()
    }

    fn ship(&self, q: usize, p: usize, width: usize) -> f64 {
        if q == p {
            0.0
        } else {
            self.costs.gamma * (width * self.topo.cut_in[p][q]) as f64
        }
    }

    fn feature_delivery(&self, q: usize, p: usize, v: Version) -> Option<f64> {
        let s = self.ship(q, p, self.widths[v.1]);
        if v.1 == 0 {
            Some(s)
        } else {
            self.fends.get(&(q, v)).map(|e| e + s)
        }
    }

    /// Messages of layer `l+1` carry width `k_l`.
    fn grad_delivery(&self, q: usize, p: usize, v: Version) -> Option<f64> {
        self.bends
            .get(&(q, v))
            .map(|e| e + self.ship(q, p, self.widths[v.1 - 1]))
    }
}

/// Trains a GCN on `P` simulated workers. With both configurations at
/// their synchronous identity the loss curve matches
/// [`crate::trainer::train_full_batch`].
#[allow(clippy::too_many_arguments)]
pub fn run_async_training(
    g: &Graph,
    part: &Partitioning,
    x: &FeatureMatrix,
    labels: &Labels,
    stale: &StalenessConfig,
    grad: &GradientStaleness,
    cfg: &TrainConfig,
    costs: &CostParams,
) -> Result<TrainingRun> {
    stale.validate()?;
    grad.validate()?;
    costs.validate()?;
    let mut spec = init_gcn(&cfg.widths, cfg.seed)?;
    check_uniform_widths(&spec, stale.max_l())?;
    if x.rows() != g.n() || x.cols() != cfg.widths[0] {
        return Err(shape_err(format!(
            "X is {}x{}, expected {}x{}",
            x.rows(),
            x.cols(),
            g.n(),
            cfg.widths[0]
        )));
    }
    let nl = spec.num_layers();
    let mut st = State {
        g,
        topo: Topology::new(g, part, &spec)?,
        widths: spec.widths(),
        costs: *costs,
        fends: HashMap::new(),
        bends: HashMap::new(),
        weights_ready: HashMap::new(),
    };
    let np = st.topo.num_parts();
    let mut trace = Trace::new(np);
    let mut curve = Vec::with_capacity(cfg.epochs);
    if nl == 0 || cfg.epochs == 0 {
        return Ok(TrainingRun { spec, curve, trace });
    }
    for l in 1..=nl {
        st.weights_ready.insert((0, l), 0.0);
    }
    let per_iter = 2 * nl;
    let total = cfg.epochs * per_iter;
    let task = |idx: usize| {
        let (t, r) = (idx / per_iter, idx % per_iter);
        if r < nl {
            Task::Forward(t, r + 1)
        } else {
            Task::Backward(t, per_iter - r)
        }
    };
    let fchannels: Vec<_> = (0..np).map(|p| feature_channels(&st.topo, p)).collect();
    let gchannels: Vec<Vec<(ReadKind, usize)>> = (0..np)
        .map(|p| {
            if st.topo.members[p].is_empty() {
                return Vec::new();
            }
            std::iter::once((ReadKind::GradLocal, p))
                .chain(st.topo.remote_sources[p].iter().map(|&q| (ReadKind::GradRemote, q)))
                .collect()
        })
        .collect();

    let mut fbuf = VersionedBuffer::new(g.n());
    let mut gbuf = VersionedBuffer::new(g.n());
    let mut aggs = vec![DenseMatrix::zeros(0, 0); nl + 1];
    let mut zs = vec![DenseMatrix::zeros(0, 0); nl + 1];
    for l in 1..=nl {
        aggs[l] = DenseMatrix::zeros(g.n(), st.widths[l - 1]);
        zs[l] = DenseMatrix::zeros(g.n(), st.widths[l]);
    }
    let mut output = DenseMatrix::zeros(g.n(), st.widths[nl]);
    let mut forward_done = 0usize;
    let mut partials: Vec<Vec<DenseMatrix>> = (0..=nl)
        .map(|l| {
            let shape = if l == 0 {
                (0, 0)
            } else {
                (st.widths[l - 1], st.widths[l])
            };
            vec![DenseMatrix::zeros(shape.0, shape.1); np]
        })
        .collect();
    let mut backward_done = vec![0usize; nl + 1];
    let mut last_read: HashMap<(usize, ReadKind, usize, usize, bool), Version> = HashMap::new();
    let mut next = vec![0usize; np];
    let mut free = vec![0.0f64; np];
    let dy_scale = 1.0 / labels.len().max(1) as f64;
    if labels.is_empty() {
        return Err(GnnError::EmptyLabels);
    }
    let mut class_of = vec![None; g.n()];
    for (v, c) in labels.iter() {
        class_of[v] = Some(c);
    }

    loop {
        let mut best: Option<(f64, usize, usize, usize)> = None;
        let mut blocked = Vec::new();
        for p in 0..np {
            if next[p] == total {
                continue;
            }
            let mut start = free[p];
            let mut missing: Option<String> = None;
            match task(next[p]) {
                Task::Forward(t, l) => {
                    match st.weights_ready.get(&(t, l)) {
                        Some(&w) => start = start.max(w),
                        None => missing = Some(format!("weights of layer {l}")),
                    }
                    for &(kind, q) in &fchannels[p] {
                        if missing.is_some() {
                            break;
                        }
                        let cands = feature_window(
                            (t, l),
                            stale.bound(kind),
                            last_read.get(&(p, kind, q, l, true)).copied(),
                        );
                        match earliest(&cands, |v| st.feature_delivery(q, p, v)) {
                            Some(e) => start = start.max(e),
                            None => missing = Some(format!("{kind:?} from part {q}")),
                        }
                    }
                }
                Task::Backward(t, l) if l < nl => {
                    for &(kind, q) in &gchannels[p] {
                        let cands = grad_window(
                            t,
                            l,
                            grad.bound(kind).0,
                            last_read.get(&(p, kind, q, l, false)).copied(),
                        );
                        match earliest(&cands, |v| st.grad_delivery(q, p, v)) {
                            Some(e) => start = start.max(e),
                            None => {
                                missing = Some(format!("{kind:?} from part {q}"));
                                break;
                            }
                        }
                    }
                }
                Task::Backward(..) => {}
            }
            if let Some(m) = missing {
                blocked.push(format!("worker {p} task {:?} waits on {m}", task(next[p])));
                continue;
            }
            let cand = (start, next[p] / per_iter, next[p] % per_iter, p);
            if best.is_none_or(|b| task_order(&cand, &b).is_lt()) {
                best = Some(cand);
            }
        }
        let Some((start, _, _, p)) = best else {
            if blocked.is_empty() {
                break;
            }
            return Err(GnnError::Deadlock(blocked.join("; ")));
        };

        let mut reads = Vec::new();
        let mut work = KernelTally::default();
        let (pass, t, l) = match task(next[p]) {
            Task::Forward(t, l) => {
                let mut chosen: HashMap<(ReadKind, usize), Version> = HashMap::new();
                for &(kind, q) in &fchannels[p] {
                    let key = (p, kind, q, l, true);
                    let cands = feature_window((t, l), stale.bound(kind), last_read.get(&key).copied());
                    let v = newest_by(&cands, start, |v| st.feature_delivery(q, p, v)).expect("feasible");
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
                        fbuf.get(i, v).expect("read versions are retained")
                    }
                };
                let w = &spec.layers[l - 1];
                let mut produced = Vec::with_capacity(st.topo.members[p].len());
                for &i in &st.topo.members[p] {
                    let mut agg = vec![0.0; st.widths[l - 1]];
                    for &j in &st.topo.conv[i] {
                        let q = st.topo.owner[j];
                        let kind = if j == i {
                            ReadKind::Phi
                        } else if q == p {
                            ReadKind::PsiLocal
                        } else {
                            ReadKind::PsiRemote
                        };
                        let c = st.coeff(i, j);
                        agg.iter_mut()
                            .zip(row(j, chosen[&(kind, q)]))
                            .for_each(|(a, h)| *a += c * h);
                    }
                    let z = vec_mat(&agg, &w.weight)?;
                    let h: Vec<f64> = z.iter().map(|v| w.activation.apply(*v)).collect();
                    aggs[l].row_mut(i).copy_from_slice(&agg);
                    zs[l].row_mut(i).copy_from_slice(&z);
                    if l == nl {
                        output.row_mut(i).copy_from_slice(&h);
                    }
                    produced.push((i, h));
                    work.add(&vertex_cost(&spec, l - 1, st.topo.conv[i].len()).0);
                }
                for (i, h) in produced {
                    fbuf.insert(i, (t, l), h);
                }
                (Pass::Forward, t, l)
            }
            Task::Backward(t, l) => {
                let mut chosen: HashMap<(ReadKind, usize), Version> = HashMap::new();
                if l < nl {
                    for &(kind, q) in &gchannels[p] {
                        let key = (p, kind, q, l, false);
                        let cands = grad_window(t, l, grad.bound(kind).0, last_read.get(&key).copied());
                        let v = newest_by(&cands, start, |v| st.grad_delivery(q, p, v)).expect("feasible");
                        last_read.insert(key, v);
                        chosen.insert((kind, q), v);
                        reads.push(ReadRecord {
                            kind,
                            source_part: q,
                            iter: v.0,
                            layer: v.1,
                        });
                    }
                }
                let (kin, kout) = (st.widths[l - 1], st.widths[l]);
                let w = &spec.layers[l - 1];
                let mut messages = Vec::new();
                for &i in &st.topo.members[p] {
                    let dh: Vec<f64> = if l == nl {
                        let mut g = vec![0.0; kout];
                        if let Some(c) = class_of[i] {
                            let row = output.row(i);
                            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            let lse = mx + row.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
                            for (j, z) in row.iter().enumerate() {
                                g[j] = ((z - lse).exp() - if j == c { 1.0 } else { 0.0 }) * dy_scale;
                            }
                        }
                        g
                    } else {
                        let mut g = vec![0.0; kout];
                        for &k in &st.topo.conv[i] {
                            let q = st.topo.owner[k];
                            let kind = if q == p {
                                ReadKind::GradLocal
                            } else {
                                ReadKind::GradRemote
                            };
                            let msg = gbuf.get(k, chosen[&(kind, q)]).expect("read versions are retained");
                            let c = st.coeff(k, i);
                            g.iter_mut().zip(msg).for_each(|(a, m)| *a += c * m);
                        }
                        work.update_edge += (st.topo.conv[i].len() * kout) as u64;
                        g
                    };
                    let dz: Vec<f64> = dh
                        .iter()
                        .zip(zs[l].row(i))
                        .map(|(d, z)| d * w.activation.derivative(*z))
                        .collect();
                    outer_add(&mut partials[l][p], aggs[l].row(i), &dz);
                    work.update_vertex += (kout + kin * kout) as u64;
                    if l > 1 {
                        let msg: Vec<f64> = (0..kin).map(|r| crate::dense::dot(w.weight.row(r), &dz)).collect();
                        work.update_vertex += (kin * kout) as u64;
                        messages.push((i, msg));
                    }
                }
                for (i, m) in messages {
                    gbuf.insert(i, (t, l), m);
                }
                (Pass::Backward, t, l)
            }
        };

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
                pass,
            });
            clock = end;
        }
        free[p] = clock;
        next[p] += 1;

        match pass {
            Pass::Forward => {
                st.fends.insert((p, (t, l)), clock);
                if l < nl {
                    trace.words += (0..np).map(|r| st.topo.cut_in[r][p] * st.widths[l]).sum::<usize>() as u64;
                }
                if l == 1 {
                    trace.words += (0..np).map(|r| st.topo.cut_in[r][p] * st.widths[0]).sum::<usize>() as u64;
                }
                if l == nl {
                    forward_done += 1;
                    if forward_done == np {
                        forward_done = 0;
                        let (loss, _) = softmax_xent(&output, labels)?;
                        curve.push(EpochRecord {
                            epoch: t,
                            loss,
                            train_acc: accuracy(&output, labels),
                        });
                    }
                }
            }
            Pass::Backward => {
                st.bends.insert((p, (t, l)), clock);
                if l > 1 {
                    trace.words += (0..np).map(|r| st.topo.cut_in[r][p] * st.widths[l - 1]).sum::<usize>() as u64;
                }
                backward_done[l] += 1;
                if backward_done[l] == np {
                    backward_done[l] = 0;
                    let shape = (st.widths[l - 1], st.widths[l]);
                    let mut grad_w = DenseMatrix::zeros(shape.0, shape.1);
                    for part_grad in &mut partials[l] {
                        grad_w.axpy(1.0, part_grad)?;
                        *part_grad = DenseMatrix::zeros(shape.0, shape.1);
                    }
                    spec.layers[l - 1].weight.axpy(-cfg.lr, &grad_w)?;
                    let reduce = if np > 1 {
                        costs.gamma * (shape.0 * shape.1) as f64
                    } else {
                        0.0
                    };
                    let last = (0..np).map(|q| st.bends[&(q, (t, l))]).fold(0.0, f64::max);
                    st.weights_ready.insert((t + 1, l), last + reduce);
                }
            }
        }

        let t_min = (0..np)
            .filter(|&q| next[q] < total)
            .map(|q| next[q] / per_iter)
            .min()
            .unwrap_or(cfg.epochs);
        fbuf.retire_before(t_min.saturating_sub(stale.max_t()));
        gbuf.retire_before(t_min.saturating_sub(grad.t_local.max(grad.t_remote)));
    }
    Ok(TrainingRun { spec, curve, trace })
}
