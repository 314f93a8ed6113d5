//! Local formulation: `h_i' = φ(h_i, ⊕_{j ∈ conv(i)} ψ(h_i, h_j))`.
//!
//! Each layer runs the four SAGA kernels per vertex. Scatter only moves
//! data (counted by the communication meter), UpdateEdge evaluates ψ,
//! Aggregate folds the ψ outputs in ascending neighbor order, and
//! UpdateVertex evaluates φ followed by σ.

use crate::cost::{ceil_log2, KernelTally};
use crate::dense::{dot, vec_mat, vec_mat_into, FeatureMatrix};
use crate::error::{shape_err, GnnError, Result};
use crate::exec::{map_indices, ExecMode};
use crate::graph::Graph;
use crate::model::{sigmoid, LayerParams, ModelId, ModelSpec, Neighborhood, Reducer};

/// Negative slope of the GAT logit nonlinearity.
pub const GAT_LEAKY_SLOPE: f64 = 0.2;

/// Side information for ψ.
#[derive(Debug, Clone, Default)]
pub struct PsiContext<'a> {
    /// `d̃_i = d_i + 1` and `d̃_j`, read by gcn.
    pub tilde_deg_i: Option<f64>,
    pub tilde_deg_j: Option<f64>,
    /// Feature rows of the full `N̂(i)`, read by gat for its softmax
    /// denominator.
    pub neighborhood: Option<Vec<&'a [f64]>>,
}

/// Output of one layer plus its kernel-level work and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub features: FeatureMatrix,
    /// Multiply-adds per kernel, summed over vertices.
    pub kernel_trace: KernelTally,
    /// Per-kernel depth of the critical vertex.
    pub depth: KernelTally,
}

fn check_width(v: &[f64], k: usize, what: &str) -> Result<()> {
    if v.len() != k {
        return Err(shape_err(format!("{what} has width {} (expected {k})", v.len())));
    }
    Ok(())
}

fn layer(spec: &ModelSpec, l: usize) -> Result<&LayerParams> {
    spec.layers
        .get(l)
        .ok_or_else(|| shape_err(format!("layer {l} of {}", spec.layers.len())))
}

#[inline]
fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        GAT_LEAKY_SLOPE * x
    }
}

fn gat_logit(p: &LayerParams, zi: &[f64], zj: &[f64]) -> f64 {
    let a = p.attention.as_deref().expect("validated");
    let (ai, aj) = a.split_at(zi.len());
    leaky(dot(ai, zi) + dot(aj, zj))
}

/// Softmax weights of `logits` with max subtraction.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

fn monet_weight(p: &LayerParams, hj: &[f64]) -> f64 {
    let mean = p.kernel_mean.as_deref().expect("validated");
    let inv = p.kernel_inv_cov.as_ref().expect("validated");
    let diff: Vec<f64> = hj.iter().zip(mean).map(|(h, w)| h - w).collect();
    let mut t = vec![0.0; diff.len()];
    vec_mat_into(&diff, inv, &mut t);
    (-0.5 * dot(&t, &diff)).exp()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// The per-edge function ψ of layer `l`.
pub fn eval_psi(spec: &ModelSpec, l: usize, hi: &[f64], hj: &[f64], ctx: &PsiContext<'_>) -> Result<Vec<f64>> {
    let model = spec.model;
    if !model.has_local() {
        return Err(GnnError::NoLocalFormulation(model.name()));
    }
    let p = layer(spec, l)?;
    let k = p.in_width(model);
    check_width(hi, k, "h_i")?;
    check_width(hj, k, "h_j")?;
    Ok(match model {
        ModelId::Gcn => {
            let (di, dj) = ctx
                .tilde_deg_i
                .zip(ctx.tilde_deg_j)
                .ok_or(GnnError::MissingContext("gcn degree coefficients"))?;
            let c = 1.0 / (di * dj).sqrt();
            hj.iter().map(|v| c * v).collect()
        }
        ModelId::SageMean | ModelId::Gin | ModelId::Commnet => hj.to_vec(),
        ModelId::VanillaAttn => {
            let s = dot(hi, hj);
            hj.iter().map(|v| s * v).collect()
        }
        ModelId::AgnnCosine => {
            let s = p.cosine_scale.expect("validated") * cosine(hi, hj);
            hj.iter().map(|v| s * v).collect()
        }
        ModelId::Monet => {
            let g = monet_weight(p, hj);
            hj.iter().map(|v| g * v).collect()
        }
        ModelId::Gat => {
            let nbhd = ctx
                .neighborhood
                .as_ref()
                .ok_or(GnnError::MissingContext("gat neighborhood"))?;
            let zi = vec_mat(hi, &p.weight)?;
            let zj = vec_mat(hj, &p.weight)?;
            let ej = gat_logit(p, &zi, &zj);
            let mut logits = Vec::with_capacity(nbhd.len());
            for hy in nbhd {
                check_width(hy, k, "h_y")?;
                logits.push(gat_logit(p, &zi, &vec_mat(hy, &p.weight)?));
            }
            let mx = logits.iter().copied().fold(ej, f64::max);
            let denom: f64 = logits.iter().map(|e| (e - mx).exp()).sum();
            let alpha = (ej - mx).exp() / denom;
            hj.iter().map(|v| alpha * v).collect()
        }
        ModelId::Ggcn => {
            let gi = vec_mat(hi, p.gate_self.as_ref().expect("validated"))?;
            let gj = vec_mat(hj, p.gate_neighbor.as_ref().expect("validated"))?;
            gi.iter()
                .zip(&gj)
                .zip(hj)
                .map(|((a, b), h)| sigmoid(a + b) * h)
                .collect()
        }
        ModelId::SagePool => {
            let mut z = vec_mat(hj, p.pool_weight.as_ref().expect("validated"))?;
            let bias = p.bias.as_deref().expect("validated");
            z.iter_mut().zip(bias).for_each(|(x, b)| *x = (*x + b).max(0.0));
            z
        }
        ModelId::Edgeconv1 => vec_mat(hj, &p.weight)?,
        ModelId::Edgeconv5 => {
            let diff: Vec<f64> = hj.iter().zip(hi).map(|(a, b)| a - b).collect();
            let mut z = vec_mat(&diff, &p.weight)?;
            let s = vec_mat(hi, p.self_weight.as_ref().expect("validated"))?;
            z.iter_mut().zip(&s).for_each(|(x, y)| *x = (*x + y).max(0.0));
            z
        }
        _ => unreachable!("has_local checked"),
    })
}

/// Elementwise reduction in input order. The empty reduction is the zero
/// vector for every reducer; mean divides by `max(1, count)`.
pub fn aggregate(reducer: Reducer, inputs: &[Vec<f64>], width: usize) -> Result<Vec<f64>> {
    for v in inputs {
        check_width(v, width, "aggregate input")?;
    }
    let mut acc = vec![0.0; width];
    match reducer {
        Reducer::Sum | Reducer::Mean => {
            for v in inputs {
                add_into(&mut acc, v);
            }
            if reducer == Reducer::Mean {
                let c = inputs.len().max(1) as f64;
                acc.iter_mut().for_each(|x| *x /= c);
            }
        }
        Reducer::Max => {
            if let Some((first, rest)) = inputs.split_first() {
                acc.copy_from_slice(first);
                for v in rest {
                    acc.iter_mut().zip(v).for_each(|(a, b)| *a = a.max(*b));
                }
            }
        }
    }
    Ok(acc)
}

/// Width of ψ's output (and of the aggregate) for layer `p`.
fn message_width(model: ModelId, p: &LayerParams) -> usize {
    match model {
        ModelId::Edgeconv1 | ModelId::Edgeconv5 => p.out_width(model),
        _ => p.in_width(model),
    }
}

/// The per-vertex function φ followed by the layer activation.
pub fn eval_phi(spec: &ModelSpec, l: usize, hi: &[f64], agg: &[f64]) -> Result<Vec<f64>> {
    let model = spec.model;
    if !model.has_local() {
        return Err(GnnError::NoLocalFormulation(model.name()));
    }
    let p = layer(spec, l)?;
    check_width(hi, p.in_width(model), "h_i")?;
    check_width(agg, message_width(model, p), "aggregate")?;
    let mut out = match model {
        ModelId::Gcn
        | ModelId::SageMean
        | ModelId::VanillaAttn
        | ModelId::Gat
        | ModelId::AgnnCosine
        | ModelId::Monet
        | ModelId::Ggcn => vec_mat(agg, &p.weight)?,
        ModelId::Gin => {
            let eps = spec.hyper.epsilon;
            let mut x: Vec<f64> = hi.iter().zip(agg).map(|(h, a)| (1.0 + eps) * h + a).collect();
            for (d, w) in p.mlp.iter().enumerate() {
                x = vec_mat(&x, w)?;
                if d + 1 < p.mlp.len() {
                    x.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            x
        }
        ModelId::Commnet => {
            let mut a = vec_mat(hi, p.self_weight.as_ref().expect("validated"))?;
            add_into(&mut a, &vec_mat(agg, &p.weight)?);
            a
        }
        ModelId::SagePool => {
            let cat: Vec<f64> = hi.iter().chain(agg).copied().collect();
            vec_mat(&cat, &p.weight)?
        }
        ModelId::Edgeconv1 | ModelId::Edgeconv5 => agg.to_vec(),
        _ => unreachable!("has_local checked"),
    };
    out.iter_mut().for_each(|v| *v = p.activation.apply(*v));
    Ok(out)
}

/// `conv(i)` in ascending order, as dictated by the model's neighborhood.
pub fn conv_neighbors(g: &Graph, model: ModelId, i: usize) -> Vec<usize> {
    let nb = g.neighbors(i);
    match model.neighborhood() {
        Neighborhood::N | Neighborhood::NPlus => nb.to_vec(),
        Neighborhood::NHat => {
            let pos = nb.partition_point(|&j| j < i);
            let mut v = Vec::with_capacity(nb.len() + 1);
            v.extend_from_slice(&nb[..pos]);
            v.push(i);
            v.extend_from_slice(&nb[pos..]);
            v
        }
    }
}

/// Analytic work and depth of one vertex update with fan-in `f`.
pub fn vertex_cost(spec: &ModelSpec, l: usize, f: usize) -> (KernelTally, KernelTally) {
    let model = spec.model;
    let p = &spec.layers[l];
    let (a, b) = (p.in_width(model) as u64, p.out_width(model) as u64);
    let fu = f as u64;
    let la = ceil_log2(a as usize);
    let lb = ceil_log2(b as usize);
    let lf = ceil_log2(f);
    let act = p.activation.depth();
    let (edge_work, edge_depth) = match model {
        ModelId::Gcn => (fu * a, 0),
        ModelId::SageMean | ModelId::Gin | ModelId::Commnet => (0, 0),
        ModelId::VanillaAttn => (fu * 2 * a, la + 1),
        ModelId::AgnnCosine => (a + fu * (3 * a + 1), la + 2),
        ModelId::Monet => (fu * (a * a + 3 * a), 2 * la + 3),
        ModelId::Gat => (fu * (a * b + 2 * b + a), la + ceil_log2(2 * b as usize) + 1 + lf + 2),
        ModelId::Ggcn => (a * a + fu * (a * a + 2 * a), la + 3),
        ModelId::SagePool => (fu * (a * a + a), la + 2),
        ModelId::Edgeconv1 => (fu * a * b, la),
        ModelId::Edgeconv5 => (a * b + fu * (a + a * b + b), la + 3),
        _ => (0, 0),
    };
    let w = message_width(model, p) as u64;
    let (agg_work, agg_depth) = match model.reducer() {
        Reducer::Sum => (fu * w, lf),
        Reducer::Mean => (fu * w + w, lf + 1),
        Reducer::Max => (0, lf),
    };
    let (phi_work, phi_depth) = match model {
        ModelId::Gin => {
            let k = p.mlp.len() as u64;
            (
                a + a * b + k.saturating_sub(1) * b * b,
                1 + la + k.saturating_sub(1) * (lb + 1),
            )
        }
        ModelId::Commnet => (2 * a * b + b, la + 1),
        ModelId::SagePool => (2 * a * b, ceil_log2(2 * a as usize)),
        ModelId::Edgeconv1 | ModelId::Edgeconv5 => (0, 0),
        _ => (a * b, la),
    };
    (
        KernelTally {
            scatter: 0,
            update_edge: edge_work,
            aggregate: agg_work,
            update_vertex: phi_work,
        },
        KernelTally {
            scatter: 0,
            update_edge: edge_depth,
            aggregate: agg_depth,
            update_vertex: phi_depth + act,
        },
    )
}

/// Computes vertex `i` for layer `l` from explicit rows: `hi` is the
/// vertex's own vector, `nbrs` lists `(j, h_j)` for `j ∈ conv(i)` in
/// ascending order. GAT shares its softmax denominator across the
/// neighborhood.
pub fn compute_vertex(
    g: &Graph,
    spec: &ModelSpec,
    l: usize,
    i: usize,
    hi: &[f64],
    nbrs: &[(usize, &[f64])],
) -> Result<Vec<f64>> {
    let model = spec.model;
    let p = layer(spec, l)?;
    let width = message_width(model, p);
    let msgs: Vec<Vec<f64>> = match model {
        ModelId::Gat => {
            let k = p.in_width(model);
            check_width(hi, k, "h_i")?;
            let zi = vec_mat(hi, &p.weight)?;
            let mut logits = Vec::with_capacity(nbrs.len());
            for (_, hj) in nbrs {
                check_width(hj, k, "h_j")?;
                logits.push(gat_logit(p, &zi, &vec_mat(hj, &p.weight)?));
            }
            softmax(&logits)
                .into_iter()
                .zip(nbrs)
                .map(|(alpha, (_, hj))| hj.iter().map(|v| alpha * v).collect())
                .collect()
        }
        _ => {
            let di = (g.degree(i) + 1) as f64;
            nbrs.iter()
                .map(|&(j, hj)| {
                    let ctx = PsiContext {
                        tilde_deg_i: Some(di),
                        tilde_deg_j: Some((g.degree(j) + 1) as f64),
                        neighborhood: None,
                    };
                    eval_psi(spec, l, hi, hj, &ctx)
                })
                .collect::<Result<_>>()?
        }
    };
    let agg = aggregate(model.reducer(), &msgs, width)?;
    eval_phi(spec, l, hi, &agg)
}

/// One layer of the local formulation over every vertex.
pub fn lc_layer(g: &Graph, h: &FeatureMatrix, spec: &ModelSpec, l: usize, mode: ExecMode) -> Result<LayerOutput> {
    let model = spec.model;
    if !model.has_local() {
        return Err(GnnError::NoLocalFormulation(model.name()));
    }
    let p = layer(spec, l)?;
    if h.rows() != g.n() {
        return Err(shape_err(format!("H has {} rows for n = {}", h.rows(), g.n())));
    }
    if h.cols() != p.in_width(model) {
        return Err(shape_err(format!(
            "H has {} columns, layer {l} expects {}",
            h.cols(),
            p.in_width(model)
        )));
    }
    let rows = map_indices(mode, g.n(), |i| {
        let conv = conv_neighbors(g, model, i);
        let nbrs: Vec<(usize, &[f64])> = conv.iter().map(|&j| (j, h.row(j))).collect();
        let out = compute_vertex(g, spec, l, i, h.row(i), &nbrs)?;
        let (work, depth) = vertex_cost(spec, l, conv.len());
        Ok::<_, GnnError>((out, work, depth))
    });
    let kout = p.out_width(model);
    let mut features = FeatureMatrix::zeros(g.n(), kout);
    let mut kernel_trace = KernelTally::default();
    let mut depth = KernelTally::default();
    for (i, r) in rows.into_iter().enumerate() {
        let (out, w, d) = r?;
        features.row_mut(i).copy_from_slice(&out);
        kernel_trace.add(&w);
        if d.total() > depth.total() {
            depth = d;
        }
    }
    Ok(LayerOutput {
        features,
        kernel_trace,
        depth,
    })
}

/// `L` stacked layers; returns every layer's output.
pub fn lc_forward_traced(g: &Graph, x: &FeatureMatrix, spec: &ModelSpec, mode: ExecMode) -> Result<Vec<LayerOutput>> {
    if !spec.model.has_local() {
        return Err(GnnError::NoLocalFormulation(spec.model.name()));
    }
    let mut outs: Vec<LayerOutput> = Vec::with_capacity(spec.num_layers());
    for l in 0..spec.num_layers() {
        let input = outs.last().map_or(x, |o| &o.features);
        let out = lc_layer(g, input, spec, l, mode)?;
        outs.push(out);
    }
    Ok(outs)
}

/// Forward pass of the local formulation.
pub fn lc_forward(g: &Graph, x: &FeatureMatrix, spec: &ModelSpec, mode: ExecMode) -> Result<FeatureMatrix> {
    Ok(lc_forward_traced(g, x, spec, mode)?
        .pop()
        .map_or_else(|| x.clone(), |o| o.features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::graph::{build_csr, complete, path};
    use crate::model::Activation;

    fn spec_with(model: ModelId, widths: &[usize], act: Activation) -> ModelSpec {
        ModelSpec::random(model, widths, act, 5).unwrap()
    }

    fn identity_weights(spec: &mut ModelSpec) {
        for p in &mut spec.layers {
            let k = p.weight.rows();
            p.weight = DenseMatrix::identity(k);
            if let Some(w) = p.self_weight.as_mut() {
                *w = DenseMatrix::identity(k);
            }
        }
    }

    #[test]
    fn gcn_psi_on_k3() {
        let s = spec_with(ModelId::Gcn, &[2, 2], Activation::None);
        let ctx = PsiContext {
            tilde_deg_i: Some(3.0),
            tilde_deg_j: Some(3.0),
            neighborhood: None,
        };
        let out = eval_psi(&s, 0, &[0.0, 0.0], &[3.0, 6.0], &ctx).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
        assert_eq!(
            eval_psi(&s, 0, &[0.0, 0.0], &[3.0, 6.0], &PsiContext::default()),
            Err(GnnError::MissingContext("gcn degree coefficients"))
        );
    }

    #[test]
    fn vanilla_attention_orthogonal() {
        let s = spec_with(ModelId::VanillaAttn, &[2, 2], Activation::None);
        let out = eval_psi(&s, 0, &[1.0, 0.0], &[0.0, 1.0], &PsiContext::default()).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn gat_zero_attention_is_uniform() {
        let mut s = spec_with(ModelId::Gat, &[2, 2], Activation::None);
        s.layers[0].attention = Some(vec![0.0; 4]);
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]];
        let ctx = PsiContext {
            neighborhood: Some(rows.iter().map(Vec::as_slice).collect()),
            ..Default::default()
        };
        for hj in &rows {
            let out = eval_psi(&s, 0, &rows[0], hj, &ctx).unwrap();
            for (o, h) in out.iter().zip(hj) {
                assert!((o - h / 3.0).abs() < 1e-15);
            }
        }
        assert_eq!(
            eval_psi(&s, 0, &rows[0], &rows[1], &PsiContext::default()),
            Err(GnnError::MissingContext("gat neighborhood"))
        );
    }

    #[test]
    fn aggregate_reducers() {
        let v = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(aggregate(Reducer::Sum, &v, 2).unwrap(), vec![4.0, 6.0]);
        assert_eq!(aggregate(Reducer::Max, &[], 2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            aggregate(Reducer::Mean, &[vec![2.0, 2.0], vec![4.0, 6.0]], 2).unwrap(),
            vec![3.0, 4.0]
        );
        assert!(matches!(aggregate(Reducer::Sum, &v, 3), Err(GnnError::ShapeError(_))));
    }

    #[test]
    fn phi_examples() {
        let mut gcn = spec_with(ModelId::Gcn, &[2, 2], Activation::Relu);
        identity_weights(&mut gcn);
        assert_eq!(eval_phi(&gcn, 0, &[0.0, 0.0], &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);

        let mut comm = spec_with(ModelId::Commnet, &[2, 2], Activation::None);
        identity_weights(&mut comm);
        assert_eq!(eval_phi(&comm, 0, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![1.0, 1.0]);

        let mut gin = spec_with(ModelId::Gin, &[1, 1], Activation::None);
        gin.hyper.epsilon = 0.0;
        gin.layers[0].mlp = vec![DenseMatrix::identity(1)];
        assert_eq!(eval_phi(&gin, 0, &[1.0], &[2.0]).unwrap(), vec![3.0]);
        assert!(matches!(
            eval_phi(&gin, 0, &[1.0, 1.0], &[2.0]),
            Err(GnnError::ShapeError(_))
        ));
    }

    #[test]
    fn gcn_layer_on_k3_identity() {
        let g = complete(3);
        let mut s = spec_with(ModelId::Gcn, &[3, 3], Activation::None);
        identity_weights(&mut s);
        let out = lc_layer(&g, &DenseMatrix::identity(3), &s, 0, ExecMode::Sequential).unwrap();
        for v in out.features.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(out.kernel_trace.aggregate, 27);
        assert_eq!(out.kernel_trace.update_vertex, 27);
        // ⌈log₂3⌉ + ⌈log₂3⌉ + 0 (σ = none)
        assert_eq!(out.depth.total(), 4);
    }

    #[test]
    fn empty_aggregation_single_vertex() {
        let g = build_csr(&[], 1).unwrap();
        for m in [ModelId::Gin, ModelId::Commnet, ModelId::Edgeconv1, ModelId::SagePool] {
            let s = spec_with(m, &[2, 2], Activation::None);
            let x = DenseMatrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
            let out = lc_layer(&g, &x, &s, 0, ExecMode::Sequential).unwrap();
            let zero = vec![0.0; message_width(m, &s.layers[0])];
            assert_eq!(
                out.features.row(0),
                eval_phi(&s, 0, x.row(0), &zero).unwrap().as_slice()
            );
        }
    }

    #[test]
    fn edgeconv1_on_path() {
        let g = path(2);
        let mut s = spec_with(ModelId::Edgeconv1, &[2, 2], Activation::None);
        identity_weights(&mut s);
        let out = lc_forward(&g, &DenseMatrix::identity(2), &s, ExecMode::Sequential).unwrap();
        assert_eq!(out.row(0), &[0.0, 1.0]);
        assert_eq!(out.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn forward_depths_and_errors() {
        let g = complete(3);
        let mut s = spec_with(ModelId::Gcn, &[3, 3, 3], Activation::None);
        identity_weights(&mut s);
        let out = lc_forward(&g, &DenseMatrix::identity(3), &s, ExecMode::Sequential).unwrap();
        for v in out.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut empty = s.clone();
        empty.layers.clear();
        let x = DenseMatrix::identity(3);
        assert_eq!(lc_forward(&g, &x, &empty, ExecMode::Sequential).unwrap(), x);
        let sgc = ModelSpec::random(ModelId::Sgc, &[3, 3], Activation::None, 0).unwrap();
        assert_eq!(
            lc_forward(&g, &x, &sgc, ExecMode::Sequential),
            Err(GnnError::NoLocalFormulation("sgc"))
        );
    }

    #[test]
    fn gat_layer_matches_standalone_psi() {
        let g = complete(4);
        let s = spec_with(ModelId::Gat, &[3, 2], Activation::None);
        let h = crate::rng::uniform(4, 3, -1.0, 1.0, 1, 0);
        let out = lc_layer(&g, &h, &s, 0, ExecMode::Sequential).unwrap();
        for i in 0..4 {
            let conv = conv_neighbors(&g, ModelId::Gat, i);
            let ctx = PsiContext {
                neighborhood: Some(conv.iter().map(|&y| h.row(y)).collect()),
                ..Default::default()
            };
            let msgs: Vec<Vec<f64>> = conv
                .iter()
                .map(|&j| eval_psi(&s, 0, h.row(i), h.row(j), &ctx).unwrap())
                .collect();
            let weights_sum: f64 = msgs.iter().zip(&conv).map(|(m, &j)| m[0] / h.get(j, 0)).sum();
            assert!((weights_sum - 1.0).abs() < 1e-12);
            let expect = eval_phi(&s, 0, h.row(i), &aggregate(Reducer::Sum, &msgs, 3).unwrap()).unwrap();
            for (a, b) in expect.iter().zip(out.features.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c_gnn_psi_reads_no_weights() {
        for m in [ModelId::Gcn, ModelId::SageMean, ModelId::Gin, ModelId::Commnet] {
            let mut s = spec_with(m, &[2, 2], Activation::None);
            for p in &mut s.layers {
                p.weight.as_mut_slice().fill(f64::NAN);
                p.mlp.iter_mut().for_each(|w| w.as_mut_slice().fill(f64::NAN));
                if let Some(w) = p.self_weight.as_mut() {
                    w.as_mut_slice().fill(f64::NAN);
                }
            }
            let ctx = PsiContext {
                tilde_deg_i: Some(2.0),
                tilde_deg_j: Some(3.0),
                neighborhood: None,
            };
            let out = eval_psi(&s, 0, &[1.0, 2.0], &[3.0, 4.0], &ctx).unwrap();
            assert!(out.iter().all(|v| v.is_finite()), "{m}");
        }
    }
}
