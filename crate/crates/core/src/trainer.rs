//! Full-batch GCN training: softmax cross-entropy, reverse-mode backward
//! through `H_{l+1} = σ(Â H_l W_l)`, SGD, and a central-difference oracle.

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, FeatureMatrix};
use crate::error::{shape_err, GnnError, Result};
use crate::exec::ExecMode;
use crate::gl::GlEngine;
use crate::graph::{normalize, Graph, NormKind, Sbm, SparseOperator};
use crate::model::{Activation, ModelId, ModelSpec};
use crate::rng::{stream_rng, uniform};

/// Labeled vertex subset with class indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    labeled: Vec<usize>,
    classes: Vec<usize>,
    num_classes: usize,
}

impl Labels {
    /// Pairs `(vertex, class)`; vertices must be `< n` and unique.
    pub fn new(pairs: &[(usize, usize)], num_classes: usize, n: usize) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(GnnError::InvalidParameter(format!("vertex {} labeled twice", w[0].0)));
            }
        }
        for &(v, c) in &sorted {
            if v >= n {
                return Err(GnnError::InvalidVertex { vertex: v, n });
            }
            if c >= num_classes {
                return Err(GnnError::InvalidParameter(format!("class {c} >= C = {num_classes}")));
            }
        }
        Ok(Self {
            labeled: sorted.iter().map(|p| p.0).collect(),
            classes: sorted.iter().map(|p| p.1).collect(),
            num_classes,
        })
    }

    /// Parses `vertex class` lines; `C` is one more than the largest class
    /// unless given.
    pub fn parse(text: &str, n: usize, num_classes: Option<usize>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next().and_then(|t| t.parse().ok()).ok_or_else(|| GnnError::Parse {
                    line: ln + 1,
                    msg: format!("expected `vertex class`, got '{line}'"),
                })
            };
            pairs.push((next()?, next()?));
        }
        let c = num_classes.unwrap_or_else(|| pairs.iter().map(|p| p.1 + 1).max().unwrap_or(0));
        Self::new(&pairs, c, n)
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(v, c)| format!("{v} {c}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labeled.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labeled.iter().copied().zip(self.classes.iter().copied())
    }

    /// `n × C` ground-truth matrix, zero rows for unlabeled vertices.
    pub fn one_hot(&self, n: usize) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(n, self.num_classes);
        for (v, c) in self.iter() {
            t.set(v, c, 1.0);
        }
        t
    }

    /// Relabels vertices: vertex `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let pairs: Vec<_> = self.iter().map(|(v, c)| (perm[v], c)).collect();
        Self::new(&pairs, self.num_classes, perm.len())
    }
}

/// Mean softmax cross-entropy over labeled rows and its gradient in `Y`.
pub fn softmax_xent(y: &FeatureMatrix, labels: &Labels) -> Result<(f64, FeatureMatrix)> {
    if labels.is_empty() {
        return Err(GnnError::EmptyLabels);
    }
    if y.cols() != labels.num_classes() {
        return Err(shape_err(format!(
            "Y has {} columns for C = {}",
            y.cols(),
            labels.num_classes()
        )));
    }
    let scale = 1.0 / labels.len() as f64;
    let mut dy = DenseMatrix::zeros(y.rows(), y.cols());
    let mut loss = 0.0;
    for (v, c) in labels.iter() {
        let row = y.row(v);
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
        loss += lse - row[c];
        let g = dy.row_mut(v);
        for (j, z) in row.iter().enumerate() {
            g[j] = ((z - lse).exp() - if j == c { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss * scale, dy))
}

/// Fraction of labeled rows whose arg-max (lowest index on ties) is the
/// true class.
pub fn accuracy(y: &FeatureMatrix, labels: &Labels) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .filter(|&(v, c)| {
            let row = y.row(v);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            best == c
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Activations kept by the forward pass: per layer the input `H_l`, the
/// aggregate `Â H_l` and the pre-activation `Z_l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub a_hat: SparseOperator,
    pub inputs: Vec<FeatureMatrix>,
    pub aggregated: Vec<FeatureMatrix>,
    pub pre_activations: Vec<FeatureMatrix>,
    pub output: FeatureMatrix,
}

/// Per-layer weight gradients, plus `∇H_l` per layer when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<DenseMatrix>,
    pub features: Vec<FeatureMatrix>,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.features).all(DenseMatrix::is_finite)
    }

    /// `max_l ‖self_l − other_l‖_∞ / max(1e-12, ‖other_l‖_∞)`, worst layer.
    pub fn max_rel_error(&self, reference: &GradientSet) -> Result<f64> {
        if self.weights.len() != reference.weights.len() {
            return Err(shape_err("gradient sets differ in layer count"));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.weights.iter().zip(&reference.weights) {
            let scale = b.max_abs().max(1e-12);
            worst = worst.max(a.max_abs_diff(b)? / scale);
        }
        Ok(worst)
    }
}

fn require_gcn(spec: &ModelSpec) -> Result<()> {
    if spec.model != ModelId::Gcn {
        return Err(GnnError::InvalidParameter(format!(
            "training supports gcn only, got {}",
            spec.model
        )));
    }
    Ok(())
}

/// GCN forward keeping every intermediate.
pub fn gcn_forward_cached(g: &Graph, x: &FeatureMatrix, spec: &ModelSpec, mode: ExecMode) -> Result<ForwardCache> {
    require_gcn(spec)?;
    let a_hat = normalize(g, NormKind::SymNorm)?;
    let mut eng = GlEngine::new(mode);
    let mut inputs = Vec::with_capacity(spec.num_layers());
    let mut aggregated = Vec::with_capacity(spec.num_layers());
    let mut pre_activations = Vec::with_capacity(spec.num_layers());
    let mut h = x.clone();
    for p in &spec.layers {
        let ah = eng.spmm(&a_hat, &h)?;
        let z = eng.gemm(&ah, &p.weight)?;
        let mut next = z.clone();
        next.as_mut_slice().iter_mut().for_each(|v| *v = p.activation.apply(*v));
        inputs.push(std::mem::replace(&mut h, next));
        aggregated.push(ah);
        pre_activations.push(z);
    }
    Ok(ForwardCache {
        a_hat,
        inputs,
        aggregated,
        pre_activations,
        output: h,
    })
}

/// Reverse pass: `dZ = dH ⊙ σ'(Z)`, `∇W = (ÂH)ᵀ dZ`, `dH = Âᵀ dZ Wᵀ`.
pub fn gcn_backward(cache: Option<&ForwardCache>, dy: &FeatureMatrix, spec: &ModelSpec) -> Result<GradientSet> {
    require_gcn(spec)?;
    let cache = cache.ok_or(GnnError::NoCache)?;
    if cache.pre_activations.len() != spec.num_layers() {
        return Err(GnnError::NoCache);
    }
    dy.check_same_shape(&cache.output)?;
    let a_t = cache.a_hat.transpose();
    let mut eng = GlEngine::new(ExecMode::Sequential);
    let mut dh = dy.clone();
    let mut weights = vec![DenseMatrix::zeros(0, 0); spec.num_layers()];
    let mut features = vec![DenseMatrix::zeros(0, 0); spec.num_layers()];
    for (l, p) in spec.layers.iter().enumerate().rev() {
        let z = &cache.pre_activations[l];
        let mut dz = dh;
        dz.as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .for_each(|(d, zv)| *d *= p.activation.derivative(*zv));
        weights[l] = cache.aggregated[l].t_matmul(&dz)?;
        let dzw = dz.matmul_t(&p.weight)?;
        dh = eng.spmm(&a_t, &dzw)?;
        features[l] = dh.clone();
    }
    Ok(GradientSet { weights, features })
}

/// Loss of `spec` on `(g, x, labels)`.
pub fn gcn_loss(g: &Graph, x: &FeatureMatrix, labels: &Labels, spec: &ModelSpec) -> Result<f64> {
    let cache = gcn_forward_cached(g, x, spec, ExecMode::Sequential)?;
    Ok(softmax_xent(&cache.output, labels)?.0)
}

/// Central differences `(f(w+h) − f(w−h)) / 2h` of a scalar function.
pub fn central_difference<F>(mut f: F, w: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            x[i] = w[i] + h;
            let up = f(&x);
            x[i] = w[i] - h;
            let down = f(&x);
            x[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference gradient of the GCN loss for every weight.
pub fn finite_diff_grad(
    g: &Graph,
    x: &FeatureMatrix,
    labels: &Labels,
    spec: &ModelSpec,
    h: f64,
) -> Result<GradientSet> {
    require_gcn(spec)?;
    if h.is_nan() || h <= 0.0 {
        return Err(GnnError::InvalidParameter(format!("step {h} must be > 0")));
    }
    let mut probe = spec.clone();
    let mut weights = Vec::with_capacity(spec.num_layers());
    for l in 0..spec.num_layers() {
        let w0 = spec.layers[l].weight.clone();
        let mut err = None;
        let grad = central_difference(
            |w| {
                probe.layers[l].weight.as_mut_slice().copy_from_slice(w);
                gcn_loss(g, x, labels, &probe).unwrap_or_else(|e| {
                    err = Some(e);
                    f64::NAN
                })
            },
            w0.as_slice(),
            h,
        );
        probe.layers[l].weight = w0.clone();
        if let Some(e) = err {
            return Err(e);
        }
        weights.push(DenseMatrix::from_vec(w0.rows(), w0.cols(), grad)?);
    }
    Ok(GradientSet {
        weights,
        features: Vec::new(),
    })
}

/// `W ← W − lr·∇W` for every layer.
pub fn sgd_step(spec: &mut ModelSpec, grads: &GradientSet, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(GnnError::InvalidParameter(format!("learning rate {lr}")));
    }
    if grads.weights.len() != spec.num_layers() {
        return Err(shape_err("gradient layer count differs from model"));
    }
    for (p, gw) in spec.layers.iter_mut().zip(&grads.weights) {
        p.weight.axpy(-lr, gw)?;
    }
    Ok(())
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `k_0, …, k_L`; the last entry is the class count.
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

/// One loss-curve point, measured before that epoch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// GCN with Glorot-uniform weights, ReLU on hidden layers and raw logits
/// on the last.
pub fn init_gcn(widths: &[usize], seed: u64) -> Result<ModelSpec> {
    let mut spec = ModelSpec::random(ModelId::Gcn, widths, Activation::Relu, seed)?;
    if let Some(last) = spec.layers.last_mut() {
        last.activation = Activation::None;
    }
    Ok(spec)
}

/// Synchronous full-batch gradient descent.
pub fn train_full_batch(
    g: &Graph,
    x: &FeatureMatrix,
    labels: &Labels,
    cfg: &TrainConfig,
    mode: ExecMode,
) -> Result<(ModelSpec, Vec<EpochRecord>)> {
    let mut spec = init_gcn(&cfg.widths, cfg.seed)?;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let cache = gcn_forward_cached(g, x, &spec, mode)?;
        let (loss, dy) = softmax_xent(&cache.output, labels)?;
        curve.push(EpochRecord {
            epoch,
            loss,
            train_acc: accuracy(&cache.output, labels),
        });
        let grads = gcn_backward(Some(&cache), &dy, &spec)?;
        sgd_step(&mut spec, &grads, cfg.lr)?;
    }
    Ok((spec, curve))
}

/// `epoch,loss,train_acc` CSV.
pub fn curve_to_csv(curve: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,train_acc\n");
    for r in curve {
        s.push_str(&format!("{},{:.17e},{:.17e}\n", r.epoch, r.loss, r.train_acc));
    }
    s
}

/// Node-classification task on a block model: `k` uniform features in
/// `[-1, 1)` plus `shift` added to feature `community mod k`; every vertex
/// labeled by its community.
pub fn community_task(sbm: &Sbm, k: usize, shift: f64, seed: u64) -> Result<(FeatureMatrix, Labels)> {
    let n = sbm.graph.n();
    if k == 0 {
        return Err(GnnError::InvalidParameter("feature width 0".into()));
    }
    let mut x = uniform(n, k, -1.0, 1.0, seed, u64::MAX);
    for (i, &c) in sbm.community.iter().enumerate() {
        let v = x.get(i, c % k);
        x.set(i, c % k, v + shift);
    }
    let classes = sbm.community.iter().max().map_or(0, |c| c + 1);
    let pairs: Vec<_> = sbm.community.iter().copied().enumerate().collect();
    Ok((x, Labels::new(&pairs, classes, n)?))
}

/// Random GCN gradient-check instance `(graph, X, labels, spec)`.
pub fn random_instance(n: usize, widths: &[usize], seed: u64) -> Result<(Graph, FeatureMatrix, Labels, ModelSpec)> {
    let degree = 3.0f64.min(n.saturating_sub(1).max(1) as f64);
    instance_on(crate::graph::erdos_renyi(n, degree, seed)?, widths, seed)
}

/// Random features, labels and weights for a given graph.
pub fn instance_on(g: Graph, widths: &[usize], seed: u64) -> Result<(Graph, FeatureMatrix, Labels, ModelSpec)> {
    use rand::Rng;
    if widths.is_empty() {
        return Err(GnnError::InvalidParameter("need at least one width".into()));
    }
    let n = g.n();
    let x = uniform(n, widths[0], -1.0, 1.0, seed, u64::MAX - 1);
    let c = *widths.last().expect("non-empty widths");
    if c == 0 {
        return Err(GnnError::InvalidParameter("zero classes".into()));
    }
    let mut rng = stream_rng(seed, u64::MAX - 2);
    let pairs: Vec<_> = (0..n).map(|v| (v, rng.gen_range(0..c))).collect();
    let labels = Labels::new(&pairs, c, n)?;
    let mut spec = init_gcn(widths, seed)?;
    // keep pre-activations away from the ReLU kink
    for p in &mut spec.layers {
        p.weight.scale(1.5);
    }
    Ok((g, x, labels, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::complete;

    fn one(v: usize, c: usize, n: usize, classes: usize) -> Labels {
        Labels::new(&[(v, c)], classes, n).unwrap()
    }

    #[test]
    fn xent_balanced_row() {
        let y = DenseMatrix::zeros(1, 2);
        let (loss, dy) = softmax_xent(&y, &one(0, 0, 1, 2)).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(dy.row(0), &[-0.5, 0.5]);
    }

    #[test]
    fn xent_saturated_is_finite() {
        let y = DenseMatrix::from_rows(&[vec![1000.0, -1000.0]]).unwrap();
        let (loss, dy) = softmax_xent(&y, &one(0, 0, 1, 2)).unwrap();
        assert!(loss.abs() < 1e-300 && dy.is_finite());
    }

    #[test]
    fn xent_decreases_with_margin() {
        let mut last = f64::INFINITY;
        for m in [1.0, 10.0, 100.0] {
            let y = DenseMatrix::from_rows(&[vec![m, 0.0], vec![5.0, -5.0]]).unwrap();
            let (loss, dy) = softmax_xent(&y, &one(0, 0, 2, 2)).unwrap();
            assert!(loss >= 0.0 && loss < last);
            assert_eq!(dy.row(1), &[0.0, 0.0]);
            last = loss;
        }
        let empty = Labels::new(&[], 2, 2).unwrap();
        assert_eq!(
            softmax_xent(&DenseMatrix::zeros(2, 2), &empty),
            Err(GnnError::EmptyLabels)
        );
    }

    #[test]
    fn backward_zero_upstream() {
        let (g, x, _, spec) = random_instance(8, &[3, 4, 2], 1).unwrap();
        let cache = gcn_forward_cached(&g, &x, &spec, ExecMode::Sequential).unwrap();
        let grads = gcn_backward(Some(&cache), &DenseMatrix::zeros(8, 2), &spec).unwrap();
        assert!(grads.weights.iter().all(|w| w.max_abs() == 0.0));
        assert_eq!(
            gcn_backward(None, &DenseMatrix::zeros(8, 2), &spec),
            Err(GnnError::NoCache)
        );
    }

    #[test]
    fn quadratic_toy_derivative() {
        let d = central_difference(|w| w[0] * w[0], &[3.0], 1e-6);
        assert!((d[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn sgd_examples() {
        let mut spec = init_gcn(&[1, 1], 0).unwrap();
        spec.layers[0].weight = DenseMatrix::filled(1, 1, 1.0);
        let zero = GradientSet {
            weights: vec![DenseMatrix::zeros(1, 1)],
            features: Vec::new(),
        };
        sgd_step(&mut spec, &zero, 0.5).unwrap();
        assert_eq!(spec.layers[0].weight.get(0, 0), 1.0);
        let two = GradientSet {
            weights: vec![DenseMatrix::filled(1, 1, 2.0)],
            features: Vec::new(),
        };
        sgd_step(&mut spec, &two, 0.5).unwrap();
        assert_eq!(spec.layers[0].weight.get(0, 0), 0.0);

        spec.layers[0].weight = DenseMatrix::filled(1, 1, 1.0);
        for _ in 0..2 {
            let w = spec.layers[0].weight.get(0, 0);
            let g = GradientSet {
                weights: vec![DenseMatrix::filled(1, 1, 2.0 * w)],
                features: Vec::new(),
            };
            sgd_step(&mut spec, &g, 0.1).unwrap();
        }
        assert!((spec.layers[0].weight.get(0, 0) - 0.64).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_constant_curve() {
        let g = complete(4);
        let x = uniform(4, 2, -1.0, 1.0, 0, 0);
        let labels = Labels::new(&[(0, 0), (1, 1)], 2, 4).unwrap();
        let cfg = TrainConfig {
            widths: vec![2, 3, 2],
            epochs: 5,
            lr: 0.0,
            seed: 4,
        };
        let (_, curve) = train_full_batch(&g, &x, &labels, &cfg, ExecMode::Sequential).unwrap();
        assert!(curve.windows(2).all(|w| w[0].loss == w[1].loss));
    }

    #[test]
    fn labels_parse_round_trip() {
        let l = Labels::parse("# header\n0 1\n2 0\n", 3, None).unwrap();
        assert_eq!(l.num_classes(), 2);
        assert_eq!(Labels::parse(&l.to_text(), 3, Some(2)).unwrap(), l);
        assert!(matches!(
            Labels::parse("0 x\n", 3, None),
            Err(GnnError::Parse { line: 1, .. })
        ));
        assert!(Labels::parse("5 0\n", 3, None).is_err());
    }
}
