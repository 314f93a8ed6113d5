//! Work, depth and communication accounting.
//!
//! Work counts multiply-adds only. Depth is attributed analytically:
//! elementwise steps cost 1 and a reduction of fan-in `f` costs `⌈log₂ f⌉`,
//! independent of the (sequential, deterministic) order the engine
//! actually accumulates in.

use serde::{Deserialize, Serialize};

use crate::error::{GnnError, Result};
use crate::graph::{Graph, Partitioning};
use crate::lc::LayerOutput;
use crate::model::{ModelId, ModelSpec};

/// One number per SAGA kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelTally {
    pub scatter: u64,
    pub update_edge: u64,
    pub aggregate: u64,
    pub update_vertex: u64,
}

impl KernelTally {
    pub fn total(&self) -> u64 {
        self.scatter + self.update_edge + self.aggregate + self.update_vertex
    }

    pub fn add(&mut self, o: &KernelTally) {
        self.scatter += o.scatter;
        self.update_edge += o.update_edge;
        self.aggregate += o.aggregate;
        self.update_vertex += o.update_vertex;
    }
}

impl std::ops::Add for KernelTally {
    type Output = KernelTally;

    fn add(mut self, o: KernelTally) -> KernelTally {
        KernelTally::add(&mut self, &o);
        self
    }
}

/// `⌈log₂ f⌉`, zero for `f ≤ 1`.
#[inline]
pub fn ceil_log2(f: usize) -> u64 {
    if f <= 1 {
        0
    } else {
        (usize::BITS - (f - 1).leading_zeros()) as u64
    }
}

/// Work/depth/communication of one instrumented run, following
/// `W = W_pre + Σ_l W_l + W_post` and likewise for depth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub work_pre: u64,
    pub work_per_layer: Vec<KernelTally>,
    pub work_post: u64,
    pub depth_pre: u64,
    pub depth_per_layer: Vec<KernelTally>,
    pub depth_post: u64,
    pub comm_words: u64,
    pub sync_steps: u64,
}

impl CostReport {
    pub fn total_work(&self) -> u64 {
        self.work_pre + self.work_per_layer.iter().map(KernelTally::total).sum::<u64>() + self.work_post
    }

    pub fn total_depth(&self) -> u64 {
        self.depth_pre + self.depth_per_layer.iter().map(KernelTally::total).sum::<u64>() + self.depth_post
    }

    /// Work summed over layers, per kernel.
    pub fn layer_work_sum(&self) -> KernelTally {
        self.work_per_layer.iter().fold(KernelTally::default(), |a, b| a + *b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

/// Coefficient preprocessing for the local formulation: one product per
/// stored entry of the normalized operator (gcn only), at depth 1.
pub fn preprocessing_cost(g: &Graph, model: ModelId) -> (u64, u64) {
    match model {
        ModelId::Gcn => ((g.nnz() + g.n()) as u64, 1),
        _ => (0, 0),
    }
}

/// Work side of a report assembled from per-layer kernel tallies.
pub fn measure_work(g: &Graph, model: ModelId, layers: &[LayerOutput]) -> CostReport {
    CostReport {
        work_pre: preprocessing_cost(g, model).0,
        work_per_layer: layers.iter().map(|o| o.kernel_trace).collect(),
        ..CostReport::default()
    }
}

/// Depth side of a report: per layer, the critical vertex's kernel depths.
pub fn measure_depth(g: &Graph, model: ModelId, layers: &[LayerOutput]) -> CostReport {
    CostReport {
        depth_pre: preprocessing_cost(g, model).1,
        depth_per_layer: layers.iter().map(|o| o.depth).collect(),
        ..CostReport::default()
    }
}

/// Full report of a local-formulation run under partitioning `part`.
pub fn measure(g: &Graph, spec: &ModelSpec, layers: &[LayerOutput], part: &Partitioning) -> CostReport {
    let w = measure_work(g, spec.model, layers);
    let d = measure_depth(g, spec.model, layers);
    let cut = part.directed_cut_edges(g);
    let comm_words = spec.widths().iter().take(layers.len()).map(|k| (k * cut) as u64).sum();
    CostReport {
        depth_pre: d.depth_pre,
        depth_per_layer: d.depth_per_layer,
        comm_words,
        sync_steps: 4 * layers.len() as u64,
        ..w
    }
}

/// Exact words moved by one forward pass: `L · k · (directed cut edges)`.
pub fn comm_volume(part: &Partitioning, g: &Graph, k: usize, layers: usize) -> u64 {
    (layers * k * part.directed_cut_edges(g)) as u64
}

/// Least-squares fit of measured values against named model terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    /// `‖y − Xβ‖₂ / ‖y‖₂`.
    pub relative_residual: f64,
    /// Set when the relative residual exceeds 5%.
    pub flagged: bool,
}

pub const FIT_RESIDUAL_LIMIT: f64 = 0.05;

/// Fits `measured[i] ≈ Σ_t β_t · features[i][t]` by least squares.
///
/// Collinear feature columns are dropped (coefficient reported as 0) so
/// families that vary only one size parameter still fit exactly.
pub fn check_asymptotic(terms: &[&str], features: &[Vec<f64>], measured: &[f64]) -> Result<FitRecord> {
    if features.len() < 3 || features.len() != measured.len() {
        return Err(GnnError::TooFewPoints(features.len().min(measured.len())));
    }
    let t = terms.len();
    if features.iter().any(|f| f.len() != t) {
        return Err(GnnError::ShapeError("feature row width != term count".into()));
    }
    // Modified Gram–Schmidt with column pivot-out of dependent terms.
    let rows = features.len();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut r = vec![vec![0.0; t]; t];
    for c in 0..t {
        let mut v: Vec<f64> = features.iter().map(|f| f[c]).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (qi, &kc) in q.iter().zip(&kept) {
            let proj: f64 = qi.iter().zip(&v).map(|(a, b)| a * b).sum();
            r[kc][c] = proj;
            v.iter_mut().zip(qi).for_each(|(x, qq)| *x -= proj * qq);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * norm0.max(1e-300) && norm0 > 0.0 {
            r[c][c] = norm;
            q.push(v.iter().map(|x| x / norm).collect());
            kept.push(c);
        }
    }
    let qty: Vec<f64> = q
        .iter()
        .map(|qi| qi.iter().zip(measured).map(|(a, b)| a * b).sum())
        .collect();
    let mut beta = vec![0.0; t];
    for (idx, &c) in kept.iter().enumerate().rev() {
        let mut s = qty[idx];
        for &c2 in kept.iter().skip(idx + 1) {
            s -= r[c][c2] * beta[c2];
        }
        beta[c] = s / r[c][c];
    }
    let mut res2 = 0.0;
    let mut y2 = 0.0;
    for i in 0..rows {
        let pred: f64 = features[i].iter().zip(&beta).map(|(a, b)| a * b).sum();
        res2 += (measured[i] - pred).powi(2);
        y2 += measured[i].powi(2);
    }
    let relative_residual = if y2 > 0.0 { (res2 / y2).sqrt() } else { res2.sqrt() };
    Ok(FitRecord {
        terms: terms.iter().map(|s| s.to_string()).collect(),
        coefficients: beta,
        relative_residual,
        flagged: relative_residual > FIT_RESIDUAL_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, path};

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(0), 0);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
    }

    #[test]
    fn comm_volume_cases() {
        let k3 = complete(3);
        assert_eq!(comm_volume(&Partitioning::single(3), &k3, 2, 1), 0);
        let singles = Partitioning::from_owners(vec![0, 1, 2], 3).unwrap();
        assert_eq!(comm_volume(&singles, &k3, 2, 1), 12);
        let p = Partitioning::from_owners(vec![0, 0, 1], 2).unwrap();
        assert_eq!(comm_volume(&p, &path(3), 1, 2), 4);
    }

    #[test]
    fn fit_exact_linear_family() {
        let feats = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 5.0], vec![4.0, 4.0]];
        let y: Vec<f64> = feats.iter().map(|f| 3.0 * f[0] + 0.5 * f[1]).collect();
        let fit = check_asymptotic(&["a", "b"], &feats, &y).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-9);
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-9);
        assert!(fit.relative_residual < 1e-12);
        assert!(!fit.flagged);
    }

    #[test]
    fn fit_collinear_terms_still_exact() {
        let feats: Vec<Vec<f64>> = [1.0, 2.0, 4.0].iter().map(|&n| vec![n, 8.0 * n]).collect();
        let y: Vec<f64> = feats.iter().map(|f| 2.0 * f[0] + f[1]).collect();
        let fit = check_asymptotic(&["n", "8n"], &feats, &y).unwrap();
        assert!(fit.relative_residual < 1e-12);
    }

    #[test]
    fn fit_flags_bad_model_and_rejects_few_points() {
        let feats: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&n| vec![n]).collect();
        let y = [1.0, 4.0, 9.0, 16.0];
        assert!(check_asymptotic(&["n"], &feats, &y).unwrap().flagged);
        assert_eq!(
            check_asymptotic(&["n"], &feats[..2], &y[..2]),
            Err(GnnError::TooFewPoints(2))
        );
    }
}
