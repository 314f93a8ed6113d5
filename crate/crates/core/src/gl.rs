//! Global formulation: whole-matrix kernels (SpMM, GEMM, masked Gram,
//! polynomial powers, rational solves) and the per-model operator chains.

use serde::{Deserialize, Serialize};

use crate::cost::ceil_log2;
use crate::dense::{dot, DenseMatrix, FeatureMatrix};
use crate::error::{shape_err, GnnError, Result};
use crate::exec::{map_indices, map_rows, ExecMode};
use crate::graph::{normalize, Graph, NormKind, SparseOperator};
use crate::model::{Activation, GlType, LayerParams, ModelId, ModelSpec};

/// Default relative residual for rational solves.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Outcome of a conjugate-gradient solve, worst column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `max_col ‖S x − b‖₂ / ‖b‖₂`, recomputed from the returned solution.
    pub residual: f64,
    pub tolerance: f64,
}

/// Operation counters of a global-formulation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub spmm_calls: u64,
    pub gemm_calls: u64,
    pub gram_calls: u64,
    /// Multiply-adds inside sparse kernels (SpMM, masked Gram, CG).
    pub sparse_madds: u64,
    /// Multiply-adds inside dense GEMMs.
    pub dense_madds: u64,
    pub cg_iterations: u64,
    /// Critical path, summing each kernel's analytic depth in issue order.
    pub depth: u64,
}

impl Meter {
    pub fn total_madds(&self) -> u64 {
        self.sparse_madds + self.dense_madds
    }
}

/// Kernel executor carrying an execution mode and a meter.
#[derive(Debug, Clone, Default)]
pub struct GlEngine {
    pub mode: ExecMode,
    pub meter: Meter,
}

/// Parameterization of the three rational rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationalForm {
    /// `((1+α)I − αÂ)^{-1}`
    Autoregress { alpha: f64 },
    /// `α (I − (1−α)Â)^{-1}`
    Ppnp { alpha: f64 },
    /// `b (I − aÂ)^{-1}`
    Arma { a: f64, b: f64 },
}

impl RationalForm {
    /// `(c₀, c₁, prefactor)` for the system `c₀ I − c₁ Â`.
    fn coefficients(self) -> (f64, f64, f64) {
        match self {
            RationalForm::Autoregress { alpha } => (1.0 + alpha, alpha, 1.0),
            RationalForm::Ppnp { alpha } => (1.0, 1.0 - alpha, alpha),
            RationalForm::Arma { a, b } => (1.0, a, b),
        }
    }

    fn validate(self) -> Result<()> {
        let ok = match self {
            RationalForm::Autoregress { alpha } => alpha >= 0.0,
            RationalForm::Ppnp { alpha } => alpha > 0.0 && alpha <= 1.0,
            RationalForm::Arma { a, .. } => (0.0..1.0).contains(&a),
        };
        if ok {
            Ok(())
        } else {
            Err(GnnError::InvalidParameter(format!("{self:?} out of range")))
        }
    }
}

fn spmv_row(a: &SparseOperator, i: usize, x: &[f64]) -> f64 {
    let (cols, vals) = a.row(i);
    cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum()
}

impl GlEngine {
    pub fn new(mode: ExecMode) -> Self {
        Self {
            mode,
            meter: Meter::default(),
        }
    }

    /// `A · H`, row by row in stored column order.
    pub fn spmm(&mut self, a: &SparseOperator, h: &DenseMatrix) -> Result<DenseMatrix> {
        if a.n() != h.rows() {
            return Err(shape_err(format!(
                "SpMM: operator n = {} vs H rows = {}",
                a.n(),
                h.rows()
            )));
        }
        let k = h.cols();
        let mut out = DenseMatrix::zeros(a.n(), k);
        map_rows(self.mode, out.as_mut_slice(), k, |i, row| {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row.iter_mut().zip(h.row(j)).for_each(|(o, x)| *o += v * x);
            }
        });
        self.meter.spmm_calls += 1;
        self.meter.sparse_madds += (a.nnz() * k) as u64;
        self.meter.depth += ceil_log2(a.max_row_nnz());
        Ok(out)
    }

    /// `H · W`.
    pub fn gemm(&mut self, h: &DenseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
        let out = h.matmul(w, self.mode)?;
        self.meter.gemm_calls += 1;
        self.meter.dense_madds += (h.rows() * h.cols() * w.cols()) as u64;
        self.meter.depth += ceil_log2(h.cols());
        Ok(out)
    }

    /// `mask ⊙ (H Hᵀ)` evaluated only at the mask's stored entries.
    pub fn masked_gram(&mut self, mask: &SparseOperator, h: &DenseMatrix) -> Result<SparseOperator> {
        if mask.n() != h.rows() {
            return Err(shape_err(format!(
                "masked Gram: mask n = {} vs H rows = {}",
                mask.n(),
                h.rows()
            )));
        }
        let rows: Vec<Vec<f64>> = map_indices(self.mode, mask.n(), |i| {
            let (cols, vals) = mask.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&j, v)| v * dot(h.row(i), h.row(j)))
                .collect()
        });
        self.meter.gram_calls += 1;
        self.meter.sparse_madds += (mask.nnz() * h.cols()) as u64;
        self.meter.depth += ceil_log2(h.cols()) + 1;
        SparseOperator::from_csr(
            mask.n(),
            mask.row_offsets().to_vec(),
            mask.col_indices().to_vec(),
            rows.concat(),
        )
    }

    /// `Σ_s θ_s A^s H` via `P_0 = H`, `P_s = A P_{s−1}`: exactly `T` SpMMs.
    pub fn poly_apply(&mut self, coeffs: &[f64], a: &SparseOperator, h: &DenseMatrix) -> Result<DenseMatrix> {
        let (first, rest) = coeffs
            .split_first()
            .ok_or_else(|| GnnError::InvalidParameter("empty coefficient list".into()))?;
        if a.n() != h.rows() {
            return Err(shape_err(format!(
                "poly: operator n = {} vs H rows = {}",
                a.n(),
                h.rows()
            )));
        }
        let mut acc = h.scaled(*first);
        let mut p = h.clone();
        for &theta in rest {
            p = self.spmm(a, &p)?;
            acc.axpy(theta, &p)?;
        }
        self.meter.dense_madds += (coeffs.len() * h.rows() * h.cols()) as u64;
        self.meter.depth += ceil_log2(coeffs.len());
        Ok(acc)
    }

    /// Solves `(c₀ I − c₁ A) X = RHS` column by column with conjugate
    /// gradients and scales by the form's prefactor.
    pub fn rational_apply(
        &mut self,
        form: RationalForm,
        a: &SparseOperator,
        rhs: &DenseMatrix,
        tol: f64,
    ) -> Result<(DenseMatrix, SolveReport)> {
        form.validate()?;
        if a.n() != rhs.rows() {
            return Err(shape_err(format!(
                "solve: operator n = {} vs RHS rows = {}",
                a.n(),
                rhs.rows()
            )));
        }
        if !a.is_symmetric(1e-12) {
            return Err(GnnError::NotSymmetric);
        }
        let (c0, c1, pre) = form.coefficients();
        let n = a.n();
        let max_iter = (10 * n).max(1);
        let cols: Vec<(Vec<f64>, usize, f64)> = map_indices(self.mode, rhs.cols(), |c| {
            let b: Vec<f64> = (0..n).map(|i| rhs.get(i, c)).collect();
            cg(|x, i| c0 * x[i] - c1 * spmv_row(a, i, x), &b, tol, max_iter)
        });
        let mut out = DenseMatrix::zeros(n, rhs.cols());
        let mut report = SolveReport {
            iterations: 0,
            residual: 0.0,
            tolerance: tol,
        };
        for (c, (x, iters, res)) in cols.into_iter().enumerate() {
            for (i, v) in x.into_iter().enumerate() {
                out.set(i, c, pre * v);
            }
            report.iterations = report.iterations.max(iters);
            report.residual = report.residual.max(res);
            self.meter.cg_iterations += iters as u64;
            // one operator product, two dot products and three axpys per step
            self.meter.sparse_madds += (iters * (a.nnz() + 6 * n)) as u64;
        }
        self.meter.depth += report.iterations as u64 * (ceil_log2(a.max_row_nnz()) + 2 * ceil_log2(n) + 2);
        if report.residual.is_nan() || report.residual > tol {
            return Err(GnnError::SolveFailed(report));
        }
        Ok((out, report))
    }
}

/// Conjugate gradients on the operator `apply(x, i) = (S x)_i`. Restarts
/// from the true residual whenever the recursive one has converged but
/// the true one has not. Returns `(x, iterations, relative true residual)`.
fn cg<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, usize, f64)
where
    F: Fn(&[f64], usize) -> f64,
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, 0, 0.0);
    }
    let matvec = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| apply(v, i)).collect() };
    let true_residual = |x: &[f64]| -> Vec<f64> {
        let sx = matvec(x);
        b.iter().zip(&sx).map(|(bi, si)| bi - si).collect()
    };
    let mut iters = 0;
    let mut r = b.to_vec();
    loop {
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        while iters < max_iter && rr.sqrt() > tol * bnorm {
            let ap = matvec(&p);
            let alpha = rr / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
            rr = rr_new;
            iters += 1;
        }
        r = true_residual(&x);
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol || iters >= max_iter {
            return (x, iters, rel);
        }
    }
}

/// `A · H` with a throwaway meter.
pub fn spmm(a: &SparseOperator, h: &DenseMatrix) -> Result<DenseMatrix> {
    GlEngine::default().spmm(a, h)
}

pub fn masked_gram(mask: &SparseOperator, h: &DenseMatrix) -> Result<SparseOperator> {
    GlEngine::default().masked_gram(mask, h)
}

pub fn poly_apply(coeffs: &[f64], a: &SparseOperator, h: &DenseMatrix) -> Result<DenseMatrix> {
    GlEngine::default().poly_apply(coeffs, a, h)
}

pub fn rational_apply(
    form: RationalForm,
    a: &SparseOperator,
    rhs: &DenseMatrix,
    tol: f64,
) -> Result<(DenseMatrix, SolveReport)> {
    GlEngine::default().rational_apply(form, a, rhs, tol)
}

fn activate(mut h: DenseMatrix, act: Activation) -> DenseMatrix {
    if act != Activation::None {
        h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
    }
    h
}

/// Rational form of a rational model.
pub fn rational_form(spec: &ModelSpec) -> Option<RationalForm> {
    let h = &spec.hyper;
    match spec.model {
        ModelId::Autoregress => Some(RationalForm::Autoregress { alpha: h.alpha }),
        ModelId::Ppnp => Some(RationalForm::Ppnp { alpha: h.alpha }),
        ModelId::ArmaParwalks => Some(RationalForm::Arma { a: h.a, b: h.b }),
        _ => None,
    }
}

impl GlEngine {
    fn linear_layer(
        &mut self,
        g: &Graph,
        spec: &ModelSpec,
        p: &LayerParams,
        h: &FeatureMatrix,
    ) -> Result<FeatureMatrix> {
        let model = spec.model;
        if h.cols() != p.in_width(model) {
            return Err(shape_err(format!(
                "H has {} columns, layer expects {}",
                h.cols(),
                p.in_width(model)
            )));
        }
        let z = match model {
            ModelId::Gcn => {
                let a = normalize(g, NormKind::SymNorm)?;
                let ah = self.spmm(&a, h)?;
                self.gemm(&ah, &p.weight)?
            }
            ModelId::SageMean => {
                let a = normalize(g, NormKind::SelfLoopRwNorm)?;
                let ah = self.spmm(&a, h)?;
                self.gemm(&ah, &p.weight)?
            }
            ModelId::Gin => {
                let a = normalize(g, NormKind::Raw)?;
                let mut x = self.spmm(&a, h)?;
                x.axpy(1.0 + spec.hyper.epsilon, h)?;
                self.meter.dense_madds += (h.rows() * h.cols()) as u64;
                self.meter.depth += 1;
                for (d, w) in p.mlp.iter().enumerate() {
                    x = self.gemm(&x, w)?;
                    if d + 1 < p.mlp.len() {
                        x = activate(x, Activation::Relu);
                        self.meter.depth += 1;
                    }
                }
                x
            }
            ModelId::Commnet => {
                let a = normalize(g, NormKind::Raw)?;
                let ah = self.spmm(&a, h)?;
                let mut z = self.gemm(&ah, &p.weight)?;
                let hw = self.gemm(h, p.self_weight.as_ref().expect("validated"))?;
                z.axpy(1.0, &hw)?;
                self.meter.depth += 1;
                z
            }
            ModelId::VanillaAttn => {
                let a = normalize(g, NormKind::Raw)?;
                let s = self.masked_gram(&a, h)?;
                let sh = self.spmm(&s, h)?;
                self.gemm(&sh, &p.weight)?
            }
            ModelId::Edgeconv1 => {
                let a = normalize(g, NormKind::Raw)?;
                let ah = self.spmm(&a, h)?;
                self.gemm(&ah, &p.weight)?
            }
            _ => unreachable!("linear rows only"),
        };
        self.meter.depth += p.activation.depth();
        Ok(activate(z, p.activation))
    }

    /// Forward pass of the global formulation.
    pub fn forward(&mut self, g: &Graph, x: &FeatureMatrix, spec: &ModelSpec) -> Result<FeatureMatrix> {
        let model = spec.model;
        let gl = model.gl_type().ok_or(GnnError::NoGlobalFormulation(model.name()))?;
        if x.rows() != g.n() {
            return Err(shape_err(format!("X has {} rows for n = {}", x.rows(), g.n())));
        }
        match gl {
            GlType::Linear => {
                let mut h = x.clone();
                for p in &spec.layers {
                    h = self.linear_layer(g, spec, p, &h)?;
                }
                Ok(h)
            }
            GlType::Polynomial | GlType::Rational => {
                let Some(p) = spec.layers.first() else {
                    return Ok(x.clone());
                };
                if x.cols() != p.in_width(model) {
                    return Err(shape_err(format!(
                        "X has {} columns, layer expects {}",
                        x.cols(),
                        p.in_width(model)
                    )));
                }
                let z = if gl == GlType::Polynomial {
                    let kind = if model == ModelId::Sgc {
                        NormKind::SymNorm
                    } else {
                        NormKind::RwNorm
                    };
                    let a = normalize(g, kind)?;
                    let ph = self.poly_apply(&spec.poly_coefficients(), &a, x)?;
                    self.gemm(&ph, &p.weight)?
                } else {
                    let a = normalize(g, NormKind::SymNorm)?;
                    let hw = self.gemm(x, &p.weight)?;
                    let form = rational_form(spec).expect("rational row");
                    self.rational_apply(form, &a, &hw, DEFAULT_TOL)?.0
                };
                self.meter.depth += p.activation.depth();
                Ok(activate(z, p.activation))
            }
        }
    }
}

/// Forward pass of the global formulation.
pub fn gl_forward(g: &Graph, x: &FeatureMatrix, spec: &ModelSpec, mode: ExecMode) -> Result<FeatureMatrix> {
    GlEngine::new(mode).forward(g, x, spec)
}
