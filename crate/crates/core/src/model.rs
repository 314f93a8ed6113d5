//! Declarative model descriptions for the 21 supported model ids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{GnnError, Result};
use crate::rng::{glorot, uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Gcn,
    SageMean,
    Gin,
    Commnet,
    VanillaAttn,
    Monet,
    Gat,
    AgnnCosine,
    Ggcn,
    SagePool,
    Edgeconv1,
    Edgeconv5,
    Sgc,
    Deepwalk,
    Chebnet,
    DcnnGdc,
    Node2vec,
    LineSdne,
    Autoregress,
    Ppnp,
    ArmaParwalks,
}

/// Complexity class of the per-edge function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelClass {
    #[serde(rename = "C-GNN")]
    CGnn,
    #[serde(rename = "A-GNN")]
    AGnn,
    #[serde(rename = "MP-GNN")]
    MpGnn,
}

/// Power of the adjacency used by a global formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GlType {
    Linear,
    Polynomial,
    Rational,
}

/// Which vertices a layer aggregates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighborhood {
    /// `N(i)`.
    N,
    /// `N(i) ∪ {i}`.
    NHat,
    /// In-neighbors; equal to `N(i)` on the symmetric graphs stored here.
    NPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at pre-activation `x`; ReLU uses `σ'(0) = 0`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Elementwise depth contributed by the activation.
    pub fn depth(self) -> u64 {
        u64::from(self != Activation::None)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const ALL_MODELS: [ModelId; 21] = [
    ModelId::Gcn,
    ModelId::SageMean,
    ModelId::Gin,
    ModelId::Commnet,
    ModelId::VanillaAttn,
    ModelId::Monet,
    ModelId::Gat,
    ModelId::AgnnCosine,
    ModelId::Ggcn,
    ModelId::SagePool,
    ModelId::Edgeconv1,
    ModelId::Edgeconv5,
    ModelId::Sgc,
    ModelId::Deepwalk,
    ModelId::Chebnet,
    ModelId::DcnnGdc,
    ModelId::Node2vec,
    ModelId::LineSdne,
    ModelId::Autoregress,
    ModelId::Ppnp,
    ModelId::ArmaParwalks,
];

/// Models with both a local and a global formulation.
pub const DUAL_MODELS: [ModelId; 6] = [
    ModelId::Gcn,
    ModelId::SageMean,
    ModelId::Gin,
    ModelId::Commnet,
    ModelId::VanillaAttn,
    ModelId::Edgeconv1,
];

impl ModelId {
    pub fn name(self) -> &'static str {
        match self {
            ModelId::Gcn => "gcn",
            ModelId::SageMean => "sage_mean",
            ModelId::Gin => "gin",
            ModelId::Commnet => "commnet",
            ModelId::VanillaAttn => "vanilla_attn",
            ModelId::Monet => "monet",
            ModelId::Gat => "gat",
            ModelId::AgnnCosine => "agnn_cosine",
            ModelId::Ggcn => "ggcn",
            ModelId::SagePool => "sage_pool",
            ModelId::Edgeconv1 => "edgeconv1",
            ModelId::Edgeconv5 => "edgeconv5",
            ModelId::Sgc => "sgc",
            ModelId::Deepwalk => "deepwalk",
            ModelId::Chebnet => "chebnet",
            ModelId::DcnnGdc => "dcnn_gdc",
            ModelId::Node2vec => "node2vec",
            ModelId::LineSdne => "line_sdne",
            ModelId::Autoregress => "autoregress",
            ModelId::Ppnp => "ppnp",
            ModelId::ArmaParwalks => "arma_parwalks",
        }
    }

    /// Local (per-edge/per-vertex) formulation available.
    pub fn has_local(self) -> bool {
        self.class().is_some()
    }

    /// Global (matrix) formulation available.
    pub fn has_global(self) -> bool {
        self.gl_type().is_some()
    }

    pub fn class(self) -> Option<ModelClass> {
        use ModelId::*;
        match self {
            Gcn | SageMean | Gin | Commnet => Some(ModelClass::CGnn),
            VanillaAttn | Monet | Gat | AgnnCosine => Some(ModelClass::AGnn),
            Ggcn | SagePool | Edgeconv1 | Edgeconv5 => Some(ModelClass::MpGnn),
            _ => None,
        }
    }

    pub fn gl_type(self) -> Option<GlType> {
        use ModelId::*;
        match self {
            Gcn | SageMean | Gin | Commnet | VanillaAttn | Edgeconv1 => Some(GlType::Linear),
            Sgc | Deepwalk | Chebnet | DcnnGdc | Node2vec | LineSdne => Some(GlType::Polynomial),
            Autoregress | Ppnp | ArmaParwalks => Some(GlType::Rational),
            _ => None,
        }
    }

    pub fn neighborhood(self) -> Neighborhood {
        use ModelId::*;
        match self {
            Gcn | SageMean | Monet | Gat | AgnnCosine => Neighborhood::NHat,
            Commnet | Ggcn | Edgeconv1 | Edgeconv5 => Neighborhood::NPlus,
            _ => Neighborhood::N,
        }
    }

    pub fn reducer(self) -> Reducer {
        match self {
            ModelId::SageMean => Reducer::Mean,
            ModelId::SagePool | ModelId::Edgeconv5 => Reducer::Max,
            _ => Reducer::Sum,
        }
    }

    /// Per-edge coefficients can be precomputed from structure alone.
    pub fn preprocessable(self) -> bool {
        self.class() == Some(ModelClass::CGnn)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self> {
        ALL_MODELS
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| GnnError::InvalidParameter(format!("unknown model id '{s}'")))
    }
}

/// Parameters of one layer. Optional fields are populated only for the
/// models that read them.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub activation: Activation,
    /// Main projection `W`, shape `k_in × k_out` (`2·k_in × k_out` for
    /// sage_pool, unused by gin which reads `mlp`).
    pub weight: DenseMatrix,
    /// commnet `W₁` (applied to `h_i`); edgeconv5 `W₂`.
    pub self_weight: Option<DenseMatrix>,
    /// ggcn gate matrices `W₁` (on `h_i`) and `W₂` (on `h_j`), `k_in × k_in`.
    pub gate_self: Option<DenseMatrix>,
    pub gate_neighbor: Option<DenseMatrix>,
    /// gin MLP, `K` matrices; hidden width equals `k_out`.
    pub mlp: Vec<DenseMatrix>,
    /// gat attention vector `a`, length `2·k_out`.
    pub attention: Option<Vec<f64>>,
    /// monet Gaussian mean `w_j` and inverse covariance `W_j^{-1}`.
    pub kernel_mean: Option<Vec<f64>>,
    pub kernel_inv_cov: Option<DenseMatrix>,
    /// sage_pool `W_pool` (`k_in × k_in`) and bias `w`.
    pub pool_weight: Option<DenseMatrix>,
    pub bias: Option<Vec<f64>>,
    /// agnn_cosine scalar `w`.
    pub cosine_scale: Option<f64>,
}

impl LayerParams {
    pub fn new(weight: DenseMatrix, activation: Activation) -> Self {
        Self {
            activation,
            weight,
            self_weight: None,
            gate_self: None,
            gate_neighbor: None,
            mlp: Vec::new(),
            attention: None,
            kernel_mean: None,
            kernel_inv_cov: None,
            pool_weight: None,
            bias: None,
            cosine_scale: None,
        }
    }

    /// Input width of the layer for `model`.
    pub fn in_width(&self, model: ModelId) -> usize {
        match model {
            ModelId::Gin => self.mlp.first().map_or(0, DenseMatrix::rows),
            ModelId::SagePool => self.weight.rows() / 2,
            _ => self.weight.rows(),
        }
    }

    pub fn out_width(&self, model: ModelId) -> usize {
        match model {
            ModelId::Gin => self.mlp.last().map_or(0, DenseMatrix::cols),
            _ => self.weight.cols(),
        }
    }
}

/// Scalar hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// gin `ε`.
    pub epsilon: f64,
    /// gin MLP depth `K`.
    pub mlp_depth: usize,
    /// Polynomial order (`s` for sgc, `T` elsewhere).
    pub poly_order: usize,
    /// chebnet `θ_0..θ_T`; dcnn_gdc `w_1..w_T`.
    pub coefficients: Vec<f64>,
    /// line_sdne `θ`.
    pub theta: f64,
    /// ppnp / autoregress `α`.
    pub alpha: f64,
    /// arma_parwalks `a`, `b`.
    pub a: f64,
    pub b: f64,
    /// node2vec `p`, `q`.
    pub p: f64,
    pub q: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            mlp_depth: 2,
            poly_order: 2,
            coefficients: Vec::new(),
            theta: 0.5,
            alpha: 0.5,
            a: 0.5,
            b: 1.0,
            p: 1.0,
            q: 2.0,
        }
    }
}

/// A model instance: id, per-layer parameters and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelId,
    pub layers: Vec<LayerParams>,
    pub hyper: Hyper,
}

impl ModelSpec {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Widths `k_0, …, k_L`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|l| l.in_width(self.model)).collect();
        if let Some(last) = self.layers.last() {
            w.push(last.out_width(self.model));
        }
        w
    }

    /// Polynomial coefficients over powers `0..=T` of the model's operator.
    pub fn poly_coefficients(&self) -> Vec<f64> {
        let h = &self.hyper;
        match self.model {
            ModelId::Sgc => {
                let mut c = vec![0.0; h.poly_order + 1];
                c[h.poly_order] = 1.0;
                c
            }
            ModelId::Deepwalk => vec![1.0; h.poly_order + 1],
            ModelId::Chebnet => h.coefficients.clone(),
            ModelId::DcnnGdc => std::iter::once(0.0).chain(h.coefficients.iter().copied()).collect(),
            ModelId::Node2vec => vec![1.0 / h.p, 1.0 - 1.0 / h.q, 1.0 / h.q],
            ModelId::LineSdne => vec![0.0, 1.0, h.theta],
            _ => Vec::new(),
        }
    }

    /// Checks weight chaining and hyperparameter ranges.
    pub fn validate(&self) -> Result<()> {
        let m = self.model;
        let bad = |msg: String| Err(GnnError::InvalidParameter(msg));
        for (l, w) in self.layers.windows(2).enumerate() {
            if w[0].out_width(m) != w[1].in_width(m) {
                return Err(GnnError::ShapeError(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    w[0].out_width(m),
                    l + 1,
                    w[1].in_width(m)
                )));
            }
        }
        let h = &self.hyper;
        if h.epsilon < 0.0 {
            return bad(format!("epsilon {} < 0", h.epsilon));
        }
        match m {
            ModelId::Ppnp if !(h.alpha > 0.0 && h.alpha <= 1.0) => {
                return bad(format!("ppnp alpha {} not in (0,1]", h.alpha))
            }
            ModelId::Autoregress if h.alpha < 0.0 => return bad(format!("autoregress alpha {} < 0", h.alpha)),
            ModelId::ArmaParwalks if !(0.0..1.0).contains(&h.a) => return bad(format!("arma a {} not in [0,1)", h.a)),
            ModelId::Node2vec if h.p <= 0.0 || h.q <= 0.0 => {
                return bad(format!("node2vec p={} q={} must be > 0", h.p, h.q))
            }
            ModelId::Chebnet if h.coefficients.is_empty() => return bad("chebnet needs θ_0..θ_T".into()),
            ModelId::DcnnGdc if h.coefficients.is_empty() => return bad("dcnn_gdc needs w_1..w_T".into()),
            _ => {}
        }
        if matches!(m.gl_type(), Some(GlType::Polynomial | GlType::Rational)) && self.layers.len() > 1 {
            return bad(format!("{m} runs exactly one layer"));
        }
        for (l, p) in self.layers.iter().enumerate() {
            let (kin, kout) = (p.in_width(m), p.out_width(m));
            let need = |field: &str, ok: bool| -> Result<()> {
                if ok {
                    Ok(())
                } else {
                    Err(GnnError::ShapeError(format!(
                        "{m} layer {l}: {field} missing or mis-shaped"
                    )))
                }
            };
            let square = |o: &Option<DenseMatrix>, r: usize, c: usize| {
                o.as_ref().is_some_and(|w| w.rows() == r && w.cols() == c)
            };
            match m {
                ModelId::Commnet | ModelId::Edgeconv5 => need("self_weight", square(&p.self_weight, kin, kout))?,
                ModelId::Ggcn => {
                    need("gate_self", square(&p.gate_self, kin, kin))?;
                    need("gate_neighbor", square(&p.gate_neighbor, kin, kin))?;
                }
                ModelId::Gin => {
                    need("mlp", !p.mlp.is_empty())?;
                    need("mlp chain", p.mlp.windows(2).all(|w| w[0].cols() == w[1].rows()))?;
                }
                ModelId::Gat => need("attention", p.attention.as_ref().is_some_and(|a| a.len() == 2 * kout))?,
                ModelId::Monet => {
                    need("kernel_mean", p.kernel_mean.as_ref().is_some_and(|w| w.len() == kin))?;
                    need("kernel_inv_cov", square(&p.kernel_inv_cov, kin, kin))?;
                }
                ModelId::SagePool => {
                    need("pool_weight", square(&p.pool_weight, kin, kin))?;
                    need("bias", p.bias.as_ref().is_some_and(|b| b.len() == kin))?;
                    need("weight", p.weight.rows() == 2 * kin)?;
                }
                ModelId::AgnnCosine => need("cosine_scale", p.cosine_scale.is_some())?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Glorot-initialized instance with widths `k_0..k_L`, every layer using
    /// `activation`. Polynomial and rational models take exactly two widths.
    pub fn random(model: ModelId, widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::random_with(model, widths, activation, Hyper::for_model(model, seed), seed)
    }

    /// As [`ModelSpec::random`] with explicit hyperparameters.
    pub fn random_with(
        model: ModelId,
        widths: &[usize],
        activation: Activation,
        hyper: Hyper,
        seed: u64,
    ) -> Result<Self> {
        if widths.is_empty() {
            return Err(GnnError::InvalidParameter("need at least one width".into()));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, w) in widths.windows(2).enumerate() {
            let (kin, kout) = (w[0], w[1]);
            let s = |slot: u64| (l as u64) * 16 + slot;
            let main_rows = if model == ModelId::SagePool { 2 * kin } else { kin };
            let mut p = LayerParams::new(glorot(main_rows, kout, seed, s(0)), activation);
            match model {
                ModelId::Commnet | ModelId::Edgeconv5 => {
                    p.self_weight = Some(glorot(kin, kout, seed, s(1)));
                }
                ModelId::Ggcn => {
                    p.gate_self = Some(glorot(kin, kin, seed, s(2)));
                    p.gate_neighbor = Some(glorot(kin, kin, seed, s(3)));
                }
                ModelId::Gin => {
                    p.mlp = (0..hyper.mlp_depth)
                        .map(|d| glorot(if d == 0 { kin } else { kout }, kout, seed, s(4 + d as u64)))
                        .collect();
                }
                ModelId::Gat => {
                    p.attention = Some(uniform(1, 2 * kout, -0.5, 0.5, seed, s(12)).into_vec());
                }
                ModelId::Monet => {
                    p.kernel_mean = Some(uniform(1, kin, -0.5, 0.5, seed, s(12)).into_vec());
                    // diagonal positive-definite precision
                    let mut inv = DenseMatrix::zeros(kin, kin);
                    let d = uniform(1, kin, 0.5, 1.5, seed, s(13));
                    for i in 0..kin {
                        inv.set(i, i, d.get(0, i));
                    }
                    p.kernel_inv_cov = Some(inv);
                }
                ModelId::SagePool => {
                    p.pool_weight = Some(glorot(kin, kin, seed, s(1)));
                    p.bias = Some(uniform(1, kin, -0.1, 0.1, seed, s(12)).into_vec());
                }
                ModelId::AgnnCosine => {
                    p.cosine_scale = Some(uniform(1, 1, 0.5, 1.5, seed, s(12)).get(0, 0));
                }
                _ => {}
            }
            layers.push(p);
        }
        let spec = Self { model, layers, hyper };
        spec.validate()?;
        Ok(spec)
    }
}

impl Hyper {
    /// Defaults for `model`, with polynomial coefficients drawn from `seed`.
    pub fn for_model(model: ModelId, seed: u64) -> Self {
        let mut h = Hyper::default();
        if model == ModelId::Ppnp {
            h.alpha = 0.15;
        }
        h.resample_coefficients(model, seed);
        h
    }

    /// Redraws chebnet/dcnn_gdc coefficients to match `poly_order`.
    pub fn resample_coefficients(&mut self, model: ModelId, seed: u64) {
        match model {
            ModelId::Chebnet => {
                self.coefficients = uniform(1, self.poly_order + 1, -1.0, 1.0, seed, 999).into_vec();
            }
            ModelId::DcnnGdc => {
                self.coefficients = uniform(1, self.poly_order, 0.0, 1.0, seed, 999).into_vec();
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_names() {
        for m in ALL_MODELS {
            assert_eq!(m.name().parse::<ModelId>().unwrap(), m);
            assert!(m.has_local() || m.has_global());
        }
        assert_eq!(ALL_MODELS.iter().filter(|m| m.has_local()).count(), 12);
        assert!("nope".parse::<ModelId>().is_err());
    }

    #[test]
    fn random_specs_validate() {
        for m in ALL_MODELS {
            let widths: &[usize] = if m.has_local() || m.gl_type() == Some(GlType::Linear) {
                &[3, 4, 2]
            } else {
                &[3, 2]
            };
            let s = ModelSpec::random(m, widths, Activation::Relu, 1).unwrap();
            assert_eq!(s.widths(), widths, "{m}");
        }
    }

    #[test]
    fn hyper_ranges() {
        let mut s = ModelSpec::random(ModelId::Ppnp, &[2, 2], Activation::None, 0).unwrap();
        s.hyper.alpha = 0.0;
        assert!(s.validate().is_err());
        s.model = ModelId::ArmaParwalks;
        s.hyper.a = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn relu_subgradient_at_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert!((Activation::Sigmoid.derivative(0.0) - 0.25).abs() < 1e-15);
    }
}
