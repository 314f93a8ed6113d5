use std::path::{Path, PathBuf};

use gnn_core::graph::{self, PartitionStrategy};
use gnn_core::model::{Activation, Hyper, ModelId};
use gnn_core::sim::{CostParams, GradientStaleness, StalenessConfig};
use gnn_core::trainer::{community_task, Labels};
use gnn_core::{FeatureMatrix, Graph, Partitioning};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Stream id for input features drawn outside of a task generator.
pub const FEATURE_STREAM: u64 = u64::MAX - 7;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingBlock {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Edge-list file; takes precedence over `gen`.
    pub graph: Option<PathBuf>,
    /// Generator spec, e.g. `er:64:8` or `sbm:60:2:0.5:0.02`.
    pub gen: Option<String>,
    pub labels: Option<PathBuf>,
    pub model: ModelId,
    pub activation: Activation,
    /// Overrides on top of the model's default hyperparameters.
    pub hyper: Map<String, Value>,
    pub layers: usize,
    pub k: usize,
    pub hidden: usize,
    pub classes: Option<usize>,
    pub partitions: usize,
    pub strategy: PartitionStrategy,
    pub staleness: StalenessConfig,
    pub gradient_staleness: GradientStaleness,
    pub costs: CostParams,
    pub iterations: usize,
    pub training: TrainingBlock,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Vertex counts swept by `bench`; each replaces `n` in `gen`.
    pub sizes: Vec<usize>,
    /// Instances checked by `gradcheck`.
    pub instances: usize,
    /// Community feature shift for block-model tasks.
    pub shift: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: None,
            gen: None,
            labels: None,
            model: ModelId::Gcn,
            activation: Activation::Relu,
            hyper: Map::new(),
            layers: 1,
            k: 4,
            hidden: 16,
            classes: None,
            partitions: 1,
            strategy: PartitionStrategy::Hash,
            staleness: StalenessConfig::synchronous(),
            gradient_staleness: GradientStaleness::synchronous(),
            costs: CostParams::default(),
            iterations: 1,
            training: TrainingBlock {
                epochs: 200,
                lr: 0.1,
                seed: 0,
            },
            seed: 1,
            out_dir: PathBuf::from("out"),
            sizes: Vec::new(),
            instances: 10,
            shift: 0.3,
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, v) in o {
                match b.get_mut(&key) {
                    Some(slot) if key != "hyper" => merge(slot, v),
                    _ => {
                        b.insert(key, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a flag value as JSON, falling back to a bare string.
pub fn flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// `a=1,b=2` into an object.
pub fn kv_object(raw: &str) -> CliResult<Value> {
    let mut obj = Map::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got `{item}`")))?;
        obj.insert(k.trim().to_string(), flag_value(v.trim()));
    }
    Ok(Value::Object(obj))
}

impl ExperimentConfig {
    /// Defaults, then the config file, then flag overrides.
    pub fn load(file: Option<&Path>, overrides: Map<String, Value>) -> CliResult<Self> {
        let mut v = serde_json::to_value(Self::default()).expect("plain data");
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let user: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            if !user.is_object() {
                return Err(CliError::Usage(format!("{}: expected a JSON object", p.display())));
            }
            merge(&mut v, user);
        }
        merge(&mut v, Value::Object(overrides));
        let cfg: Self = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if self.graph.is_none() {
            if let Some(g) = &self.gen {
                GraphSource::parse(g)?;
            }
        }
        if self.k == 0 {
            return Err(CliError::Usage("k must be positive".into()));
        }
        if self.partitions == 0 {
            return Err(CliError::Usage("partitions must be positive".into()));
        }
        if !(self.training.lr.is_finite() && self.training.lr >= 0.0) {
            return Err(CliError::Usage(format!(
                "lr {} must be finite and >= 0",
                self.training.lr
            )));
        }
        self.costs.validate()?;
        Ok(())
    }

    pub fn source(&self) -> CliResult<GraphSource> {
        match (&self.graph, &self.gen) {
            (Some(p), _) => Ok(GraphSource::File(p.clone())),
            (None, Some(g)) => GraphSource::parse(g),
            (None, None) => Err(CliError::Usage("no graph: pass --graph or --gen".into())),
        }
    }

    pub fn hyper(&self) -> CliResult<Hyper> {
        let mut v = serde_json::to_value(Hyper::for_model(self.model, self.seed)).expect("plain data");
        merge(&mut v, Value::Object(self.hyper.clone()));
        let mut h: Hyper = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("hyper: {e}")))?;
        if self.hyper.contains_key("poly_order") && !self.hyper.contains_key("coefficients") {
            h.resample_coefficients(self.model, self.seed);
        }
        Ok(h)
    }

    /// `k` repeated `layers + 1` times.
    pub fn uniform_widths(&self) -> Vec<usize> {
        vec![self.k; self.layers + 1]
    }

    /// `k`, then `hidden` for every inner layer, then `classes`.
    pub fn training_widths(&self, classes: usize) -> Vec<usize> {
        let mut w = vec![self.k];
        if self.layers > 0 {
            w.extend(std::iter::repeat_n(self.hidden, self.layers - 1));
            w.push(classes);
        }
        w
    }

    pub fn partitioning(&self, g: &Graph) -> CliResult<Partitioning> {
        if self.partitions == 1 {
            return Ok(Partitioning::single(g.n()));
        }
        Ok(graph::partition(g, self.partitions, self.strategy)?)
    }

    pub fn features(&self, n: usize) -> FeatureMatrix {
        gnn_core::rng::uniform(n, self.k, -1.0, 1.0, self.seed, FEATURE_STREAM)
    }

    /// Features and labels for training: block-model tasks carry their own;
    /// otherwise a labels file is required and features are random.
    pub fn task(&self) -> CliResult<(Graph, FeatureMatrix, Labels)> {
        let source = self.source()?;
        if let GraphSource::Sbm { .. } = source {
            if self.labels.is_none() {
                let sbm = source.sbm(self.seed)?;
                let (x, labels) = community_task(&sbm, self.k, self.shift, self.seed)?;
                return Ok((sbm.graph, x, labels));
            }
        }
        let g = source.build(self.seed)?;
        let path = self
            .labels
            .as_ref()
            .ok_or_else(|| CliError::Usage("training needs --labels or an sbm generator".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let labels = Labels::parse(&text, g.n(), self.classes)?;
        let x = self.features(g.n());
        Ok((g, x, labels))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Er {
        n: usize,
        degree: f64,
    },
    Sbm {
        n: usize,
        communities: usize,
        p_in: f64,
        p_out: f64,
    },
    Star(usize),
    Path(usize),
    Complete(usize),
}

impl GraphSource {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let bad = |why: &str| CliError::Usage(format!("generator `{spec}`: {why}"));
        let parts: Vec<&str> = spec.split(':').collect();
        let int = |s: &str| -> CliResult<usize> {
            match s.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(bad(&format!("`{s}` is not a positive integer"))),
            }
        };
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
        let prob = |s: &str| -> CliResult<f64> {
            let p = real(s)?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(bad(&format!("probability {p} outside [0, 1]")))
            }
        };
        match parts.as_slice() {
            ["er", n, d] => {
                let degree = real(d)?;
                if degree.is_nan() || degree <= 0.0 {
                    return Err(bad("expected degree must be positive"));
                }
                Ok(Self::Er { n: int(n)?, degree })
            }
            ["sbm", n, c, pin, pout] => Ok(Self::Sbm {
                n: int(n)?,
                communities: int(c)?,
                p_in: prob(pin)?,
                p_out: prob(pout)?,
            }),
            ["star", n] => Ok(Self::Star(int(n)?)),
            ["path", n] => Ok(Self::Path(int(n)?)),
            ["complete", n] => Ok(Self::Complete(int(n)?)),
            _ => Err(bad("expected er:n:d, sbm:n:c:pin:pout, star:n, path:n or complete:n")),
        }
    }

    /// The same family at a different vertex count.
    pub fn with_n(&self, n: usize) -> CliResult<Self> {
        Ok(match self.clone() {
            Self::File(p) => return Err(CliError::Usage(format!("cannot resize file graph {}", p.display()))),
            Self::Er { degree, .. } => Self::Er { n, degree },
            Self::Sbm {
                communities,
                p_in,
                p_out,
                ..
            } => Self::Sbm {
                n,
                communities,
                p_in,
                p_out,
            },
            Self::Star(_) => Self::Star(n),
            Self::Path(_) => Self::Path(n),
            Self::Complete(_) => Self::Complete(n),
        })
    }

    pub fn sbm(&self, seed: u64) -> CliResult<graph::Sbm> {
        match *self {
            Self::Sbm {
                n,
                communities,
                p_in,
                p_out,
            } => Ok(graph::sbm(n, communities, p_in, p_out, seed)?),
            _ => Err(CliError::Usage("not a block-model generator".into())),
        }
    }

    pub fn build(&self, seed: u64) -> CliResult<Graph> {
        Ok(match self {
            Self::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                graph::parse_edge_list(&text)?
            }
            Self::Er { n, degree } => graph::erdos_renyi(*n, *degree, seed)?,
            Self::Sbm { .. } => self.sbm(seed)?.graph,
            Self::Star(n) => graph::star(*n),
            Self::Path(n) => graph::path(*n),
            Self::Complete(n) => graph::complete(*n),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_specs_parse() {
        assert_eq!(
            GraphSource::parse("er:64:8").unwrap(),
            GraphSource::Er { n: 64, degree: 8.0 }
        );
        assert_eq!(GraphSource::parse("path:5").unwrap(), GraphSource::Path(5));
        assert!(GraphSource::parse("sbm:10:2:1.5:0.1").is_err());
        assert!(GraphSource::parse("er:0:3").is_err());
        assert!(GraphSource::parse("grid:4").is_err());
    }

    #[test]
    fn nested_blocks_merge_partially() {
        let mut o = Map::new();
        o.insert("staleness".into(), kv_object("t_psi_remote=1").unwrap());
        o.insert("model".into(), flag_value("sgc"));
        let cfg = ExperimentConfig::load(None, o).unwrap();
        assert_eq!(cfg.staleness.t_psi_remote, 1);
        assert_eq!(cfg.staleness.l_phi, 1);
        assert_eq!(cfg.model, ModelId::Sgc);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut o = Map::new();
        o.insert("nodes".into(), Value::from(3));
        assert!(matches!(ExperimentConfig::load(None, o), Err(CliError::Usage(_))));
    }

    #[test]
    fn training_widths_chain() {
        let cfg = ExperimentConfig {
            layers: 2,
            k: 8,
            hidden: 16,
            ..Default::default()
        };
        assert_eq!(cfg.training_widths(2), vec![8, 16, 2]);
        let cfg = ExperimentConfig {
            layers: 0,
            ..Default::default()
        };
        assert_eq!(cfg.training_widths(2), vec![4]);
    }
}
