//! Dual-formulation GNN execution with work/depth accounting and a
//! partition-parallel staleness simulator.
//!
//! The local engine ([`lc`]) evaluates models vertex by vertex through the
//! Scatter / UpdateEdge / Aggregate / UpdateVertex kernels; the global
//! engine ([`gl`]) evaluates the same models as sparse and dense matrix
//! products. [`sim`] replays the local engine on simulated workers under
//! synchronous or bounded-staleness schedules.

pub mod cost;
pub mod dense;
pub mod error;
pub mod exec;
pub mod gl;
pub mod graph;
pub mod lc;
pub mod model;
pub mod rng;
pub mod sim;
pub mod trainer;

pub use cost::{CostReport, KernelTally};
pub use dense::{DenseMatrix, FeatureMatrix};
pub use error::{GnnError, Result};
pub use exec::ExecMode;
pub use graph::{Graph, Partitioning, SparseOperator};
pub use model::{Activation, ModelId, ModelSpec};
