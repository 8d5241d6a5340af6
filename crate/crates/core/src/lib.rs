//! Class-level embeddings built from sparse, layered network activations.
//!
//! Per-image activation vectors are aggregated into one vector per image
//! class ([`pipeline`]), compared with cosine or Euclidean distance, and then
//! analyzed: rank correlation against a hypernym taxonomy ([`eval`],
//! [`taxonomy`]), low-dimensional maps ([`manifold`]) and vector
//! subtraction queries ([`equation`]). [`synth`] generates seeded datasets
//! with a planted taxonomy signal for end-to-end checks.

pub mod equation;
pub mod error;
pub mod eval;
pub mod io;
pub mod manifold;
pub mod matrix;
pub mod pipeline;
pub mod synth;
pub mod taxonomy;
pub mod vector;

pub use equation::{EquationOptions, EquationQuery, EquationResult, Neighbor};
pub use error::{Error, Result};
pub use eval::{MeasureSetting, RhoDistribution};
pub use io::{ActivationRecord, ClassMap};
pub use manifold::{classical_mds, isomap, EmbeddingCoordinates};
pub use matrix::DistanceMatrix;
pub use pipeline::{Aggregation, ClassEmbedding, ClassEmbeddings, Metric, NormScope, NormStage, PipelineConfig};
pub use taxonomy::{IcTable, Measure, Taxonomy};
pub use vector::{Layer, LayerManifest, SparseActivationVector};
