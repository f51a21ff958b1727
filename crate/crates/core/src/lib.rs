//! Graph metric learning for binary spike prediction.
//!
//! A Mahalanobis metric `M ⪰ 0` over visual features defines edge weights
//! `exp(−(fᵢ−fⱼ)ᵀM(fᵢ−fⱼ))` of a temporal similarity graph. `M` is trained by
//! GLR or GLMNN (the latter via Gershgorin-disc linearised LPs or a
//! reference interior-point solver), and unlabeled bins are filled in by
//! harmonic inference on the expanded graph.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod bench;
pub mod config;
pub mod eig;
pub mod error;
pub mod gdpa;
pub mod glmnn;
pub mod glr;
pub mod graph;
pub mod infer;
pub mod ingest;
pub mod interpret;
pub mod linalg;
pub mod lp;
pub mod oracle;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mat = linalg::Matrix<f64>;
pub type Metric = graph::MetricMatrix<f64>;
pub type Features = ingest::FeatureTable<f64>;
pub type Graph = graph::SimilarityGraph<f64>;
pub type Problem = glmnn::GlmnnProblem<f64>;

pub type Mat32 = linalg::Matrix<f32>;
pub type Metric32 = graph::MetricMatrix<f32>;
