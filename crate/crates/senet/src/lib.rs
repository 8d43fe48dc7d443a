//! Shrinkage exemplar classification for few-shot tasks.
//!
//! Support exemplars of each class are contracted toward their class mean by
//! a per-class spectral filter whose strength is set by a single shrinkage
//! coefficient lambda. At lambda = 0 the classifier scores queries against
//! raw exemplars; as lambda grows it collapses onto the prototype (class
//! mean) or nearest-subspace predictors, depending on the distance variant.
//! An episodic harness generates synthetic datasets, trains a small
//! backbone on the shrinkage exemplar loss, and evaluates with confidence
//! intervals.

// Matrix kernels index rows and columns directly.
#![allow(clippy::needless_range_loop)]

pub mod classifier;
pub mod error;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod loss;

pub use classifier::{
    class_posterior, distance_matrix, pairwise_probabilities, predict, prototype_posterior,
    shrinkage_distance_s1, shrinkage_distance_s2, DistanceVariant, EmbeddedEpisode,
    ProbabilityMatrix, TaskConfig,
};
pub use error::{Result, SenetError};
pub use filter::{apply_filter, build_class_filter, tikhonov_gain, ClassFilter, ShrinkageConfig};
pub use linalg::{project_residual, scatter_and_mean, sym_eigen, EigenDecomposition, SymMatrix};
pub use loss::{
    embedding_gradient, loss_distance_gradient, loss_from_distances, senet_loss, senet_loss_frozen,
    DistanceGradient, EmbeddingGradients, LossReport,
};
