//! Episodic training and evaluation harness on synthetic data.

pub mod backbone;
pub mod data;
pub mod episode;
pub mod eval;
pub mod train;

pub use backbone::Backbone;
pub use data::{add_gaussian_noise, generate_dataset, Dataset, DatasetSpec, Geometry};
pub use episode::{augment_single_shot, sample_episode, AugmentMode, Episode};
pub use eval::{evaluate, EpisodeShape, EvalResult, Predictor};
pub use train::{train, TrainConfig, TrainOutcome};
