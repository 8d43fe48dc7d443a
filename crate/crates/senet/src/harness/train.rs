//! SGD training on the shrinkage exemplar loss.
//!
//! Gradients follow the detached-filter convention and chain through the
//! backbone's affine maps by hand. Batches are sampled from one seeded
//! stream; episode losses within a batch may be computed in parallel but
//! are summed in episode order, so training is bit-reproducible.

use super::backbone::Backbone;
use super::data::Dataset;
use super::episode::{sample_episode, AugmentMode, Episode};
use super::eval::embed_episode;
use crate::classifier::TaskConfig;
use crate::error::{Result, SenetError};
use crate::loss::{embedding_gradient, senet_loss, EmbeddingGradients};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Piecewise-constant learning-rate factors, milestones as fractions of the
/// configured epoch count.
const LR_MILESTONES: [(f64, f64); 5] = [
    (0.0, 1.0),
    (0.15, 0.025),
    (0.375, 0.0032),
    (0.5625, 0.0014),
    (0.7125, 0.00052),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub episodes_per_batch: usize,
    pub learning_rate: f64,
    pub task: TaskConfig,
    pub augment: AugmentMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            way: 5,
            shot: 5,
            query: 10,
            epochs: 5,
            batches_per_epoch: 50,
            episodes_per_batch: 4,
            learning_rate: 0.01,
            task: TaskConfig::default(),
            augment: AugmentMode::Flip,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.episodes_per_batch == 0 {
            return Err(SenetError::InvalidConfig(
                "epochs, batches_per_epoch and episodes_per_batch must all be >= 1".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(SenetError::InvalidConfig(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        self.task.validate()
    }

    /// Learning rate in force during the given epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let mut factor = LR_MILESTONES[0].1;
        for &(frac, f) in &LR_MILESTONES[1..] {
            let milestone = (frac * self.epochs as f64).round() as usize;
            if epoch >= milestone && milestone > 0 {
                factor = f;
            }
        }
        self.learning_rate * factor
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub backbone: Backbone,
    /// Mean episode loss of each batch, epochs * batches_per_epoch entries.
    pub loss_history: Vec<f64>,
}

/// Train the backbone with SGD over sampled episodes.
pub fn train(dataset: &Dataset, backbone: &Backbone, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if backbone.input_dim() != dataset.input_dim() {
        return Err(SenetError::DimensionMismatch {
            expected: dataset.input_dim(),
            got: backbone.input_dim(),
        });
    }
    if backbone.num_parameters() == 0 {
        return Err(SenetError::InvalidConfig(
            "backbone has no trainable parameters".into(),
        ));
    }

    let mut model = backbone.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut loss_history = Vec::with_capacity(config.epochs * config.batches_per_epoch);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        for batch in 0..config.batches_per_epoch {
            let global_batch = epoch * config.batches_per_epoch + batch;

            let episodes: Vec<Episode> = (0..config.episodes_per_batch)
                .map(|_| {
                    Ok(
                        sample_episode(dataset, config.way, config.shot, config.query, &mut rng)?
                            .with_single_shot_augmentation(config.augment),
                    )
                })
                .collect::<Result<_>>()?;

            // Numeric failures inside a batch are divergence; anything else
            // (bad labels, too few samples) keeps its own error.
            let contributions: Vec<(f64, Episode, EmbeddingGradients)> = episodes
                .into_par_iter()
                .map(|episode| {
                    let embedded = embed_episode(&episode, &model);
                    let report = senet_loss(&embedded, &config.task)?;
                    let grads = embedding_gradient(&embedded, &config.task)?;
                    Ok((report.loss, episode, grads))
                })
                .collect::<Result<_>>()
                .map_err(|err| match err {
                    SenetError::NonFinite(_) | SenetError::NoConvergence { .. } => {
                        SenetError::Diverged {
                            batch: global_batch,
                        }
                    }
                    other => other,
                })?;

            let scale = 1.0 / config.episodes_per_batch as f64;
            let mut batch_loss = 0.0;
            let mut grads = model.zero_gradients();
            for (loss, episode, embedding_grads) in &contributions {
                batch_loss += loss * scale;
                for (point, grad) in episode
                    .support_points
                    .iter()
                    .zip(&embedding_grads.supports)
                    .chain(episode.query_points.iter().zip(&embedding_grads.queries))
                {
                    let scaled: Vec<f64> = grad.iter().map(|g| g * scale).collect();
                    model.accumulate_gradients(point, &scaled, &mut grads);
                }
            }

            if !batch_loss.is_finite() {
                return Err(SenetError::Diverged {
                    batch: global_batch,
                });
            }
            loss_history.push(batch_loss);
            model.apply_gradients(&grads, lr);
        }
    }

    Ok(TrainOutcome {
        backbone: model,
        loss_history,
    })
}
