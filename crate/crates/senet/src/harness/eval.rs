//! Episode evaluation with 95% confidence intervals.
//!
//! Episodes run in parallel with per-episode derived seeds (base seed plus
//! episode index), so results do not depend on thread count.

use super::backbone::Backbone;
use super::data::Dataset;
use super::episode::{sample_episode, AugmentMode, Episode};
use crate::classifier::{
    class_posterior, pairwise_probabilities, predict, probabilities_from_distances,
    prototype_posterior, EmbeddedEpisode, TaskConfig,
};
use crate::error::{Result, SenetError};
use crate::linalg::{scatter_and_mean, squared_distance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Episode protocol: ways, shots, total queries, and the augmentation rule
/// applied to 1-shot episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeShape {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub augment: AugmentMode,
}

impl EpisodeShape {
    pub fn new(way: usize, shot: usize, query: usize) -> Self {
        EpisodeShape {
            way,
            shot,
            query,
            augment: AugmentMode::Flip,
        }
    }
}

/// Which classifier scores the queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    /// The shrinkage exemplar pipeline.
    Shrinkage(TaskConfig),
    /// Plain exemplar predictor on raw squared Euclidean distances; shares
    /// nothing with the filter machinery.
    Exemplar { alpha: f64 },
    /// Prototype predictor on distances to class means.
    Prototype { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean_accuracy: f64,
    pub ci95_halfwidth: f64,
    pub episodes: usize,
    pub per_episode_accuracies: Vec<f64>,
}

pub fn embed_episode(episode: &Episode, backbone: &Backbone) -> EmbeddedEpisode {
    EmbeddedEpisode {
        num_classes: episode.way,
        support_embeddings: episode
            .support_points
            .iter()
            .map(|p| backbone.forward(p))
            .collect(),
        support_labels: episode.support_labels.clone(),
        query_embeddings: episode
            .query_points
            .iter()
            .map(|p| backbone.forward(p))
            .collect(),
        query_labels: episode.query_labels.clone(),
    }
}

/// Per-query class posteriors of one embedded episode under a predictor.
pub fn episode_posteriors(
    embedded: &EmbeddedEpisode,
    predictor: &Predictor,
) -> Result<Vec<Vec<f64>>> {
    match predictor {
        Predictor::Shrinkage(config) => {
            let filters = embedded.build_filters(&config.shrinkage)?;
            let p = pairwise_probabilities(
                &embedded.query_embeddings,
                &embedded.support_embeddings,
                &embedded.support_labels,
                &filters,
                config,
            )?;
            class_posterior(&p, &embedded.support_labels)
        }
        Predictor::Exemplar { alpha } => {
            let distances: Vec<Vec<f64>> = embedded
                .query_embeddings
                .iter()
                .map(|q| {
                    embedded
                        .support_embeddings
                        .iter()
                        .map(|s| squared_distance(q, s))
                        .collect()
                })
                .collect();
            let p = probabilities_from_distances(&distances, *alpha)?;
            class_posterior(&p, &embedded.support_labels)
        }
        Predictor::Prototype { alpha } => {
            let means: Vec<Vec<f64>> = (0..embedded.num_classes)
                .map(|c| {
                    let supports = embedded.supports_of(c);
                    if supports.is_empty() {
                        return Err(SenetError::EmptyClass);
                    }
                    Ok(scatter_and_mean(&supports)?.0)
                })
                .collect::<Result<_>>()?;
            prototype_posterior(&embedded.query_embeddings, &means, *alpha)
        }
    }
}

fn episode_accuracy(
    dataset: &Dataset,
    backbone: &Backbone,
    predictor: &Predictor,
    shape: &EpisodeShape,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episode = sample_episode(dataset, shape.way, shape.shot, shape.query, &mut rng)?
        .with_single_shot_augmentation(shape.augment);
    let embedded = embed_episode(&episode, backbone);
    let posteriors = episode_posteriors(&embedded, predictor)?;
    let predicted = predict(&posteriors);
    let correct = predicted
        .iter()
        .zip(&embedded.query_labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / embedded.query_labels.len() as f64)
}

/// Evaluate a predictor over seeded episodes. Episode e uses seed
/// `seed + e`, so runs with the same arguments are identical and different
/// predictors on the same seed see the same episodes.
pub fn evaluate(
    dataset: &Dataset,
    backbone: &Backbone,
    predictor: &Predictor,
    shape: &EpisodeShape,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(SenetError::InvalidConfig("episodes must be >= 1".into()));
    }
    if backbone.input_dim() != dataset.input_dim() {
        return Err(SenetError::DimensionMismatch {
            expected: dataset.input_dim(),
            got: backbone.input_dim(),
        });
    }
    let per_episode_accuracies: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|e| {
            episode_accuracy(
                dataset,
                backbone,
                predictor,
                shape,
                seed.wrapping_add(e as u64),
            )
        })
        .collect::<Result<_>>()?;

    let n = episodes as f64;
    let mean_accuracy = per_episode_accuracies.iter().sum::<f64>() / n;
    let variance = per_episode_accuracies
        .iter()
        .map(|a| (a - mean_accuracy) * (a - mean_accuracy))
        .sum::<f64>()
        / n;
    let ci95_halfwidth = 1.96 * variance.sqrt() / n.sqrt();
    Ok(EvalResult {
        mean_accuracy,
        ci95_halfwidth,
        episodes,
        per_episode_accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::DistanceVariant;
    use crate::harness::data::{generate_dataset, DatasetSpec, Geometry};

    fn isotropic(noise_sigma: f64, seed: u64) -> Dataset {
        generate_dataset(&DatasetSpec {
            num_classes: 5,
            samples_per_class: 30,
            input_dim: 8,
            geometry: Geometry::IsotropicGaussian,
            noise_sigma,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn separable_data_scores_perfectly() {
        let ds = isotropic(0.0, 1);
        let backbone = Backbone::identity(8);
        let result = evaluate(
            &ds,
            &backbone,
            &Predictor::Shrinkage(TaskConfig::new(1.0, DistanceVariant::S2, 10.0)),
            &EpisodeShape::new(5, 5, 10),
            50,
            7,
        )
        .unwrap();
        assert_eq!(result.mean_accuracy, 1.0);
        assert_eq!(result.ci95_halfwidth, 0.0);
    }

    #[test]
    fn indistinguishable_classes_score_chance() {
        // Five classes drawn from one shared distribution: no predictor can
        // beat 1/C.
        use rand::{Rng, SeedableRng};
        let base = isotropic(1.0, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let class_samples: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..30)
                    .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let ds = Dataset {
            spec: base.spec.clone(),
            class_samples,
        };
        let backbone = Backbone::identity(8);
        for predictor in [
            Predictor::Shrinkage(TaskConfig::new(1.0, DistanceVariant::S1, 100.0)),
            Predictor::Shrinkage(TaskConfig::new(1.0, DistanceVariant::S2, 0.0)),
            Predictor::Prototype { alpha: 1.0 },
        ] {
            let result = evaluate(
                &ds,
                &backbone,
                &predictor,
                &EpisodeShape::new(5, 3, 10),
                300,
                11,
            )
            .unwrap();
            let chance = 0.2;
            assert!(
                (result.mean_accuracy - chance).abs() <= 2.5 * result.ci95_halfwidth.max(1e-3),
                "accuracy {} too far from chance {chance} (ci {})",
                result.mean_accuracy,
                result.ci95_halfwidth
            );
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let ds = isotropic(0.8, 3);
        let backbone = Backbone::identity(8);
        let predictor = Predictor::Shrinkage(TaskConfig::new(1.0, DistanceVariant::S1, 5.0));
        let shape = EpisodeShape::new(5, 5, 10);
        let a = evaluate(&ds, &backbone, &predictor, &shape, 100, 13).unwrap();
        let b = evaluate(&ds, &backbone, &predictor, &shape, 100, 13).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shrinkage_limits_match_independent_predictors_per_episode() {
        let ds = isotropic(0.6, 4);
        let backbone = Backbone::identity(8);
        let shape = EpisodeShape::new(5, 5, 10);
        let episodes = 100;
        let seed = 17;

        for variant in [DistanceVariant::S1, DistanceVariant::S2] {
            let zero = evaluate(
                &ds,
                &backbone,
                &Predictor::Shrinkage(TaskConfig::new(1.0, variant, 0.0)),
                &shape,
                episodes,
                seed,
            )
            .unwrap();
            let exemplar = evaluate(
                &ds,
                &backbone,
                &Predictor::Exemplar { alpha: 1.0 },
                &shape,
                episodes,
                seed,
            )
            .unwrap();
            assert_eq!(
                zero.per_episode_accuracies, exemplar.per_episode_accuracies,
                "lambda 0 with {variant:?} diverged from the exemplar predictor"
            );
        }

        let proto_limit = evaluate(
            &ds,
            &backbone,
            &Predictor::Shrinkage(TaskConfig::new(1.0, DistanceVariant::S2, 1e12)),
            &shape,
            episodes,
            seed,
        )
        .unwrap();
        let prototype = evaluate(
            &ds,
            &backbone,
            &Predictor::Prototype { alpha: 1.0 },
            &shape,
            episodes,
            seed,
        )
        .unwrap();
        assert_eq!(
            proto_limit.per_episode_accuracies,
            prototype.per_episode_accuracies
        );
    }

    #[test]
    fn single_shot_uses_augmented_filters() {
        let ds = isotropic(0.5, 5);
        let backbone = Backbone::identity(8);
        let result = evaluate(
            &ds,
            &backbone,
            &Predictor::Shrinkage(TaskConfig::new(1.0, DistanceVariant::S1, 10.0)),
            &EpisodeShape::new(5, 1, 10),
            50,
            19,
        )
        .unwrap();
        assert!(result.mean_accuracy > 0.2);
    }
}
