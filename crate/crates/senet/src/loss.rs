//! Shrinkage exemplar loss and its gradients.
//!
//! The loss is the negative mean log posterior of each query's true class,
//! where the posterior sums match probabilities over the same-class
//! supports. Gradients with respect to embeddings follow the detached-filter
//! convention: the filter matrix of each class is held constant for the
//! step, while the class mean stays a live function of the support
//! embeddings. At lambda = 0 the filter is exactly the identity, so the
//! detached gradient is the exact gradient of the full loss.

use crate::classifier::{
    class_posterior, dist_s1, dist_s2, distance_matrix, predict, probabilities_from_distances,
    DistanceVariant, EmbeddedEpisode, TaskConfig,
};
use crate::error::{Result, SenetError};
use crate::linalg::{scatter_and_mean, sub, SymMatrix};

/// Loss value plus the per-query diagnostics behind it.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub loss: f64,
    pub per_query_log_posterior: Vec<f64>,
    pub accuracy: f64,
    pub predicted_labels: Vec<usize>,
}

/// Partial derivatives of the loss with respect to each query-support
/// distance, indexed like the probability matrix.
#[derive(Debug, Clone)]
pub struct DistanceGradient {
    pub entries: Vec<Vec<f64>>,
}

/// Gradients of the loss with respect to every support and query embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingGradients {
    pub supports: Vec<Vec<f64>>,
    pub queries: Vec<Vec<f64>>,
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn check_query_labels(episode: &EmbeddedEpisode) -> Result<()> {
    for &y in &episode.query_labels {
        if !episode.support_labels.contains(&y) {
            return Err(SenetError::LabelNotInEpisode(y));
        }
    }
    Ok(())
}

/// Loss of a distance matrix: -mean over queries of
/// log(sum of same-class probabilities), computed in log space.
pub fn loss_from_distances(
    distances: &[Vec<f64>],
    support_labels: &[usize],
    query_labels: &[usize],
    alpha: f64,
) -> Result<f64> {
    let lp = log_posteriors_from_distances(distances, support_labels, query_labels, alpha)?;
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}

fn log_posteriors_from_distances(
    distances: &[Vec<f64>],
    support_labels: &[usize],
    query_labels: &[usize],
    alpha: f64,
) -> Result<Vec<f64>> {
    if distances.len() != query_labels.len() {
        return Err(SenetError::LabelMisalignment(format!(
            "{} distance rows but {} query labels",
            distances.len(),
            query_labels.len()
        )));
    }
    distances
        .iter()
        .zip(query_labels)
        .map(|(row, &y)| {
            if row.len() != support_labels.len() {
                return Err(SenetError::LabelMisalignment(format!(
                    "distance row has {} entries but {} support labels",
                    row.len(),
                    support_labels.len()
                )));
            }
            if !support_labels.contains(&y) {
                return Err(SenetError::LabelNotInEpisode(y));
            }
            let all = log_sum_exp(row.iter().map(|&d| -alpha * d));
            let same = log_sum_exp(
                row.iter()
                    .zip(support_labels)
                    .filter(|(_, &l)| l == y)
                    .map(|(&d, _)| -alpha * d),
            );
            let lp = same - all;
            if lp.is_nan() {
                return Err(SenetError::NonFinite("log posterior".into()));
            }
            Ok(lp)
        })
        .collect()
}

fn report_from_distances(
    distances: &[Vec<f64>],
    support_labels: &[usize],
    query_labels: &[usize],
    alpha: f64,
) -> Result<LossReport> {
    let per_query_log_posterior =
        log_posteriors_from_distances(distances, support_labels, query_labels, alpha)?;
    let loss = -per_query_log_posterior.iter().sum::<f64>() / per_query_log_posterior.len() as f64;
    let probabilities = probabilities_from_distances(distances, alpha)?;
    let posteriors = class_posterior(&probabilities, support_labels)?;
    let predicted_labels = predict(&posteriors);
    let correct = predicted_labels
        .iter()
        .zip(query_labels)
        .filter(|(p, y)| p == y)
        .count();
    let accuracy = correct as f64 / query_labels.len() as f64;
    Ok(LossReport {
        loss,
        per_query_log_posterior,
        accuracy,
        predicted_labels,
    })
}

/// Shrinkage exemplar loss of one episode, filters built from its supports.
pub fn senet_loss(episode: &EmbeddedEpisode, config: &TaskConfig) -> Result<LossReport> {
    config.validate()?;
    if episode.query_embeddings.is_empty() {
        return Err(SenetError::InsufficientSamples(
            "episode has no queries".into(),
        ));
    }
    check_query_labels(episode)?;
    let filters = episode.build_filters(&config.shrinkage)?;
    let distances = distance_matrix(
        &episode.query_embeddings,
        &episode.support_embeddings,
        &episode.support_labels,
        &filters,
        config.variant,
    )?;
    report_from_distances(
        &distances,
        &episode.support_labels,
        &episode.query_labels,
        config.alpha,
    )
}

/// Loss of one episode with the filter matrices pinned to given values.
/// Class means are still recomputed from the episode's current supports,
/// matching the detached-filter gradient convention.
pub fn senet_loss_frozen(
    episode: &EmbeddedEpisode,
    frozen_matrices: &[SymMatrix],
    config: &TaskConfig,
) -> Result<LossReport> {
    config.validate()?;
    check_query_labels(episode)?;
    if frozen_matrices.len() != episode.num_classes {
        return Err(SenetError::LabelMisalignment(format!(
            "{} frozen matrices for {} classes",
            frozen_matrices.len(),
            episode.num_classes
        )));
    }
    let means: Vec<Vec<f64>> = (0..episode.num_classes)
        .map(|c| {
            let supports = episode.supports_of(c);
            if supports.is_empty() {
                return Err(SenetError::EmptyClass);
            }
            Ok(scatter_and_mean(&supports)?.0)
        })
        .collect::<Result<_>>()?;
    let distances: Vec<Vec<f64>> = episode
        .query_embeddings
        .iter()
        .map(|q| {
            episode
                .support_embeddings
                .iter()
                .zip(&episode.support_labels)
                .map(|(s, &c)| match config.variant {
                    DistanceVariant::S1 => dist_s1(q, s, &frozen_matrices[c]),
                    DistanceVariant::S2 => dist_s2(q, s, &means[c], &frozen_matrices[c]),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    report_from_distances(
        &distances,
        &episode.support_labels,
        &episode.query_labels,
        config.alpha,
    )
}

/// Analytic dL/dd for every query-support pair. Same-class entries are
/// nonnegative (shrinking that distance lowers the loss is descent on it);
/// other-class entries are nonpositive.
pub fn loss_distance_gradient(
    distances: &[Vec<f64>],
    support_labels: &[usize],
    query_labels: &[usize],
    alpha: f64,
) -> Result<DistanceGradient> {
    if distances.len() != query_labels.len() {
        return Err(SenetError::LabelMisalignment(format!(
            "{} distance rows but {} query labels",
            distances.len(),
            query_labels.len()
        )));
    }
    let p = probabilities_from_distances(distances, alpha)?;
    let m = distances.len() as f64;
    let entries = p
        .entries
        .iter()
        .zip(query_labels)
        .map(|(row, &y)| {
            let same_mass: f64 = row
                .iter()
                .zip(support_labels)
                .filter(|(_, &l)| l == y)
                .map(|(&p, _)| p)
                .sum();
            row.iter()
                .zip(support_labels)
                .map(|(&p_li, &l)| {
                    if l == y {
                        (alpha / m) * (p_li / same_mass - p_li)
                    } else {
                        -(alpha / m) * p_li
                    }
                })
                .collect()
        })
        .collect();
    Ok(DistanceGradient { entries })
}

/// Detached-filter gradient of the loss with respect to every embedding.
///
/// The filter matrices are built from the current supports and then treated
/// as constants; the class means remain differentiated wherever they appear
/// in the distances. This is the exact gradient of `senet_loss_frozen` at
/// the current point, and of the full loss when lambda = 0.
pub fn embedding_gradient(
    episode: &EmbeddedEpisode,
    config: &TaskConfig,
) -> Result<EmbeddingGradients> {
    config.validate()?;
    check_query_labels(episode)?;
    let filters = episode.build_filters(&config.shrinkage)?;
    let distances = distance_matrix(
        &episode.query_embeddings,
        &episode.support_embeddings,
        &episode.support_labels,
        &filters,
        config.variant,
    )?;
    let weights = loss_distance_gradient(
        &distances,
        &episode.support_labels,
        &episode.query_labels,
        config.alpha,
    )?;

    let dim = filters[0].dim();
    let mut supports = vec![vec![0.0; dim]; episode.support_embeddings.len()];
    let mut queries = vec![vec![0.0; dim]; episode.query_embeddings.len()];

    // Support indices grouped per class, for the mean terms.
    let mut class_members: Vec<Vec<usize>> = vec![Vec::new(); episode.num_classes];
    for (i, &c) in episode.support_labels.iter().enumerate() {
        class_members[c].push(i);
    }

    for (l, q) in episode.query_embeddings.iter().enumerate() {
        for (i, (s, &c)) in episode
            .support_embeddings
            .iter()
            .zip(&episode.support_labels)
            .enumerate()
        {
            let w = weights.entries[l][i];
            if w == 0.0 {
                continue;
            }
            let filter = &filters[c];
            match config.variant {
                DistanceVariant::S1 => {
                    // d = ||M (q - s)||^2, so dd/dq = 2 M M (q - s) = -dd/ds.
                    let r = filter.filter_matrix.matvec(&sub(q, s))?;
                    let mr = filter.filter_matrix.matvec(&r)?;
                    for k in 0..dim {
                        queries[l][k] += w * 2.0 * mr[k];
                        supports[i][k] -= w * 2.0 * mr[k];
                    }
                }
                DistanceVariant::S2 => {
                    // d = ||r||^2 with r = q - mu - M (s - mu); mu is the live
                    // mean of the K class supports.
                    let shrunk = filter.filter_matrix.matvec(&sub(s, &filter.mean))?;
                    let r: Vec<f64> = (0..dim)
                        .map(|k| q[k] - filter.mean[k] - shrunk[k])
                        .collect();
                    let mr = filter.filter_matrix.matvec(&r)?;
                    let k_c = class_members[c].len() as f64;
                    for k in 0..dim {
                        queries[l][k] += w * 2.0 * r[k];
                        supports[i][k] -= w * 2.0 * mr[k];
                    }
                    // Every class member moves the live mean by 1/K.
                    for &j in &class_members[c] {
                        for k in 0..dim {
                            supports[j][k] += w * (2.0 / k_c) * (mr[k] - r[k]);
                        }
                    }
                }
            }
        }
    }

    Ok(EmbeddingGradients { supports, queries })
}
