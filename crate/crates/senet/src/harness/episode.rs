//! Episode sampling and the single-shot augmentation rule.

use super::data::Dataset;
use crate::error::{Result, SenetError};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// One few-shot task in input space. Supports are class-major with
/// episode-local labels 0..way; `class_ids` maps those back to dataset
/// classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub class_ids: Vec<usize>,
    pub support_points: Vec<Vec<f64>>,
    pub support_labels: Vec<usize>,
    pub query_points: Vec<Vec<f64>>,
    pub query_labels: Vec<usize>,
}

/// Sample a C-way K-shot episode with `query` queries split as evenly as
/// possible across the chosen classes. Classes and sample indices are drawn
/// without replacement; supports and queries never share a sample.
pub fn sample_episode(
    dataset: &Dataset,
    way: usize,
    shot: usize,
    query: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    if way == 0 || shot == 0 || query == 0 {
        return Err(SenetError::InvalidConfig(
            "way, shot and query must all be >= 1".into(),
        ));
    }
    if dataset.num_classes() < way {
        return Err(SenetError::InsufficientSamples(format!(
            "dataset has {} classes, episode needs {} ways",
            dataset.num_classes(),
            way
        )));
    }
    let per_class_query_max = query.div_ceil(way);
    if dataset.samples_per_class() < shot + per_class_query_max {
        return Err(SenetError::InsufficientSamples(format!(
            "dataset has {} samples per class, episode needs {}",
            dataset.samples_per_class(),
            shot + per_class_query_max
        )));
    }

    let mut class_ids: Vec<usize> = (0..dataset.num_classes()).collect();
    class_ids.shuffle(rng);
    class_ids.truncate(way);

    let mut support_points = Vec::with_capacity(way * shot);
    let mut support_labels = Vec::with_capacity(way * shot);
    let mut query_points = Vec::with_capacity(query);
    let mut query_labels = Vec::with_capacity(query);

    for (local, &class) in class_ids.iter().enumerate() {
        let samples = &dataset.class_samples[class];
        let queries_here = query / way + usize::from(local < query % way);
        let mut indices: Vec<usize> = (0..samples.len()).collect();
        indices.shuffle(rng);
        for &idx in &indices[..shot] {
            support_points.push(samples[idx].clone());
            support_labels.push(local);
        }
        for &idx in &indices[shot..shot + queries_here] {
            query_points.push(samples[idx].clone());
            query_labels.push(local);
        }
    }

    Ok(Episode {
        way,
        shot,
        class_ids,
        support_points,
        support_labels,
        query_points,
        query_labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AugmentMode {
    /// Reverse the coordinate order.
    #[default]
    Flip,
    /// Alternating +/- perturbation of size 1e-2 times the vector norm.
    Jitter,
}

impl std::str::FromStr for AugmentMode {
    type Err = SenetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flip" => Ok(AugmentMode::Flip),
            "jitter" => Ok(AugmentMode::Jitter),
            other => Err(SenetError::InvalidConfig(format!(
                "unknown augment mode '{other}', expected flip or jitter"
            ))),
        }
    }
}

/// One pseudo-support derived from a real support, so single-shot classes
/// get a nonzero scatter.
pub fn augment_single_shot(support: &[f64], mode: AugmentMode) -> Vec<f64> {
    match mode {
        AugmentMode::Flip => support.iter().rev().copied().collect(),
        AugmentMode::Jitter => {
            let eps = 1e-2 * support.iter().map(|x| x * x).sum::<f64>().sqrt();
            support
                .iter()
                .enumerate()
                .map(|(i, x)| if i % 2 == 0 { x + eps } else { x - eps })
                .collect()
        }
    }
}

impl Episode {
    /// For 1-shot episodes, append one pseudo-support per class. Flip falls
    /// back to jitter on palindromic vectors, whose flip is themselves.
    /// Queries and labels are untouched; other shot counts pass through.
    pub fn with_single_shot_augmentation(&self, mode: AugmentMode) -> Episode {
        if self.shot != 1 {
            return self.clone();
        }
        let mut out = self.clone();
        for (point, &label) in self.support_points.iter().zip(&self.support_labels) {
            let mut twin = augment_single_shot(point, mode);
            if twin == *point {
                twin = augment_single_shot(point, AugmentMode::Jitter);
            }
            out.support_points.push(twin);
            out.support_labels.push(label);
        }
        out.shot = 2;
        out
    }
}
