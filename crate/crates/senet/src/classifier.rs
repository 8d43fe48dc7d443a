//! Shrinkage distances, query-support match probabilities, and the limiting
//! predictors (exemplar, prototype).
//!
//! All probability rows are computed in log space with per-row max
//! subtraction, so large temperatures do not overflow.

use crate::error::{Result, SenetError};
use crate::filter::{build_class_filter, ClassFilter, ShrinkageConfig};
use crate::linalg::{squared_distance, sub, SymMatrix};

/// Which of the two shrinkage distances to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceVariant {
    /// Both query and support are filtered: ||M (q - s)||^2.
    S1,
    /// Only the support is filtered: ||q - mu - M (s - mu)||^2.
    S2,
}

impl DistanceVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceVariant::S1 => "s1",
            DistanceVariant::S2 => "s2",
        }
    }
}

impl std::str::FromStr for DistanceVariant {
    type Err = SenetError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(DistanceVariant::S1),
            "s2" => Ok(DistanceVariant::S2),
            other => Err(SenetError::InvalidConfig(format!(
                "unknown variant '{other}', expected s1 or s2"
            ))),
        }
    }
}

/// Temperature, distance variant, and shrinkage settings for one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskConfig {
    pub alpha: f64,
    pub variant: DistanceVariant,
    pub shrinkage: ShrinkageConfig,
}

impl TaskConfig {
    pub fn new(alpha: f64, variant: DistanceVariant, lambda: f64) -> Self {
        TaskConfig {
            alpha,
            variant,
            shrinkage: ShrinkageConfig::new(lambda),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(SenetError::InvalidConfig(format!(
                "alpha must be finite and positive, got {}",
                self.alpha
            )));
        }
        self.shrinkage.validate()
    }
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            alpha: 1.0,
            variant: DistanceVariant::S2,
            shrinkage: ShrinkageConfig::default(),
        }
    }
}

/// One episode in embedding space. Class labels are episode-local indices
/// 0..num_classes; supports are stored class-major.
#[derive(Debug, Clone)]
pub struct EmbeddedEpisode {
    pub num_classes: usize,
    pub support_embeddings: Vec<Vec<f64>>,
    pub support_labels: Vec<usize>,
    pub query_embeddings: Vec<Vec<f64>>,
    pub query_labels: Vec<usize>,
}

impl EmbeddedEpisode {
    pub fn supports_of(&self, class: usize) -> Vec<Vec<f64>> {
        self.support_embeddings
            .iter()
            .zip(&self.support_labels)
            .filter(|(_, &l)| l == class)
            .map(|(s, _)| s.clone())
            .collect()
    }

    /// Build the per-class shrinkage filters from the support embeddings.
    pub fn build_filters(&self, config: &ShrinkageConfig) -> Result<Vec<ClassFilter>> {
        (0..self.num_classes)
            .map(|c| {
                let supports = self.supports_of(c);
                if supports.is_empty() {
                    return Err(SenetError::EmptyClass);
                }
                build_class_filter(c, &supports, config)
            })
            .collect()
    }
}

/// Query-by-support match probabilities; each row sums to 1.
#[derive(Debug, Clone)]
pub struct ProbabilityMatrix {
    pub entries: Vec<Vec<f64>>,
}

impl ProbabilityMatrix {
    pub fn num_queries(&self) -> usize {
        self.entries.len()
    }

    pub fn num_supports(&self) -> usize {
        self.entries.first().map_or(0, |r| r.len())
    }
}

pub(crate) fn dist_s1(q: &[f64], s: &[f64], matrix: &SymMatrix) -> Result<f64> {
    if q.len() != s.len() {
        return Err(SenetError::DimensionMismatch {
            expected: q.len(),
            got: s.len(),
        });
    }
    let filtered = matrix.matvec(&sub(q, s))?;
    Ok(filtered.iter().map(|x| x * x).sum())
}

pub(crate) fn dist_s2(q: &[f64], s: &[f64], mean: &[f64], matrix: &SymMatrix) -> Result<f64> {
    if q.len() != s.len() {
        return Err(SenetError::DimensionMismatch {
            expected: q.len(),
            got: s.len(),
        });
    }
    let shrunk = matrix.matvec(&sub(s, mean))?;
    Ok(q.iter()
        .zip(mean)
        .zip(&shrunk)
        .map(|((qi, mi), si)| {
            let r = qi - mi - si;
            r * r
        })
        .sum())
}

/// Shrinkage distance with both sides filtered: ||M (q - s)||^2.
pub fn shrinkage_distance_s1(q: &[f64], s: &[f64], filter: &ClassFilter) -> Result<f64> {
    dist_s1(q, s, &filter.filter_matrix)
}

/// Shrinkage distance with only the support filtered:
/// ||q - mu - M (s - mu)||^2.
pub fn shrinkage_distance_s2(q: &[f64], s: &[f64], filter: &ClassFilter) -> Result<f64> {
    dist_s2(q, s, &filter.mean, &filter.filter_matrix)
}

/// Distance from every query to every support under the per-class filters.
/// Rows are queries, columns follow the support order.
pub fn distance_matrix(
    queries: &[Vec<f64>],
    supports: &[Vec<f64>],
    support_labels: &[usize],
    filters: &[ClassFilter],
    variant: DistanceVariant,
) -> Result<Vec<Vec<f64>>> {
    if supports.len() != support_labels.len() {
        return Err(SenetError::LabelMisalignment(format!(
            "{} supports but {} labels",
            supports.len(),
            support_labels.len()
        )));
    }
    queries
        .iter()
        .map(|q| {
            supports
                .iter()
                .zip(support_labels)
                .map(|(s, &label)| {
                    let filter = filters.get(label).ok_or_else(|| {
                        SenetError::LabelMisalignment(format!(
                            "support label {label} has no filter"
                        ))
                    })?;
                    match variant {
                        DistanceVariant::S1 => shrinkage_distance_s1(q, s, filter),
                        DistanceVariant::S2 => shrinkage_distance_s2(q, s, filter),
                    }
                })
                .collect()
        })
        .collect()
}

/// Row-wise softmax of -alpha * d with max subtraction. NaN distances are
/// rejected; a row with no finite distance is an error.
pub fn probabilities_from_distances(
    distances: &[Vec<f64>],
    alpha: f64,
) -> Result<ProbabilityMatrix> {
    let mut entries = Vec::with_capacity(distances.len());
    for (l, row) in distances.iter().enumerate() {
        if row.iter().any(|d| d.is_nan()) {
            return Err(SenetError::NonFinite(format!("distance row {l}")));
        }
        let logits: Vec<f64> = row.iter().map(|d| -alpha * d).collect();
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        if !max.is_finite() {
            return Err(SenetError::NonFinite(format!(
                "all distances non-finite for query {l}"
            )));
        }
        let unnormalized: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = unnormalized.iter().sum();
        entries.push(unnormalized.iter().map(|&x| x / total).collect());
    }
    Ok(ProbabilityMatrix { entries })
}

/// Match probabilities of every query against every support of every class.
pub fn pairwise_probabilities(
    queries: &[Vec<f64>],
    supports: &[Vec<f64>],
    support_labels: &[usize],
    filters: &[ClassFilter],
    config: &TaskConfig,
) -> Result<ProbabilityMatrix> {
    config.validate()?;
    let distances = distance_matrix(queries, supports, support_labels, filters, config.variant)?;
    probabilities_from_distances(&distances, config.alpha)
}

/// Per-query class posteriors: support probabilities summed by class label.
pub fn class_posterior(p: &ProbabilityMatrix, support_labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    if p.num_supports() != support_labels.len() {
        return Err(SenetError::LabelMisalignment(format!(
            "probability matrix has {} columns but {} labels",
            p.num_supports(),
            support_labels.len()
        )));
    }
    let num_classes = support_labels.iter().max().map_or(0, |&m| m + 1);
    Ok(p.entries
        .iter()
        .map(|row| {
            let mut posterior = vec![0.0; num_classes];
            for (prob, &label) in row.iter().zip(support_labels) {
                posterior[label] += prob;
            }
            posterior
        })
        .collect())
}

/// Prototype predictor: softmax over classes of -alpha * ||q - mu_c||^2.
pub fn prototype_posterior(
    queries: &[Vec<f64>],
    class_means: &[Vec<f64>],
    alpha: f64,
) -> Result<Vec<Vec<f64>>> {
    let distances: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| {
            class_means
                .iter()
                .map(|mu| {
                    if mu.len() != q.len() {
                        Err(SenetError::DimensionMismatch {
                            expected: q.len(),
                            got: mu.len(),
                        })
                    } else {
                        Ok(squared_distance(q, mu))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(probabilities_from_distances(&distances, alpha)?.entries)
}

/// Argmax class per query; ties break toward the smallest class index.
pub fn predict(posteriors: &[Vec<f64>]) -> Vec<usize> {
    posteriors
        .iter()
        .map(|row| {
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::random_episode;
    use super::*;
    use crate::linalg::testutil::random_vec;
    use crate::linalg::{dot, project_residual};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn s1_zero_for_identical_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let supports: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 4)).collect();
        let f = build_class_filter(0, &supports, &ShrinkageConfig::new(2.0)).unwrap();
        let q = supports[1].clone();
        assert_eq!(shrinkage_distance_s1(&q, &supports[1], &f).unwrap(), 0.0);
    }

    #[test]
    fn distances_reduce_to_euclidean_at_lambda_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let supports: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 5)).collect();
        let f = build_class_filter(0, &supports, &ShrinkageConfig::new(0.0)).unwrap();
        for _ in 0..5 {
            let q = random_vec(&mut rng, 5);
            for s in &supports {
                let raw = squared_distance(&q, s);
                assert!((shrinkage_distance_s1(&q, s, &f).unwrap() - raw).abs() <= 1e-9);
                assert!((shrinkage_distance_s2(&q, s, &f).unwrap() - raw).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn s1_huge_lambda_matches_orthogonal_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let supports: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 5)).collect();
        let f = build_class_filter(0, &supports, &ShrinkageConfig::new(1e12)).unwrap();

        let threshold = f.eigen.eigenvalues[0] * 1e-10;
        let basis: Vec<Vec<f64>> = f
            .eigen
            .eigenvalues
            .iter()
            .zip(&f.eigen.eigenvectors)
            .filter(|(&g, _)| g > threshold)
            .map(|(_, v)| v.clone())
            .collect();

        let q = random_vec(&mut rng, 5);
        let centered = sub(&q, &f.mean);
        let residual = project_residual(&centered, &basis).unwrap();
        let expected = dot(&residual, &residual);

        let per_support: Vec<f64> = supports
            .iter()
            .map(|s| shrinkage_distance_s1(&q, s, &f).unwrap())
            .collect();
        for d in &per_support {
            assert!((d - expected).abs() <= 1e-5, "got {d}, expected {expected}");
        }
        let spread = per_support.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d))
            - per_support.iter().fold(f64::INFINITY, |m, &d| m.min(d));
        assert!(spread <= 1e-6 * expected.max(1.0));
    }

    #[test]
    fn s2_huge_lambda_matches_prototype_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let supports: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 5)).collect();
        let f = build_class_filter(0, &supports, &ShrinkageConfig::new(1e12)).unwrap();
        let q = random_vec(&mut rng, 5);
        let expected = squared_distance(&q, &f.mean);
        for s in &supports {
            let d = shrinkage_distance_s2(&q, s, &f).unwrap();
            assert!((d - expected).abs() <= 1e-5);
        }
        // Query at the mean: distance collapses to zero.
        let d0 = shrinkage_distance_s2(&f.mean.clone(), &supports[0], &f).unwrap();
        assert!(d0 <= 1e-6);
    }

    #[test]
    fn single_support_probability_is_one() {
        let supports = vec![vec![0.5, 0.5]];
        let labels = vec![0];
        let f = vec![build_class_filter(0, &supports, &ShrinkageConfig::new(1.0)).unwrap()];
        let queries = vec![vec![1.0, 0.0], vec![-3.0, 2.0]];
        let p = pairwise_probabilities(
            &queries,
            &supports,
            &labels,
            &f,
            &TaskConfig::new(1.0, DistanceVariant::S1, 1.0),
        )
        .unwrap();
        for row in &p.entries {
            assert_eq!(row.len(), 1);
            assert!((row[0] - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn equidistant_supports_split_evenly() {
        let supports = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let labels = vec![0, 1];
        let filters = vec![
            build_class_filter(0, &supports[..1], &ShrinkageConfig::new(0.0)).unwrap(),
            build_class_filter(1, &supports[1..], &ShrinkageConfig::new(0.0)).unwrap(),
        ];
        let queries = vec![vec![0.0, 0.7]];
        let p = pairwise_probabilities(
            &queries,
            &supports,
            &labels,
            &filters,
            &TaskConfig::new(1.0, DistanceVariant::S1, 0.0),
        )
        .unwrap();
        assert!((p.entries[0][0] - 0.5).abs() <= 1e-12);
        assert!((p.entries[0][1] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn softmax_matches_direct_summation() {
        // Hand-set distances {0, 1, 2, 3} against a directly summed oracle.
        let distances = vec![vec![0.0, 1.0, 2.0, 3.0]];
        let p = probabilities_from_distances(&distances, 1.0).unwrap();
        let total: f64 = distances[0].iter().map(|&d| (-d).exp()).sum();
        for (i, &d) in distances[0].iter().enumerate() {
            let expected = (-d).exp() / total;
            assert!((p.entries[0][i] - expected).abs() <= 1e-12);
        }
        let row_sum: f64 = p.entries[0].iter().sum();
        assert!((row_sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn softmax_survives_huge_alpha() {
        let distances = vec![vec![1000.0, 2000.0]];
        let p = probabilities_from_distances(&distances, 10.0).unwrap();
        assert!((p.entries[0][0] - 1.0).abs() <= 1e-12);
        assert_eq!(p.entries[0][1], 0.0);
    }

    #[test]
    fn softmax_rejects_all_infinite_row() {
        let distances = vec![vec![f64::INFINITY, f64::INFINITY]];
        assert!(probabilities_from_distances(&distances, 1.0).is_err());
        let distances = vec![vec![f64::NAN, 1.0]];
        assert!(probabilities_from_distances(&distances, 1.0).is_err());
    }

    #[test]
    fn posterior_uniform_case() {
        let p = ProbabilityMatrix {
            entries: vec![vec![0.25, 0.25, 0.25, 0.25]],
        };
        let post = class_posterior(&p, &[0, 0, 1, 1]).unwrap();
        assert!((post[0][0] - 0.5).abs() <= 1e-15);
        assert!((post[0][1] - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn posterior_all_mass_on_one_support() {
        let p = ProbabilityMatrix {
            entries: vec![vec![0.0, 0.0, 1.0, 0.0]],
        };
        let post = class_posterior(&p, &[0, 0, 1, 1]).unwrap();
        assert_eq!(post[0][1], 1.0);
        assert_eq!(post[0][0], 0.0);
    }

    #[test]
    fn posterior_matches_regrouped_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = vec![0, 1, 0, 2, 1, 2];
        let mut row: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= total;
        }
        let p = ProbabilityMatrix {
            entries: vec![row.clone()],
        };
        let post = class_posterior(&p, &labels).unwrap();
        for c in 0..3 {
            // Independent accumulation in reverse order.
            let mut expected = 0.0;
            for i in (0..6).rev() {
                if labels[i] == c {
                    expected += row[i];
                }
            }
            assert!((post[0][c] - expected).abs() <= 1e-12);
        }
        let per_query: f64 = post[0].iter().sum();
        assert!((per_query - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn posterior_rejects_misaligned_labels() {
        let p = ProbabilityMatrix {
            entries: vec![vec![0.5, 0.5]],
        };
        assert!(matches!(
            class_posterior(&p, &[0, 1, 1]),
            Err(SenetError::LabelMisalignment(_))
        ));
    }

    #[test]
    fn prototype_posterior_saturates_near_mean() {
        let means = vec![vec![0.0, 0.0], vec![10.0, 0.0]];
        // gap = 100, so alpha 0.05 gives gap * alpha = 5.
        let post = prototype_posterior(&[vec![0.0, 0.0]], &means, 0.05).unwrap();
        assert!(post[0][0] >= 0.99);
        // Equidistant query: uniform posterior.
        let post = prototype_posterior(&[vec![5.0, 0.0]], &means, 0.05).unwrap();
        assert!((post[0][0] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn prototype_matches_s2_pipeline_at_huge_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let ep = random_episode(&mut rng, 3, 4, 6, 5);
            let config = TaskConfig::new(1.0, DistanceVariant::S2, 1e12);
            let filters = ep.build_filters(&config.shrinkage).unwrap();
            let p = pairwise_probabilities(
                &ep.query_embeddings,
                &ep.support_embeddings,
                &ep.support_labels,
                &filters,
                &config,
            )
            .unwrap();
            let post = class_posterior(&p, &ep.support_labels).unwrap();
            let means: Vec<Vec<f64>> = filters.iter().map(|f| f.mean.clone()).collect();
            let proto = prototype_posterior(&ep.query_embeddings, &means, 1.0).unwrap();
            for (a, b) in post.iter().zip(&proto) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn predict_argmax_and_ties() {
        assert_eq!(predict(&[vec![0.2, 0.8]]), vec![1]);
        assert_eq!(predict(&[vec![0.5, 0.5]]), vec![0]);
    }

    #[test]
    fn rigid_motion_leaves_everything_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ep = random_episode(&mut rng, 3, 3, 5, 4);
        let r = crate::linalg::testutil::random_orthogonal(&mut rng, 4);
        let t = random_vec(&mut rng, 4);
        let transform = |x: &[f64]| -> Vec<f64> {
            (0..4)
                .map(|i| (0..4).map(|j| r[j][i] * x[j]).sum::<f64>() + t[i])
                .collect()
        };
        let moved = EmbeddedEpisode {
            num_classes: ep.num_classes,
            support_embeddings: ep.support_embeddings.iter().map(|s| transform(s)).collect(),
            support_labels: ep.support_labels.clone(),
            query_embeddings: ep.query_embeddings.iter().map(|q| transform(q)).collect(),
            query_labels: ep.query_labels.clone(),
        };
        for variant in [DistanceVariant::S1, DistanceVariant::S2] {
            let config = TaskConfig::new(1.5, variant, 3.0);
            let f0 = ep.build_filters(&config.shrinkage).unwrap();
            let f1 = moved.build_filters(&config.shrinkage).unwrap();
            let d0 = distance_matrix(
                &ep.query_embeddings,
                &ep.support_embeddings,
                &ep.support_labels,
                &f0,
                variant,
            )
            .unwrap();
            let d1 = distance_matrix(
                &moved.query_embeddings,
                &moved.support_embeddings,
                &moved.support_labels,
                &f1,
                variant,
            )
            .unwrap();
            for (r0, r1) in d0.iter().zip(&d1) {
                for (a, b) in r0.iter().zip(r1) {
                    assert!((a - b).abs() <= 1e-8, "distance moved: {a} vs {b}");
                }
            }
            let p0 = probabilities_from_distances(&d0, config.alpha).unwrap();
            let p1 = probabilities_from_distances(&d1, config.alpha).unwrap();
            for (r0, r1) in p0.entries.iter().zip(&p1.entries) {
                for (a, b) in r0.iter().zip(r1) {
                    assert!((a - b).abs() <= 1e-8);
                }
            }
            let post0 = class_posterior(&p0, &ep.support_labels).unwrap();
            let post1 = class_posterior(&p1, &ep.support_labels).unwrap();
            assert_eq!(predict(&post0), predict(&post1));
        }
    }

    #[test]
    fn s2_interpolates_monotonically_in_forced_case() {
        // Supports along the first axis give an eigenvector u = e0 with
        // positive eigenvalue. Place q and s on opposite sides of the mean
        // along u, so (a - g b)^2 is monotone in the gain g over [0, 1].
        let supports = vec![
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
        ];
        let (mean, _) = crate::linalg::scatter_and_mean(&supports).unwrap();
        let s = vec![mean[0] + 1.5, mean[1], mean[2]];
        let q = vec![mean[0] - 1.0, mean[1], mean[2]];

        let d_at = |lambda: f64| -> f64 {
            let f = build_class_filter(0, &supports, &ShrinkageConfig::new(lambda)).unwrap();
            shrinkage_distance_s2(&q, &s, &f).unwrap()
        };
        let d0 = d_at(0.0);
        let dinf = d_at(1e12);
        let lo = d0.min(dinf) - 1e-9;
        let hi = d0.max(dinf) + 1e-9;
        for &lambda in &[0.1, 1.0, 10.0, 100.0] {
            let d = d_at(lambda);
            assert!(
                d >= lo && d <= hi,
                "lambda {lambda}: {d} outside [{lo}, {hi}]"
            );
        }
    }

    proptest! {
        #[test]
        fn predict_invariant_under_monotone_transform(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.001f64..1.0, 4),
                1..6,
            ),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let base = predict(&rows);
            // Strictly increasing maps preserve the argmax.
            let mapped: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|&x| scale * x.ln() + shift).collect())
                .collect();
            prop_assert_eq!(predict(&mapped), base);
        }
    }
}
