//! Per-class spectral shrinkage filters.
//!
//! A class filter contracts embeddings toward the class mean, direction by
//! direction: each scatter eigendirection with eigenvalue gamma is rescaled
//! by the Tikhonov gain gamma / (lambda + gamma), while directions with zero
//! eigenvalue pass through untouched.

use crate::error::{Result, SenetError};
use crate::linalg::{scatter_and_mean, sym_eigen, EigenDecomposition, SymMatrix};

pub const DEFAULT_RANK_EPSILON_REL: f64 = 1e-10;

/// Shrinkage hyperparameters shared by all classes of an episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageConfig {
    /// Shrinkage coefficient lambda >= 0. 0 means no filtering.
    pub lambda: f64,
    /// Relative threshold below which a scatter eigenvalue counts as zero.
    pub rank_epsilon_rel: f64,
}

impl ShrinkageConfig {
    pub fn new(lambda: f64) -> Self {
        ShrinkageConfig {
            lambda,
            rank_epsilon_rel: DEFAULT_RANK_EPSILON_REL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(SenetError::NegativeLambda(self.lambda));
        }
        if !(self.rank_epsilon_rel > 0.0 && self.rank_epsilon_rel < 1.0) {
            return Err(SenetError::InvalidConfig(format!(
                "rank_epsilon_rel must lie in (0, 1), got {}",
                self.rank_epsilon_rel
            )));
        }
        Ok(())
    }
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// Everything derived from one class's support embeddings: mean, scatter
/// spectrum, per-direction gains, and the assembled filter matrix.
#[derive(Debug, Clone)]
pub struct ClassFilter {
    pub class_id: usize,
    pub mean: Vec<f64>,
    pub eigen: EigenDecomposition,
    pub gains: Vec<f64>,
    pub filter_matrix: SymMatrix,
}

impl ClassFilter {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Tikhonov gain for one eigendirection. Eigenvalues at or below
/// `rank_threshold` take the zero-eigenvalue branch and pass through with
/// gain 1.
pub fn tikhonov_gain(gamma: f64, lambda: f64, rank_threshold: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(SenetError::NegativeLambda(lambda));
    }
    let gamma = gamma.max(0.0);
    if gamma <= rank_threshold {
        Ok(1.0)
    } else {
        Ok(gamma / (lambda + gamma))
    }
}

/// Build the shrinkage filter for one class from its support embeddings.
pub fn build_class_filter(
    class_id: usize,
    supports: &[Vec<f64>],
    config: &ShrinkageConfig,
) -> Result<ClassFilter> {
    config.validate()?;
    let (mean, scatter) = scatter_and_mean(supports)?;
    let eigen = sym_eigen(&scatter)?;
    let dim = mean.len();

    let gamma_max = eigen.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let rank_threshold = config.rank_epsilon_rel * gamma_max.max(1e-300);

    let gains: Vec<f64> = eigen
        .eigenvalues
        .iter()
        .map(|&g| tikhonov_gain(g, config.lambda, rank_threshold))
        .collect::<Result<_>>()?;

    // All gains 1 means the filter is exactly the identity.
    let filter_matrix = if gains.iter().all(|&g| g == 1.0) {
        SymMatrix::identity(dim)
    } else {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let mut acc = 0.0;
                for n in 0..dim {
                    acc += gains[n] * eigen.eigenvectors[n][i] * eigen.eigenvectors[n][j];
                }
                m.set(i, j, acc);
            }
        }
        m
    };

    Ok(ClassFilter {
        class_id,
        mean,
        eigen,
        gains,
        filter_matrix,
    })
}

/// Apply the filter matrix to a vector.
pub fn apply_filter(filter: &ClassFilter, v: &[f64]) -> Result<Vec<f64>> {
    filter.filter_matrix.matvec(v)
}
