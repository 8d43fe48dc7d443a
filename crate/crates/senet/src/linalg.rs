//! Dense symmetric linear algebra: scatter matrices, a cyclic Jacobi
//! eigensolver, and orthogonal projections.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! many threads at once.

use crate::error::{Result, SenetError};

/// Symmetric d x d matrix storing only the lower triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    /// Packed lower triangle, row-major: entry (i, j) with i >= j lives at
    /// i*(i+1)/2 + j.
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        debug_assert!(i >= j);
        i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[Self::idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[Self::idx(i, j)] = value;
    }

    /// Rank-1 update: self += v * v^T.
    pub fn add_outer(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                self.data[Self::idx(i, j)] += v[i] * v[j];
            }
        }
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(SenetError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.get(i, j) * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Frobenius norm over the full (unpacked) matrix.
    pub fn frobenius_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let x = self.data[Self::idx(i, j)];
                acc += if i == j { x * x } else { 2.0 * x * x };
            }
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Eigendecomposition of a symmetric matrix: S = W diag(eigenvalues) W^T
/// with eigenvalues sorted descending and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[n]` is the unit eigenvector paired with `eigenvalues[n]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Arithmetic mean and unnormalized scatter (sum of centered outer products)
/// of a set of equal-length vectors.
pub fn scatter_and_mean(samples: &[Vec<f64>]) -> Result<(Vec<f64>, SymMatrix)> {
    let first = samples.first().ok_or(SenetError::EmptyClass)?;
    let dim = first.len();
    for s in samples {
        if s.len() != dim {
            return Err(SenetError::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
    }
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x;
        }
    }
    let k = samples.len() as f64;
    for m in mean.iter_mut() {
        *m /= k;
    }
    let mut scatter = SymMatrix::zeros(dim);
    let mut centered = vec![0.0; dim];
    for s in samples {
        for (c, (x, m)) in centered.iter_mut().zip(s.iter().zip(&mean)) {
            *c = x - m;
        }
        scatter.add_outer(&centered);
    }
    Ok((mean, scatter))
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// 1e-12 * ||S||_F, capped at 100 sweeps. Eigenvalues come back sorted
/// descending; each eigenvector is sign-fixed so its largest-magnitude
/// entry is positive.
pub fn sym_eigen(s: &SymMatrix) -> Result<EigenDecomposition> {
    if !s.is_finite() {
        return Err(SenetError::NonFinite("sym_eigen input".into()));
    }
    let n = s.dim();
    let mut a = s.to_dense();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let tol = JACOBI_REL_TOL * s.frobenius_norm();
    let off_norm = |a: &Vec<Vec<f64>>| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                acc += 2.0 * a[i][j] * a[i][j];
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    let mut residual = off_norm(&a);
    while residual > tol {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(SenetError::NoConvergence { residual, sweeps });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                // Rotation angle annihilating a[p][q].
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;

                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - sn * vq;
                    row[q] = sn * vp + c * vq;
                }
            }
        }
        sweeps += 1;
        residual = off_norm(&a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for &col in &order {
        eigenvalues.push(a[col][col]);
        let mut vec_col: Vec<f64> = (0..n).map(|row| v[row][col]).collect();
        // Deterministic sign: largest-magnitude entry positive.
        let mut lead = 0;
        for (i, x) in vec_col.iter().enumerate() {
            if x.abs() > vec_col[lead].abs() {
                lead = i;
            }
        }
        if vec_col[lead] < 0.0 {
            for x in vec_col.iter_mut() {
                *x = -*x;
            }
        }
        eigenvectors.push(vec_col);
    }

    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Component of `v` orthogonal to the span of an orthonormal basis.
pub fn project_residual(v: &[f64], basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = v.len();
    let mut worst = 0.0_f64;
    for (i, bi) in basis.iter().enumerate() {
        if bi.len() != dim {
            return Err(SenetError::DimensionMismatch {
                expected: dim,
                got: bi.len(),
            });
        }
        for (j, bj) in basis.iter().enumerate().skip(i) {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(bi, bj) - expected).abs());
        }
    }
    if worst > ORTHONORMALITY_TOL {
        return Err(SenetError::NonOrthonormalBasis(worst));
    }
    let mut residual = v.to_vec();
    for b in basis {
        let coeff = dot(&residual, b);
        for (r, x) in residual.iter_mut().zip(b) {
            *r -= coeff * x;
        }
    }
    Ok(residual)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::{random_orthogonal, random_vec};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, dim: usize) -> SymMatrix {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, rng.gen_range(-3.0..3.0));
            }
        }
        m
    }

    #[test]
    fn scatter_two_opposite_points() {
        let samples = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let (mean, scatter) = scatter_and_mean(&samples).unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_eq!(scatter.get(0, 0), 2.0);
        assert_eq!(scatter.get(0, 1), 0.0);
        assert_eq!(scatter.get(1, 1), 0.0);
    }

    #[test]
    fn scatter_single_sample_is_zero() {
        let (mean, scatter) = scatter_and_mean(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(mean, vec![3.0, 4.0]);
        assert_eq!(scatter.max_abs(), 0.0);
    }

    #[test]
    fn scatter_matches_moment_formula() {
        // Second oracle: sum x x^T - K mu mu^T accumulated independently.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 4)).collect();
        let (mean, scatter) = scatter_and_mean(&samples).unwrap();
        let k = samples.len() as f64;
        for i in 0..4 {
            for j in 0..4 {
                let mut xx = 0.0;
                for s in &samples {
                    xx += s[i] * s[j];
                }
                let expected = xx - k * mean[i] * mean[j];
                assert!((scatter.get(i, j) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn scatter_empty_errors() {
        let err = scatter_and_mean(&[]).unwrap_err();
        assert_eq!(err.to_string(), "empty class");
    }

    #[test]
    fn scatter_dimension_mismatch_errors() {
        let err = scatter_and_mean(&[vec![1.0, 2.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, SenetError::DimensionMismatch { .. }));
    }

    #[test]
    fn eigen_identity() {
        let eig = sym_eigen(&SymMatrix::identity(3)).unwrap();
        assert_eq!(eig.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eigen_diagonal() {
        let mut m = SymMatrix::zeros(2);
        m.set(0, 0, 3.0);
        m.set(1, 1, 1.0);
        let eig = sym_eigen(&m).unwrap();
        assert_eq!(eig.eigenvalues, vec![3.0, 1.0]);
        // Axis-aligned up to sign; sign convention makes them exactly e0, e1.
        assert!((eig.eigenvectors[0][0] - 1.0).abs() < 1e-12);
        assert!(eig.eigenvectors[0][1].abs() < 1e-12);
        assert!((eig.eigenvectors[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let m = random_sym(&mut rng, 6);
            let eig = sym_eigen(&m).unwrap();
            let scale = m.max_abs().max(1.0);
            for i in 0..6 {
                for j in 0..6 {
                    let mut rec = 0.0;
                    for n in 0..6 {
                        rec += eig.eigenvalues[n] * eig.eigenvectors[n][i] * eig.eigenvectors[n][j];
                    }
                    assert!(
                        (rec - m.get(i, j)).abs() <= 1e-9 * scale,
                        "reconstruction off at ({i},{j})"
                    );
                }
            }
            for a in 0..6 {
                for b in 0..6 {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    let d = dot(&eig.eigenvectors[a], &eig.eigenvectors[b]);
                    assert!((d - expected).abs() <= 1e-10, "not orthonormal ({a},{b})");
                }
            }
            let sorted = eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]);
            assert!(sorted);
        }
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let mut m = SymMatrix::zeros(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(sym_eigen(&m), Err(SenetError::NonFinite(_))));
    }

    #[test]
    fn scatter_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let k = rng.gen_range(1..6);
            let samples: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, 5)).collect();
            let (_, scatter) = scatter_and_mean(&samples).unwrap();
            let eig = sym_eigen(&scatter).unwrap();
            let scale = scatter.max_abs().max(1.0);
            for &ev in &eig.eigenvalues {
                assert!(ev >= -1e-10 * scale, "negative eigenvalue {ev}");
            }
            // rank(scatter) <= K - 1.
            let threshold = 1e-10 * eig.eigenvalues[0].max(1e-300);
            let rank = eig.eigenvalues.iter().filter(|&&ev| ev > threshold).count();
            assert!(rank < k, "rank {rank} exceeds {} for K={k}", k - 1);
        }
    }

    #[test]
    fn scatter_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 5)).collect();
        let t = random_vec(&mut rng, 5);
        let shifted: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.iter().zip(&t).map(|(x, y)| x + y).collect())
            .collect();
        let (_, s0) = scatter_and_mean(&samples).unwrap();
        let (_, s1) = scatter_and_mean(&shifted).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((s0.get(i, j) - s1.get(i, j)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn scatter_rotation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let samples: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 4)).collect();
        let r = random_orthogonal(&mut rng, 4);
        let rotate = |x: &[f64]| -> Vec<f64> {
            (0..4)
                .map(|i| (0..4).map(|j| r[j][i] * x[j]).sum())
                .collect()
        };
        let rotated: Vec<Vec<f64>> = samples.iter().map(|s| rotate(s)).collect();
        let (_, s0) = scatter_and_mean(&samples).unwrap();
        let (_, s1) = scatter_and_mean(&rotated).unwrap();
        // R S R^T entrywise.
        for i in 0..4 {
            for j in 0..4 {
                let mut expected = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        expected += r[a][i] * s0.get(a, b) * r[b][j];
                    }
                }
                assert!((s1.get(i, j) - expected).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn residual_basic() {
        let res = project_residual(&[1.0, 1.0], &[vec![1.0, 0.0]]).unwrap();
        assert!((res[0]).abs() < 1e-12);
        assert!((res[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_of_spanned_vector_is_zero() {
        let b = vec![
            vec![1.0 / 2.0_f64.sqrt(), 1.0 / 2.0_f64.sqrt(), 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let v = vec![3.0, 3.0, -2.0];
        let res = project_residual(&v, &b).unwrap();
        assert!(norm(&res) < 1e-10);
    }

    #[test]
    fn residual_satisfies_pythagoras() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = random_orthogonal(&mut rng, 5);
        let basis = vec![q[0].clone(), q[1].clone()];
        let v = random_vec(&mut rng, 5);
        let res = project_residual(&v, &basis).unwrap();
        let proj_sq: f64 = basis.iter().map(|b| dot(&v, b).powi(2)).sum();
        assert!((dot(&res, &res) + proj_sq - dot(&v, &v)).abs() <= 1e-9);
        for b in &basis {
            assert!(dot(&res, b).abs() <= 1e-8);
        }
    }

    #[test]
    fn residual_rejects_skewed_basis() {
        let err = project_residual(&[1.0, 0.0], &[vec![1.0, 1.0]]).unwrap_err();
        assert!(matches!(err, SenetError::NonOrthonormalBasis(_)));
    }
}
