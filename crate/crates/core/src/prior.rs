//! Gaussian priors: sampling, log-density, elliptical rotation and
//! conditioning on exactly observed coordinates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MessError, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const CONDITION_RATIO: f64 = 1e-10;

/// A multivariate normal `N(mean, covariance)` with a cached lower Cholesky
/// factor. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    log_det: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(MessError::DimensionMismatch {
                expected: n,
                actual: covariance.nrows(),
            });
        }
        let scale = covariance.amax();
        let asymmetry = (&covariance - covariance.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(MessError::NotSymmetric { asymmetry });
        }
        let factor = if n == 0 {
            DMatrix::zeros(0, 0)
        } else {
            let sym = (&covariance + covariance.transpose()) * 0.5;
            let chol = sym.cholesky().ok_or(MessError::NotPositiveDefinite)?;
            chol.l()
        };
        let diag = factor.diagonal();
        if n > 0 {
            let max = diag.max();
            let min = diag.min();
            if !(min > 0.0) {
                return Err(MessError::NotPositiveDefinite);
            }
            if min < CONDITION_RATIO * max {
                return Err(MessError::NearSingular { ratio: min / max });
            }
        }
        let log_det = 2.0 * diag.iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
            factor,
            log_det,
        })
    }

    /// Diagonal covariance with the given variances.
    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Result<Self> {
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
        Self::new(mean, cov)
    }

    pub fn standard(n: usize) -> Self {
        Self::new(vec![0.0; n], DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `mean + factor * z` for `z` drawn from `n` standard normals in order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.transform_standard(&z)
    }

    /// Maps a standard-normal vector `z` to `mean + factor * z`.
    pub fn transform_standard(&self, z: &[f64]) -> Vec<f64> {
        self.add_correlated(self.mean.as_slice(), z, 1.0)
    }

    /// `base + scale * factor * z`, the building block of the MH proposal.
    pub fn add_correlated(&self, base: &[f64], z: &[f64], scale: f64) -> Vec<f64> {
        let n = self.dim();
        let mut out = base.to_vec();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.factor[(i, j)] * z[j];
            }
            out[i] += scale * acc;
        }
        out
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(MessError::DimensionMismatch {
                expected: n,
                actual: x.len(),
            });
        }
        let quad = self.whitened_norm_sq(x);
        Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + self.log_det + quad))
    }

    /// `|factor^{-1} (x - mean)|^2` by forward substitution.
    fn whitened_norm_sq(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut w = vec![0.0; n];
        let mut quad = 0.0;
        for i in 0..n {
            let mut acc = x[i] - self.mean[i];
            for j in 0..i {
                acc -= self.factor[(i, j)] * w[j];
            }
            w[i] = acc / self.factor[(i, i)];
            quad += w[i] * w[i];
        }
        quad
    }

    /// Gaussian conditional given `x[indices] = values`, returned on the
    /// remaining coordinates together with the map back to full length.
    pub fn condition_on_exact(
        &self,
        indices: &[usize],
        values: &[f64],
    ) -> Result<ConditionedPrior> {
        let n = self.dim();
        if indices.len() != values.len() {
            return Err(MessError::DimensionMismatch {
                expected: indices.len(),
                actual: values.len(),
            });
        }
        let mut observed = vec![false; n];
        for &i in indices {
            if i >= n || observed[i] {
                return Err(MessError::InvalidIndex { index: i, dim: n });
            }
            observed[i] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !observed[i]).collect();
        let nf = free.len();
        let no = indices.len();

        let prior = if nf == 0 {
            GaussianPrior::new(Vec::new(), DMatrix::zeros(0, 0))?
        } else if no == 0 {
            self.clone()
        } else {
            let s_ff = DMatrix::from_fn(nf, nf, |a, b| self.covariance[(free[a], free[b])]);
            let s_fo = DMatrix::from_fn(nf, no, |a, b| self.covariance[(free[a], indices[b])]);
            let s_oo = DMatrix::from_fn(no, no, |a, b| self.covariance[(indices[a], indices[b])]);
            let resid = DVector::from_fn(no, |a, _| values[a] - self.mean[indices[a]]);

            let chol = s_oo.cholesky().ok_or(MessError::SingularConditioning)?;
            let gain = chol.solve(&s_fo.transpose()).transpose();
            let mean_f = DVector::from_fn(nf, |a, _| self.mean[free[a]]) + &gain * resid;
            let cov = &s_ff - &gain * s_fo.transpose();
            let cov = (&cov + cov.transpose()) * 0.5;
            GaussianPrior::new(mean_f.as_slice().to_vec(), cov)?
        };

        Ok(ConditionedPrior {
            prior,
            free_indices: free,
            fixed_indices: indices.to_vec(),
            fixed_values: values.to_vec(),
            full_dim: n,
        })
    }
}

/// A reduced-dimension prior obtained by exact conditioning, plus the
/// bookkeeping needed to rebuild full-length states.
#[derive(Debug, Clone)]
pub struct ConditionedPrior {
    pub prior: GaussianPrior,
    pub free_indices: Vec<usize>,
    pub fixed_indices: Vec<usize>,
    pub fixed_values: Vec<f64>,
    pub full_dim: usize,
}

impl ConditionedPrior {
    pub fn reassemble(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_dim];
        self.reassemble_into(reduced, &mut full);
        full
    }

    pub fn reassemble_into(&self, reduced: &[f64], full: &mut [f64]) {
        debug_assert_eq!(reduced.len(), self.free_indices.len());
        for (&i, &v) in self.free_indices.iter().zip(reduced) {
            full[i] = v;
        }
        for (&i, &v) in self.fixed_indices.iter().zip(&self.fixed_values) {
            full[i] = v;
        }
    }

    pub fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free_indices.iter().map(|&i| full[i]).collect()
    }
}

/// Rotates the pair `(x, nu)` about `mean` by `angle`:
/// `x' = (x-m)cos + (nu-m)sin + m`, `nu' = (nu-m)cos - (x-m)sin + m`.
pub fn rotate_pair(
    x: &[f64],
    nu: &[f64],
    angle: f64,
    mean: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(x.len(), nu.len())?;
    check_len(x.len(), mean.len())?;
    let (s, c) = angle.sin_cos();
    let mut xr = Vec::with_capacity(x.len());
    let mut nr = Vec::with_capacity(x.len());
    for ((&xi, &ni), &mi) in x.iter().zip(nu).zip(mean) {
        let dx = xi - mi;
        let dn = ni - mi;
        xr.push(dx * c + dn * s + mi);
        nr.push(dn * c - dx * s + mi);
    }
    Ok((xr, nr))
}

/// The point of the ellipse through `x` and `nu` at offset `angle`
/// (first component of [`rotate_pair`]), written into `out`.
pub(crate) fn ellipse_point_into(
    x: &[f64],
    nu: &[f64],
    angle: f64,
    mean: &[f64],
    out: &mut Vec<f64>,
) {
    let (s, c) = angle.sin_cos();
    out.clear();
    out.extend(
        x.iter()
            .zip(nu)
            .zip(mean)
            .map(|((&xi, &ni), &mi)| (xi - mi) * c + (ni - mi) * s + mi),
    );
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(MessError::DimensionMismatch { expected, actual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn sample_is_mean_shift_of_centered_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = random_spd(4, &mut rng);
        let centered = GaussianPrior::new(vec![0.0; 4], cov.clone()).unwrap();
        let shifted = GaussianPrior::new(vec![1.0, -2.0, 3.0, 0.5], cov).unwrap();
        let v = centered.sample(&mut ChaCha8Rng::seed_from_u64(9));
        let s = shifted.sample(&mut ChaCha8Rng::seed_from_u64(9));
        for i in 0..4 {
            assert_abs_diff_eq!(s[i], shifted.mean()[i] + v[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn sample_is_deterministic() {
        let p = GaussianPrior::standard(2);
        let a = p.sample(&mut ChaCha8Rng::seed_from_u64(77));
        let b = p.sample(&mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn empirical_covariance_matches() {
        let p = GaussianPrior::diagonal(vec![0.0, 0.0], &[1.0, 4.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut s = [[0.0; 2]; 2];
        for _ in 0..n {
            let x = p.sample(&mut rng);
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += x[i] * x[j];
                }
            }
        }
        let cov = [
            [s[0][0] / n as f64, s[0][1] / n as f64],
            [s[1][0] / n as f64, s[1][1] / n as f64],
        ];
        assert!((cov[0][0] - 1.0).abs() < 0.05);
        assert!((cov[1][1] - 4.0).abs() < 0.2);
        // off-diagonal is zero; 5% of the geometric scale 2
        assert!(cov[0][1].abs() < 0.1);
    }

    #[test]
    fn log_density_known_values() {
        let p = GaussianPrior::standard(1);
        assert_abs_diff_eq!(
            p.log_density(&[0.0]).unwrap(),
            -0.5 * (2.0 * PI).ln(),
            epsilon = 1e-14
        );
        let p2 = GaussianPrior::standard(2);
        assert_abs_diff_eq!(
            p2.log_density(&[1.0, 1.0]).unwrap(),
            -(2.0 * PI).ln() - 1.0,
            epsilon = 1e-14
        );
        assert!(matches!(
            p2.log_density(&[1.0]),
            Err(MessError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn log_density_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let cov = random_spd(n, &mut rng);
        let mean: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
        let p = GaussianPrior::new(mean.clone(), cov.clone()).unwrap();

        let inv = cov.clone().try_inverse().unwrap();
        let d = DVector::from_fn(n, |i, _| x[i] - mean[i]);
        let quad = (d.transpose() * inv * &d)[(0, 0)];
        let expected = -0.5 * (n as f64 * (2.0 * PI).ln() + cov.determinant().ln() + quad);
        assert_abs_diff_eq!(p.log_density(&x).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn construction_rejects_bad_covariances() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GaussianPrior::new(vec![0.0; 2], asym),
            Err(MessError::NotSymmetric { .. })
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianPrior::new(vec![0.0; 2], indef).is_err());
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-24]);
        assert!(matches!(
            GaussianPrior::new(vec![0.0; 2], near),
            Err(MessError::NearSingular { .. })
        ));
        assert!(GaussianPrior::new(vec![0.0; 3], DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cov = random_spd(6, &mut rng);
        let p = GaussianPrior::new(vec![0.0; 6], cov.clone()).unwrap();
        let rec = p.factor() * p.factor().transpose();
        assert!((rec - &cov).norm() <= 1e-10 * cov.norm());
    }

    #[test]
    fn rotate_pair_special_angles() {
        let x = [1.0, 2.0];
        let nu = [-0.5, 3.0];
        let mu = [0.25, -1.0];
        let (a, b) = rotate_pair(&x, &nu, 0.0, &mu).unwrap();
        assert_eq!(a, x.to_vec());
        assert_eq!(b, nu.to_vec());

        let (a, b) = rotate_pair(&x, &nu, PI, &mu).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(a[i], 2.0 * mu[i] - x[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b[i], 2.0 * mu[i] - nu[i], epsilon = 1e-12);
        }

        let (a, b) = rotate_pair(&x, &nu, PI / 2.0, &mu).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(a[i], nu[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b[i], 2.0 * mu[i] - x[i], epsilon = 1e-12);
        }
        assert!(rotate_pair(&x, &[1.0], 0.3, &mu).is_err());
    }

    #[test]
    fn conditioning_independent_coordinates() {
        let p = GaussianPrior::standard(2);
        let c = p.condition_on_exact(&[0], &[5.0]).unwrap();
        assert_eq!(c.prior.dim(), 1);
        assert_abs_diff_eq!(c.prior.mean()[0], 0.0);
        assert_abs_diff_eq!(c.prior.covariance()[(0, 0)], 1.0);
        assert_eq!(c.reassemble(&[0.7]), vec![5.0, 0.7]);
    }

    #[test]
    fn conditioning_correlated_pair() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let p = GaussianPrior::new(vec![0.0; 2], cov).unwrap();
        let c = p.condition_on_exact(&[0], &[1.0]).unwrap();
        assert_abs_diff_eq!(c.prior.mean()[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c.prior.covariance()[(0, 0)], 0.75, epsilon = 1e-14);
    }

    #[test]
    fn conditioning_on_everything() {
        let p = GaussianPrior::standard(3);
        let c = p
            .condition_on_exact(&[2, 0, 1], &[1.5, -2.0, 0.25])
            .unwrap();
        assert_eq!(c.prior.dim(), 0);
        assert_eq!(c.reassemble(&[]), vec![-2.0, 0.25, 1.5]);
        assert_eq!(c.prior.log_density(&[]).unwrap(), 0.0);
    }

    #[test]
    fn conditioning_rejects_bad_indices() {
        let p = GaussianPrior::standard(3);
        assert!(p.condition_on_exact(&[3], &[0.0]).is_err());
        assert!(p.condition_on_exact(&[1, 1], &[0.0, 0.0]).is_err());
        assert!(p.condition_on_exact(&[1], &[0.0, 1.0]).is_err());
    }
}
