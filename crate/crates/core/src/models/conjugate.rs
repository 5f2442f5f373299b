//! Gaussian likelihood with identity observation operator. With a Gaussian
//! prior the posterior is available in closed form, which makes this the
//! reference target for sampler correctness checks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MessError, Result};
use crate::prior::GaussianPrior;
use crate::sampler::LogLikelihood;

/// `y ~ N(x, noise_variance * I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateGaussianModel {
    pub observation: Vec<f64>,
    pub noise_variance: f64,
}

impl ConjugateGaussianModel {
    pub fn new(observation: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(MessError::InvalidParameter(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self {
            observation,
            noise_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.observation.len()
    }

    pub fn loglik(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(MessError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let n = self.dim() as f64;
        let sq: f64 = x
            .iter()
            .zip(&self.observation)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        -0.5 * sq / self.noise_variance - 0.5 * n * (2.0 * PI * self.noise_variance).ln()
    }

    /// Posterior mean and covariance by precision addition.
    pub fn posterior(&self, prior: &GaussianPrior) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.dim();
        if prior.dim() != n {
            return Err(MessError::DimensionMismatch {
                expected: n,
                actual: prior.dim(),
            });
        }
        let prior_precision = prior
            .covariance()
            .clone()
            .cholesky()
            .ok_or(MessError::NotPositiveDefinite)?
            .inverse();
        let precision = &prior_precision + DMatrix::identity(n, n) / self.noise_variance;
        let covariance = precision
            .cholesky()
            .ok_or(MessError::NotPositiveDefinite)?
            .inverse();
        let rhs = &prior_precision * DVector::from_column_slice(prior.mean())
            + DVector::from_column_slice(&self.observation) / self.noise_variance;
        let mean = &covariance * rhs;
        Ok((mean.as_slice().to_vec(), covariance))
    }

    /// A random well-conditioned prior and observation of dimension `dim`.
    pub fn random_instance(
        dim: usize,
        noise_variance: f64,
        seed: u64,
    ) -> Result<(GaussianPrior, Self)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        let cov = &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.5;
        let cov = (&cov + cov.transpose()) * 0.5;
        let mean: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let prior = GaussianPrior::new(mean, cov)?;
        let truth = prior.sample(&mut rng);
        let y: Vec<f64> = truth
            .iter()
            .map(|t| t + noise_variance.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Ok((prior, Self::new(y, noise_variance)?))
    }
}

impl LogLikelihood for ConjugateGaussianModel {
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_posterior() {
        let m = ConjugateGaussianModel::new(vec![1.0], 1.0).unwrap();
        let (mean, cov) = m.posterior(&GaussianPrior::standard(1)).unwrap();
        assert!((mean[0] - 0.5).abs() < 1e-14);
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn uninformative_limit_recovers_prior() {
        let (prior, _) = ConjugateGaussianModel::random_instance(4, 1.0, 2).unwrap();
        let m = ConjugateGaussianModel::new(vec![3.0; 4], 1e12).unwrap();
        let (mean, cov) = m.posterior(&prior).unwrap();
        for i in 0..4 {
            assert!((mean[i] - prior.mean()[i]).abs() < 1e-9);
            for j in 0..4 {
                assert!((cov[(i, j)] - prior.covariance()[(i, j)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loglik_value_and_errors() {
        let m = ConjugateGaussianModel::new(vec![1.0, -1.0], 2.0).unwrap();
        let expected = -0.5 * (1.0 + 1.0) / 2.0 - (2.0 * PI * 2.0).ln();
        assert!((m.loglik(&[0.0, 0.0]).unwrap() - expected).abs() < 1e-14);
        assert!(m.loglik(&[0.0]).is_err());
        assert!(ConjugateGaussianModel::new(vec![0.0], 0.0).is_err());
    }
}
