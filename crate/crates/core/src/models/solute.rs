//! Toy solute-transport inverse problem: recover the antisymmetric transfer
//! matrix `A` from three noisy modes of the steady state
//! `(A + kappa I) theta = e_1`.
//!
//! `A` is parametrized by its strict upper triangle in row-major order:
//! `(0,1), (0,2), ..., (0,d-1), (1,2), ...`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MessError, Result};
use crate::prior::GaussianPrior;
use crate::sampler::LogLikelihood;

pub const DATASET_SCHEMA_VERSION: u32 = 1;
/// Dimension of the master matrix every dataset is cut from.
pub const MASTER_DIM: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoluteHyperparameters {
    pub kappa: f64,
    pub alpha_decay: f64,
    pub gamma: f64,
    pub sigma2: f64,
    pub tau2: f64,
    /// Last observed mode.
    pub d0: usize,
    /// Observed modes are `d0 - k_obs ..= d0`.
    pub k_obs: usize,
}

impl Default for SoluteHyperparameters {
    fn default() -> Self {
        Self {
            kappa: 0.02,
            alpha_decay: 3.0,
            gamma: 2.0,
            sigma2: 0.25,
            tau2: 2.0,
            d0: 6,
            k_obs: 2,
        }
    }
}

impl SoluteHyperparameters {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa", self.kappa),
            ("alpha_decay", self.alpha_decay),
            ("gamma", self.gamma),
            ("sigma2", self.sigma2),
            ("tau2", self.tau2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MessError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.k_obs > self.d0 {
            return Err(MessError::InvalidParameter(
                "k_obs must not exceed d0".into(),
            ));
        }
        Ok(())
    }

    /// Smallest `d` for which the observation window exists.
    pub fn min_dim(&self) -> usize {
        self.d0 + 1
    }

    pub fn observed_modes(&self) -> std::ops::RangeInclusive<usize> {
        self.d0 - self.k_obs..=self.d0
    }
}

pub fn param_count(d: usize) -> usize {
    d * d.saturating_sub(1) / 2
}

/// Position of `a_ij` (`i < j`) in the packed parameter vector.
pub fn param_index(i: usize, j: usize, d: usize) -> usize {
    debug_assert!(i < j && j < d);
    i * (2 * d - i - 1) / 2 + (j - i - 1)
}

/// Antisymmetric matrix from its packed upper triangle.
pub fn unpack(params: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if params.len() != param_count(d) {
        return Err(MessError::DimensionMismatch {
            expected: param_count(d),
            actual: params.len(),
        });
    }
    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            a[(i, j)] = params[k];
            a[(j, i)] = -params[k];
            k += 1;
        }
    }
    Ok(a)
}

pub fn pack(a: &DMatrix<f64>) -> Vec<f64> {
    let d = a.nrows();
    let mut out = Vec::with_capacity(param_count(d));
    for i in 0..d {
        for j in i + 1..d {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Solves `(A + kappa I) theta = e_1` by LU factorization.
pub fn solute_solve(params: &[f64], d: usize, kappa: f64) -> Result<Vec<f64>> {
    if !(kappa > 0.0) {
        return Err(MessError::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let mut a = unpack(params, d)?;
    for i in 0..d {
        a[(i, i)] = kappa;
    }
    let mut g = DVector::zeros(d);
    g[0] = 1.0;
    let theta = a.lu().solve(&g).ok_or(MessError::SingularSystem)?;
    Ok(theta.as_slice().to_vec())
}

/// Prior variance of `a_ij`: `tau2 ((i+1)(j+1))^(-alpha) |i-j|^(-gamma)`.
pub fn prior_variance(i: usize, j: usize, tau2: f64, alpha_decay: f64, gamma: f64) -> f64 {
    let ij = ((i + 1) * (j + 1)) as f64;
    let gap = (j as f64 - i as f64).abs();
    tau2 * ij.powf(-alpha_decay) * gap.powf(-gamma)
}

pub fn prior_variances(d: usize, tau2: f64, alpha_decay: f64, gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(d));
    for i in 0..d {
        for j in i + 1..d {
            out.push(prior_variance(i, j, tau2, alpha_decay, gamma));
        }
    }
    out
}

/// Zero-mean diagonal prior over the packed upper triangle.
pub fn solute_prior(d: usize, tau2: f64, alpha_decay: f64, gamma: f64) -> Result<GaussianPrior> {
    if d < 2 {
        return Err(MessError::InvalidParameter(format!(
            "dimension must be >= 2, got {d}"
        )));
    }
    let vars = prior_variances(d, tau2, alpha_decay, gamma);
    GaussianPrior::diagonal(vec![0.0; vars.len()], &vars)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoluteTransportModel {
    pub d: usize,
    pub hyper: SoluteHyperparameters,
    pub y: Vec<f64>,
}

impl SoluteTransportModel {
    pub fn new(d: usize, hyper: SoluteHyperparameters, y: Vec<f64>) -> Result<Self> {
        hyper.validate()?;
        if d < hyper.min_dim() {
            return Err(MessError::InvalidParameter(format!(
                "dimension {d} too small for observation window ending at mode {}",
                hyper.d0
            )));
        }
        if y.len() != hyper.k_obs + 1 {
            return Err(MessError::DimensionMismatch {
                expected: hyper.k_obs + 1,
                actual: y.len(),
            });
        }
        Ok(Self { d, hyper, y })
    }

    pub fn from_dataset(ds: &SoluteDataset) -> Result<Self> {
        Self::new(ds.d, ds.hyper, ds.y.clone())
    }

    pub fn param_count(&self) -> usize {
        param_count(self.d)
    }

    pub fn prior(&self) -> Result<GaussianPrior> {
        solute_prior(
            self.d,
            self.hyper.tau2,
            self.hyper.alpha_decay,
            self.hyper.gamma,
        )
    }

    pub fn observe(&self, theta: &[f64]) -> Vec<f64> {
        theta[self.hyper.observed_modes()].to_vec()
    }

    /// The potential `|y - P(theta)|^2 / (2 sigma^2)`.
    pub fn potential(&self, params: &[f64]) -> Result<f64> {
        let theta = solute_solve(params, self.d, self.hyper.kappa)?;
        let sq: f64 = self
            .observe(&theta)
            .iter()
            .zip(&self.y)
            .map(|(p, y)| (y - p) * (y - p))
            .sum();
        Ok(0.5 * sq / self.hyper.sigma2)
    }

    /// `-potential`; a singular system maps to `-inf`.
    pub fn loglik(&self, params: &[f64]) -> Result<f64> {
        match self.potential(params) {
            Ok(phi) => Ok(-phi),
            Err(MessError::SingularSystem) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

impl LogLikelihood for SoluteTransportModel {
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.loglik(x).unwrap_or(f64::NAN)
    }
}

/// A self-describing data set for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoluteDataset {
    pub schema_version: u32,
    pub seed: u64,
    pub d: usize,
    #[serde(rename = "hyperparameters")]
    pub hyper: SoluteHyperparameters,
    /// True packed upper triangle of `A_d`.
    pub a_params: Vec<f64>,
    pub theta: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws one master matrix of order 100 plus noise and cuts a nested data
/// set for each requested dimension from its leading block.
pub fn generate_solute_datasets(
    d_list: &[usize],
    hyper: &SoluteHyperparameters,
    seed: u64,
) -> Result<Vec<SoluteDataset>> {
    hyper.validate()?;
    for &d in d_list {
        if d < hyper.min_dim() || d > MASTER_DIM {
            return Err(MessError::InvalidParameter(format!(
                "dimension {d} outside [{}, {MASTER_DIM}]",
                hyper.min_dim()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let master_vars = prior_variances(MASTER_DIM, hyper.tau2, hyper.alpha_decay, hyper.gamma);
    let master: Vec<f64> = master_vars
        .iter()
        .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    // drawn to keep the stream layout fixed; no role in the observations
    let _z: Vec<f64> = (0..MASTER_DIM)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let sd = hyper.sigma2.sqrt();
    let eps: Vec<f64> = (0..MASTER_DIM)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect::<Vec<f64>>();

    d_list
        .iter()
        .map(|&d| {
            let mut a_params = Vec::with_capacity(param_count(d));
            for i in 0..d {
                for j in i + 1..d {
                    a_params.push(master[param_index(i, j, MASTER_DIM)]);
                }
            }
            let theta = solute_solve(&a_params, d, hyper.kappa)?;
            let y = hyper.observed_modes().map(|k| theta[k] + eps[k]).collect();
            Ok(SoluteDataset {
                schema_version: DATASET_SCHEMA_VERSION,
                seed,
                d,
                hyper: *hyper,
                a_params,
                theta,
                y,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_solution() {
        let theta = solute_solve(&vec![0.0; param_count(10)], 10, 0.02).unwrap();
        assert!((theta[0] - 50.0).abs() < 1e-10);
        assert!(theta[1..].iter().all(|&t| t == 0.0));
    }

    #[test]
    fn solver_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 12;
        let params: Vec<f64> = (0..param_count(d))
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let theta = solute_solve(&params, d, 0.02).unwrap();
        let mut a = unpack(&params, d).unwrap();
        for i in 0..d {
            a[(i, i)] += 0.02;
        }
        let mut r = a * DVector::from_column_slice(&theta);
        r[0] -= 1.0;
        assert!(r.norm() <= 1e-10);
    }

    #[test]
    fn pack_unpack_roundtrip() {
        let d = 7;
        let params: Vec<f64> = (0..param_count(d)).map(|k| k as f64 * 0.5 - 3.0).collect();
        let a = unpack(&params, d).unwrap();
        assert_eq!(pack(&a), params);
        assert_eq!(a.transpose(), -&a);
        assert_eq!(param_index(1, 2, d), 6);
        assert_eq!(params[param_index(2, 5, d)], a[(2, 5)]);
    }

    #[test]
    fn prior_variance_convention() {
        assert!((prior_variance(0, 1, 2.0, 3.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((prior_variance(1, 2, 2.0, 3.0, 2.0) - 2.0 / 216.0).abs() < 1e-15);
        for j in 2..8 {
            assert!(prior_variance(1, j + 1, 2.0, 3.0, 2.0) < prior_variance(1, j, 2.0, 3.0, 2.0));
        }
        let p = solute_prior(10, 2.0, 3.0, 2.0).unwrap();
        assert_eq!(p.dim(), 45);
        assert!((p.covariance()[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn potential_is_nonnegative_and_zero_at_fit() {
        let hyper = SoluteHyperparameters::default();
        let d = 8;
        let params: Vec<f64> = (0..param_count(d))
            .map(|k| ((k * 7) % 5) as f64 * 0.1 - 0.2)
            .collect();
        let theta = solute_solve(&params, d, hyper.kappa).unwrap();
        let y: Vec<f64> = theta[4..=6].to_vec();
        let m = SoluteTransportModel::new(d, hyper, y).unwrap();
        assert_eq!(m.potential(&params).unwrap(), 0.0);
        let other = vec![0.0; param_count(d)];
        assert!(m.potential(&other).unwrap() > 0.0);
    }

    #[test]
    fn permuted_assembly_gives_same_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 9;
        let params: Vec<f64> = (0..param_count(d))
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let theta = solute_solve(&params, d, 0.02).unwrap();
        // reverse the mode order, solve, then map back
        let perm: Vec<usize> = (0..d).rev().collect();
        let a = unpack(&params, d).unwrap();
        let pa = DMatrix::from_fn(d, d, |i, j| a[(perm[i], perm[j])]);
        let mut sys = pa.clone();
        for i in 0..d {
            sys[(i, i)] += 0.02;
        }
        let mut g = DVector::zeros(d);
        g[perm.iter().position(|&p| p == 0).unwrap()] = 1.0;
        let pt = sys.lu().solve(&g).unwrap();
        for i in 0..d {
            assert!((pt[i] - theta[perm[i]]).abs() < 1e-9);
        }
        let repacked = solute_solve(&pack(&unpack(&params, d).unwrap()), d, 0.02).unwrap();
        assert_eq!(repacked, theta);
    }

    #[test]
    fn datasets_are_nested_and_deterministic() {
        let hyper = SoluteHyperparameters::default();
        let sets = generate_solute_datasets(&[10, 15], &hyper, 11).unwrap();
        assert_eq!(sets[0].a_params.len(), 45);
        assert_eq!(sets[0].y.len(), 3);
        for i in 0..10 {
            for j in i + 1..10 {
                assert_eq!(
                    sets[0].a_params[param_index(i, j, 10)],
                    sets[1].a_params[param_index(i, j, 15)]
                );
            }
        }
        let again = generate_solute_datasets(&[10, 15], &hyper, 11).unwrap();
        assert_eq!(sets, again);
        assert!(generate_solute_datasets(&[5], &hyper, 11).is_err());
        assert!(generate_solute_datasets(&[101], &hyper, 11).is_err());
    }

    #[test]
    fn model_rejects_small_dimension() {
        assert!(
            SoluteTransportModel::new(6, SoluteHyperparameters::default(), vec![0.0; 3]).is_err()
        );
    }
}
