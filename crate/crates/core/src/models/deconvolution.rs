//! One-dimensional blind deconvolution `d = w * c + e` with independent
//! Gaussian priors on the blur kernel `w` and the signal `c`.
//!
//! The sampled state is `(w, c_free)`: the kernel followed by the signal
//! coordinates left free after conditioning the signal prior on a few
//! exactly observed entries.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::squared_exponential_grid;
use crate::error::{MessError, Result};
use crate::prior::{ConditionedPrior, GaussianPrior};
use crate::sampler::LogLikelihood;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMode {
    /// Linear convolution truncated to the first `n` samples.
    #[default]
    Truncated,
    /// Periodic convolution of length `n`.
    Circular,
}

/// `(w * c)_t = sum_s w_s c_{t-s}` for `t < c.len()`.
pub fn convolve(kernel: &[f64], signal: &[f64], mode: ConvolutionMode) -> Vec<f64> {
    let n = signal.len();
    let mut out = vec![0.0; n];
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (s, &w) in kernel.iter().enumerate() {
            match mode {
                ConvolutionMode::Truncated => {
                    if s > t {
                        break;
                    }
                    acc += w * signal[t - s];
                }
                ConvolutionMode::Circular => acc += w * signal[(t + n * (s / n + 1) - s) % n],
            }
        }
        *o = acc;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlindDeconvolutionConfig {
    pub signal_len: usize,
    pub kernel_len: usize,
    pub noise_variance: f64,
    pub signal_amplitude: f64,
    pub signal_length_scale: f64,
    pub kernel_amplitude: f64,
    pub kernel_length_scale: f64,
    pub exact_observations: usize,
    pub jitter: f64,
    pub mode: ConvolutionMode,
}

impl Default for BlindDeconvolutionConfig {
    fn default() -> Self {
        Self {
            signal_len: 24,
            kernel_len: 12,
            noise_variance: 0.05,
            signal_amplitude: 1.0,
            signal_length_scale: 1.0,
            kernel_amplitude: 0.1,
            kernel_length_scale: 2.0,
            exact_observations: 4,
            jitter: 1e-6,
            mode: ConvolutionMode::Truncated,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlindDeconvolutionModel {
    pub observations: Vec<f64>,
    pub noise_variance: f64,
    pub mode: ConvolutionMode,
    pub kernel_prior: GaussianPrior,
    pub signal_prior: ConditionedPrior,
    pub true_kernel: Vec<f64>,
    pub true_signal: Vec<f64>,
}

impl BlindDeconvolutionModel {
    /// Draws `w` and `c` from zero-mean squared-exponential priors, forms
    /// noisy observations and conditions the signal prior on
    /// `exact_observations` evenly spaced true signal values.
    pub fn simulate(config: &BlindDeconvolutionConfig, seed: u64) -> Result<Self> {
        let n = config.signal_len;
        let kw = config.kernel_len;
        if n == 0 || kw == 0 {
            return Err(MessError::InvalidParameter(
                "signal and kernel lengths must be positive".into(),
            ));
        }
        if !(config.noise_variance > 0.0) {
            return Err(MessError::InvalidParameter(format!(
                "noise variance must be positive, got {}",
                config.noise_variance
            )));
        }
        if config.exact_observations > n {
            return Err(MessError::InvalidParameter(
                "more exact observations than signal entries".into(),
            ));
        }
        let kernel_prior = GaussianPrior::new(
            vec![0.0; kw],
            squared_exponential_grid(
                kw,
                config.kernel_amplitude,
                config.kernel_length_scale,
                config.jitter,
            ),
        )?;
        let signal_full = GaussianPrior::new(
            vec![0.0; n],
            squared_exponential_grid(
                n,
                config.signal_amplitude,
                config.signal_length_scale,
                config.jitter,
            ),
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let true_kernel = kernel_prior.sample(&mut rng);
        let true_signal = signal_full.sample(&mut rng);
        let sd = config.noise_variance.sqrt();
        let observations: Vec<f64> = convolve(&true_kernel, &true_signal, config.mode)
            .into_iter()
            .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();

        let k = config.exact_observations;
        let positions: Vec<usize> = (0..k).map(|i| ((2 * i + 1) * n) / (2 * k)).collect();
        let values: Vec<f64> = positions.iter().map(|&p| true_signal[p]).collect();
        let signal_prior = signal_full.condition_on_exact(&positions, &values)?;
        Ok(Self {
            observations,
            noise_variance: config.noise_variance,
            mode: config.mode,
            kernel_prior,
            signal_prior,
            true_kernel,
            true_signal,
        })
    }

    pub fn signal_len(&self) -> usize {
        self.observations.len()
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_prior.dim()
    }

    /// Dimension of the sampled state `(w, c_free)`.
    pub fn state_dim(&self) -> usize {
        self.kernel_len() + self.signal_prior.prior.dim()
    }

    /// Block-diagonal prior over `(w, c_free)`.
    pub fn state_prior(&self) -> Result<GaussianPrior> {
        let kw = self.kernel_len();
        let nf = self.signal_prior.prior.dim();
        let mut cov = DMatrix::zeros(kw + nf, kw + nf);
        cov.view_mut((0, 0), (kw, kw))
            .copy_from(self.kernel_prior.covariance());
        cov.view_mut((kw, kw), (nf, nf))
            .copy_from(self.signal_prior.prior.covariance());
        let mut mean = self.kernel_prior.mean().to_vec();
        mean.extend_from_slice(self.signal_prior.prior.mean());
        GaussianPrior::new(mean, cov)
    }

    /// Splits a reduced state into `(w, c)` with `c` at full length.
    pub fn split(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if state.len() != self.state_dim() {
            return Err(MessError::DimensionMismatch {
                expected: self.state_dim(),
                actual: state.len(),
            });
        }
        let kw = self.kernel_len();
        Ok((
            state[..kw].to_vec(),
            self.signal_prior.reassemble(&state[kw..]),
        ))
    }

    /// Full-length state `(w, c)`.
    pub fn expand(&self, state: &[f64]) -> Result<Vec<f64>> {
        let (mut w, c) = self.split(state)?;
        w.extend(c);
        Ok(w)
    }

    /// Gaussian log-likelihood of the residual `d - w * c`.
    pub fn loglik_full(&self, kernel: &[f64], signal: &[f64]) -> Result<f64> {
        if kernel.len() != self.kernel_len() {
            return Err(MessError::DimensionMismatch {
                expected: self.kernel_len(),
                actual: kernel.len(),
            });
        }
        if signal.len() != self.signal_len() {
            return Err(MessError::DimensionMismatch {
                expected: self.signal_len(),
                actual: signal.len(),
            });
        }
        Ok(self.eval_full(kernel, signal))
    }

    fn eval_full(&self, kernel: &[f64], signal: &[f64]) -> f64 {
        let pred = convolve(kernel, signal, self.mode);
        let sq: f64 = pred
            .iter()
            .zip(&self.observations)
            .map(|(p, d)| (d - p) * (d - p))
            .sum();
        let n = self.signal_len() as f64;
        -0.5 * sq / self.noise_variance - 0.5 * n * (2.0 * PI * self.noise_variance).ln()
    }
}

impl LogLikelihood for BlindDeconvolutionModel {
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        let kw = self.kernel_len();
        let signal = self.signal_prior.reassemble(&x[kw..]);
        self.eval_full(&x[..kw], &signal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> BlindDeconvolutionModel {
        BlindDeconvolutionModel::simulate(&BlindDeconvolutionConfig::default(), 3).unwrap()
    }

    #[test]
    fn impulse_kernel_is_identity() {
        let c = [1.0, -2.0, 0.5, 3.0];
        let w = [1.0, 0.0, 0.0];
        assert_eq!(convolve(&w, &c, ConvolutionMode::Truncated), c.to_vec());
        assert_eq!(convolve(&w, &c, ConvolutionMode::Circular), c.to_vec());

        let m = model();
        let mut delta = vec![0.0; 12];
        delta[0] = 1.0;
        let c = m.true_signal.clone();
        let expected: f64 = -0.5
            * c.iter()
                .zip(&m.observations)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
            / m.noise_variance
            - 12.0 * (2.0 * PI * m.noise_variance).ln();
        assert!((m.loglik_full(&delta, &c).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn shifted_impulse() {
        let c = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            convolve(&[0.0, 1.0], &c, ConvolutionMode::Truncated),
            vec![0.0, 1.0, 2.0, 3.0]
        );
        assert_eq!(
            convolve(&[0.0, 1.0], &c, ConvolutionMode::Circular),
            vec![4.0, 1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn sign_flip_symmetry_is_exact() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let w: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.5).collect();
            let c: Vec<f64> = (0..24).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let nw: Vec<f64> = w.iter().map(|v| -v).collect();
            let nc: Vec<f64> = c.iter().map(|v| -v).collect();
            assert_eq!(
                m.loglik_full(&w, &c).unwrap(),
                m.loglik_full(&nw, &nc).unwrap()
            );
        }
    }

    #[test]
    fn layout_and_conditioning() {
        let m = model();
        assert_eq!(m.state_dim(), 12 + 20);
        let prior = m.state_prior().unwrap();
        assert_eq!(prior.dim(), 32);
        let x = prior.mean().to_vec();
        let (w, c) = m.split(&x).unwrap();
        assert_eq!(w.len(), 12);
        for (&p, &v) in m
            .signal_prior
            .fixed_indices
            .iter()
            .zip(&m.signal_prior.fixed_values)
        {
            assert_eq!(c[p], v);
            assert_eq!(v, m.true_signal[p]);
        }
        assert_eq!(m.signal_prior.fixed_indices, vec![3, 9, 15, 21]);
        let full = m.expand(&x).unwrap();
        assert!(
            (m.log_likelihood(&x) - m.loglik_full(&full[..12], &full[12..]).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn zero_noise_is_rejected() {
        let cfg = BlindDeconvolutionConfig {
            noise_variance: 0.0,
            ..Default::default()
        };
        assert!(BlindDeconvolutionModel::simulate(&cfg, 1).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = model();
        let b = model();
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.true_kernel, b.true_kernel);
    }
}
