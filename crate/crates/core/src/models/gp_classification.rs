//! Gaussian process classification with a logistic link on a synthetic
//! two-cluster data set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::error::{MessError, Result};
use crate::prior::GaussianPrior;
use crate::sampler::LogLikelihood;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpClassificationConfig {
    pub n_points: usize,
    pub amplitude: f64,
    pub length_scale: f64,
    pub jitter: f64,
    /// Distance of each cluster centre from the origin along the diagonal.
    pub cluster_offset: f64,
    pub cluster_spread: f64,
}

impl Default for GpClassificationConfig {
    fn default() -> Self {
        Self {
            n_points: 200,
            amplitude: 1.0,
            length_scale: 1.0,
            jitter: 1e-6,
            cluster_offset: 1.0,
            cluster_spread: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpClassificationModel {
    pub inputs: Vec<[f64; 2]>,
    /// Labels in `{-1, +1}`.
    pub labels: Vec<f64>,
    pub amplitude: f64,
    pub length_scale: f64,
    pub jitter: f64,
}

/// `log(1 / (1 + exp(-t)))` without overflow.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

impl GpClassificationModel {
    pub fn new(
        inputs: Vec<[f64; 2]>,
        labels: Vec<f64>,
        amplitude: f64,
        length_scale: f64,
        jitter: f64,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(MessError::DimensionMismatch {
                expected: inputs.len(),
                actual: labels.len(),
            });
        }
        if labels.iter().any(|&z| z != 1.0 && z != -1.0) {
            return Err(MessError::InvalidParameter(
                "labels must be -1 or +1".into(),
            ));
        }
        if !(amplitude > 0.0 && length_scale > 0.0 && jitter >= 0.0) {
            return Err(MessError::InvalidParameter(
                "kernel parameters must be positive".into(),
            ));
        }
        Ok(Self {
            inputs,
            labels,
            amplitude,
            length_scale,
            jitter,
        })
    }

    /// Half the points around `(+o, +o)` labelled `+1`, half around
    /// `(-o, -o)` labelled `-1`.
    pub fn simulate(config: &GpClassificationConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(config.n_points);
        let mut labels = Vec::with_capacity(config.n_points);
        for i in 0..config.n_points {
            let z = if i % 2 == 0 { 1.0 } else { -1.0 };
            let cx = z * config.cluster_offset;
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            inputs.push([
                cx + config.cluster_spread * a,
                cx + config.cluster_spread * b,
            ]);
            labels.push(z);
        }
        Self::new(
            inputs,
            labels,
            config.amplitude,
            config.length_scale,
            config.jitter,
        )
    }

    pub fn dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let amp2 = self.amplitude * self.amplitude;
        let l2 = self.length_scale * self.length_scale;
        DMatrix::from_fn(n, n, |i, j| {
            let dx = self.inputs[i][0] - self.inputs[j][0];
            let dy = self.inputs[i][1] - self.inputs[j][1];
            let k = amp2 * (-0.5 * (dx * dx + dy * dy) / l2).exp();
            if i == j {
                k + self.jitter
            } else {
                k
            }
        })
    }

    /// Zero-mean GP prior on the latent function values.
    pub fn prior(&self) -> Result<GaussianPrior> {
        GaussianPrior::new(vec![0.0; self.dim()], self.kernel_matrix())
    }

    pub fn loglik(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.dim() {
            return Err(MessError::DimensionMismatch {
                expected: self.dim(),
                actual: f.len(),
            });
        }
        Ok(self.eval(f))
    }

    fn eval(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.labels)
            .map(|(fi, zi)| log_sigmoid(zi * fi))
            .sum()
    }
}

impl LogLikelihood for GpClassificationModel {
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
}
