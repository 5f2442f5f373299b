//! Target likelihoods and data generators.

pub mod conjugate;
pub mod deconvolution;
pub mod gp_classification;
pub mod solute;

pub use conjugate::ConjugateGaussianModel;
pub use deconvolution::{BlindDeconvolutionConfig, BlindDeconvolutionModel, ConvolutionMode};
pub use gp_classification::{GpClassificationConfig, GpClassificationModel};
pub use solute::{SoluteDataset, SoluteHyperparameters, SoluteTransportModel};

use nalgebra::DMatrix;

/// Squared-exponential covariance `amp^2 exp(-|a-b|^2 / (2 l^2))` on 1-D
/// grid positions, plus `jitter` on the diagonal.
pub(crate) fn squared_exponential_grid(
    n: usize,
    amplitude: f64,
    length_scale: f64,
    jitter: f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let d = i as f64 - j as f64;
        let k = amplitude * amplitude * (-0.5 * d * d / (length_scale * length_scale)).exp();
        if i == j {
            k + jitter
        } else {
            k
        }
    })
}
