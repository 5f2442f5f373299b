//! Chain-quality metrics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{MessError, Result};
use crate::sampler::StepStats;

const MIN_SERIES: usize = 10;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased autocovariance estimates `gamma_0 .. gamma_{n-1}` via FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mu = mean(series);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mu, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let norm = (len * n) as f64;
    buf.iter().take(n).map(|c| c.re / norm).collect()
}

/// Effective sample size `N / (1 + 2 sum rho_t)` with the autocorrelation
/// sum truncated by the initial monotone positive-pairs rule. Clamped to
/// `(0, N]`.
pub fn effective_sample_size(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(MessError::SeriesTooShort {
            min: MIN_SERIES,
            len: n,
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(MessError::InvalidParameter(
            "series contains non-finite values".into(),
        ));
    }
    let acov = autocovariance(series);
    let var0 = acov[0];
    let scale = series.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(var0 > 1e-300) || var0 <= (1e-14 * scale).powi(2) {
        return Err(MessError::ConstantSeries);
    }
    let rho = |t: usize| if t < n { acov[t] / var0 } else { 0.0 };

    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        k += 1;
    }
    let tau = -1.0 + 2.0 * sum_pairs;
    let ess = n as f64 / tau;
    Ok(if ess.is_finite() && ess > 0.0 {
        ess.min(n as f64)
    } else {
        n as f64
    })
}

/// Monte Carlo standard error of the series mean.
pub fn mc_standard_error(series: &[f64]) -> Result<f64> {
    let ess = effective_sample_size(series)?;
    let mu = mean(series);
    let var = series.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (series.len() - 1) as f64;
    Ok((var / ess).sqrt())
}

/// Mean squared jump distance `mean_t |x_{t+1} - x_t|^2`.
pub fn msjd<S: AsRef<[f64]>>(chain: &[S]) -> Result<f64> {
    if chain.len() < 2 {
        return Err(MessError::SeriesTooShort {
            min: 2,
            len: chain.len(),
        });
    }
    let total: f64 = chain
        .windows(2)
        .map(|w| {
            w[0].as_ref()
                .iter()
                .zip(w[1].as_ref())
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
        })
        .sum();
    Ok(total / (chain.len() - 1) as f64)
}

/// Scalar-chain MSJD.
pub fn msjd_scalar(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(MessError::SeriesTooShort {
            min: 2,
            len: series.len(),
        });
    }
    Ok(series
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum::<f64>()
        / (series.len() - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub components: Vec<usize>,
    pub ess: Vec<f64>,
    pub component_msjd: Vec<f64>,
    pub msjd: f64,
    pub mean_shrink_iterations: f64,
    pub mean_likelihood_evaluations: f64,
    pub acceptance_rate: f64,
    pub kept_samples: usize,
    pub steps: usize,
    pub total_shrink_iterations: usize,
    pub total_likelihood_evaluations: usize,
}

impl ChainSummary {
    /// Arithmetic mean of the per-component effective sample sizes.
    pub fn mean_ess(&self) -> f64 {
        mean(&self.ess)
    }
}

/// Summarizes a chain after discarding the first `burn_in` iterations.
/// `samples` holds every `thinning`-th state; `components` selects the
/// sample columns to diagnose (all when `None`).
pub fn summarize<S: AsRef<[f64]>>(
    samples: &[S],
    stats: &[StepStats],
    burn_in: usize,
    thinning: usize,
    components: Option<&[usize]>,
) -> Result<ChainSummary> {
    let thinning = thinning.max(1);
    if burn_in >= stats.len() {
        return Err(MessError::InvalidParameter(format!(
            "burn-in {burn_in} leaves no steps out of {}",
            stats.len()
        )));
    }
    let skip = (burn_in / thinning).min(samples.len());
    let kept = &samples[skip..];
    if kept.is_empty() {
        return Err(MessError::InvalidParameter(
            "no samples left after burn-in".into(),
        ));
    }
    let dim = kept[0].as_ref().len();
    let comps: Vec<usize> = match components {
        Some(c) => c.to_vec(),
        None => (0..dim).collect(),
    };
    if let Some(&bad) = comps.iter().find(|&&c| c >= dim) {
        return Err(MessError::IndexOutOfRange {
            index: bad,
            len: dim,
        });
    }
    let mut ess = Vec::with_capacity(comps.len());
    let mut component_msjd = Vec::with_capacity(comps.len());
    for &c in &comps {
        let series: Vec<f64> = kept.iter().map(|s| s.as_ref()[c]).collect();
        ess.push(effective_sample_size(&series)?);
        component_msjd.push(msjd_scalar(&series)?);
    }
    let post = &stats[burn_in..];
    let steps = post.len();
    let total_shrink: usize = post.iter().map(|s| s.shrink_iterations).sum();
    let total_evals: usize = post.iter().map(|s| s.likelihood_evaluations).sum();
    let accepted = post.iter().filter(|s| s.accepted).count();
    Ok(ChainSummary {
        components: comps,
        ess,
        component_msjd,
        msjd: msjd(kept)?,
        mean_shrink_iterations: total_shrink as f64 / steps as f64,
        mean_likelihood_evaluations: total_evals as f64 / steps as f64,
        acceptance_rate: accepted as f64 / steps as f64,
        kept_samples: kept.len(),
        steps,
        total_shrink_iterations: total_shrink,
        total_likelihood_evaluations: total_evals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[min, max]` of the series.
pub fn export_histogram(series: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(MessError::InvalidParameter("bins must be >= 1".into()));
    }
    if series.is_empty() {
        return Err(MessError::SeriesTooShort { min: 1, len: 0 });
    }
    let low = series.iter().copied().fold(f64::INFINITY, f64::min);
    let high = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; bins];
    let width = high - low;
    for &x in series {
        let idx = if width > 0.0 {
            (((x - low) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(Histogram { low, high, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (1.0 - rho * rho).sqrt();
        let mut x = rng.sample::<f64, _>(StandardNormal);
        (0..n)
            .map(|_| {
                x = rho * x + s * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let x = ar1(0.5, 200, 1);
        let acov = autocovariance(&x);
        let mu = mean(&x);
        for lag in [0, 1, 5, 50] {
            let direct: f64 = (0..x.len() - lag)
                .map(|t| (x[t] - mu) * (x[t + lag] - mu))
                .sum::<f64>()
                / x.len() as f64;
            assert!((acov[lag] - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn iid_ess_near_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&x).unwrap();
        assert!((8_000.0..=12_000.0).contains(&ess), "{ess}");
    }

    #[test]
    fn ar1_ess_matches_analytic() {
        let rho = 0.9;
        let n = 100_000;
        let x = ar1(rho, n, 3);
        let expected = n as f64 * (1.0 - rho) / (1.0 + rho);
        let ess = effective_sample_size(&x).unwrap();
        assert!(
            (ess - expected).abs() / expected < 0.25,
            "{ess} vs {expected}"
        );
    }

    #[test]
    fn ess_errors() {
        assert_eq!(
            effective_sample_size(&[1.0; 50]),
            Err(MessError::ConstantSeries)
        );
        assert!(matches!(
            effective_sample_size(&[1.0, 2.0]),
            Err(MessError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn msjd_examples() {
        assert_eq!(msjd(&[[0.0], [1.0], [0.0], [1.0]]).unwrap(), 1.0);
        assert_eq!(msjd(&[[2.0, 1.0]; 5]).unwrap(), 0.0);
        let a = [0.0, 0.0];
        let b = [3.0, 0.0];
        assert_eq!(msjd(&[a, b, a, b, a]).unwrap(), 9.0);
        assert!(msjd(&[[1.0]]).is_err());
    }

    #[test]
    fn msjd_time_reversal() {
        let x = ar1(0.3, 100, 4);
        let chain: Vec<Vec<f64>> = x.chunks(2).map(|c| c.to_vec()).collect();
        let mut rev = chain.clone();
        rev.reverse();
        assert!((msjd(&chain).unwrap() - msjd(&rev).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn thinned_ar1_ess_approaches_length() {
        let x = ar1(0.95, 60_000, 5);
        let mut ratios = Vec::new();
        for tau in [1, 10, 40, 200] {
            let thinned: Vec<f64> = x.iter().step_by(tau).copied().collect();
            ratios.push(effective_sample_size(&thinned).unwrap() / thinned.len() as f64);
        }
        // at lag 200 the thinned chain is effectively iid, so only the
        // correlated regime is required to be strictly increasing
        for w in ratios[..3].windows(2) {
            assert!(w[1] > w[0], "{ratios:?}");
        }
        assert!(ratios[3] > 0.7 && ratios[3] > ratios[1], "{ratios:?}");
    }

    #[test]
    fn histogram_cases() {
        let h = export_histogram(&[2.0; 7], 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        let x = ar1(0.2, 1000, 6);
        let h = export_histogram(&x, 13).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 1000);
        assert!(export_histogram(&[], 3).is_err());
    }

    #[test]
    fn summary_burn_in_and_counters() {
        let x = ar1(0.5, 400, 7);
        let samples: Vec<Vec<f64>> = x.iter().map(|&v| vec![v, -v]).collect();
        let stats: Vec<StepStats> = (0..400)
            .map(|i| StepStats {
                shrink_iterations: 1 + i % 3,
                likelihood_evaluations: 4 * (1 + i % 3),
                accepted: true,
                ..Default::default()
            })
            .collect();
        let full = summarize(&samples, &stats, 0, 1, None).unwrap();
        assert_eq!(full.kept_samples, 400);
        assert_eq!(
            full.total_shrink_iterations,
            stats.iter().map(|s| s.shrink_iterations).sum::<usize>()
        );
        assert!(
            (full.mean_likelihood_evaluations - 4.0 * full.mean_shrink_iterations).abs() < 1e-12
        );
        let burned = summarize(&samples, &stats, 100, 1, Some(&[1])).unwrap();
        assert_eq!(burned.kept_samples, 300);
        assert_eq!(burned.ess.len(), 1);
        assert!(summarize(&samples, &stats, 400, 1, None).is_err());
    }
}
