//! Step and chain drivers: elliptical slice sampling, its multiproposal
//! generalization and a prior-preconditioned random-walk Metropolis baseline.
//!
//! Random draws inside a step always follow the same order: slice uniform,
//! anchor angle, prior draw, then `M` angle uniforms per shrink iteration and
//! finally the row-sampling uniform when the accepting row is not
//! deterministic. Likelihood evaluations never touch the stream, so the
//! worker count cannot change a chain.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipse::{
    draw_angles_into, shrink, sort_with_anchor, valid_set, AngleBracket, CandidateLabel,
};
use crate::error::{MessError, Result};
use crate::prior::{ellipse_point_into, GaussianPrior};
use crate::transition::{build_matrix, sample_row, DistanceKind, LpMethod};

pub const DEFAULT_MAX_SHRINK: usize = 1000;

/// A log-likelihood that can be evaluated concurrently.
pub trait LogLikelihood: Sync {
    fn log_likelihood(&self, x: &[f64]) -> f64;
}

impl<F> LogLikelihood for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn log_likelihood(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Constant likelihood; the posterior is the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatLikelihood;

impl LogLikelihood for FlatLikelihood {
    fn log_likelihood(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

fn checked(index: usize, value: f64) -> Result<f64> {
    if value.is_nan() || value == f64::INFINITY {
        Err(MessError::InvalidLikelihood { index, value })
    } else {
        Ok(value)
    }
}

/// Current state with its cached log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub log_likelihood: f64,
}

impl ChainState {
    pub fn new<L: LogLikelihood + ?Sized>(x: Vec<f64>, loglik: &L) -> Result<Self> {
        let ll = checked(0, loglik.log_likelihood(&x))?;
        if ll == f64::NEG_INFINITY {
            return Err(MessError::InvalidParameter(
                "initial state has zero likelihood".into(),
            ));
        }
        Ok(Self {
            x,
            log_likelihood: ll,
        })
    }

    /// Whether the cached value still matches the model within `tol`.
    pub fn is_consistent<L: LogLikelihood + ?Sized>(&self, loglik: &L, tol: f64) -> bool {
        (loglik.log_likelihood(&self.x) - self.log_likelihood).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MessConfig {
    pub proposals: usize,
    pub distance: DistanceKind,
    pub lp_method: LpMethod,
    pub max_shrink_iterations: usize,
    pub workers: usize,
}

impl Default for MessConfig {
    fn default() -> Self {
        Self {
            proposals: 1,
            distance: DistanceKind::Uniform,
            lp_method: LpMethod::Assignment,
            max_shrink_iterations: DEFAULT_MAX_SHRINK,
            workers: 1,
        }
    }
}

impl MessConfig {
    pub fn new(proposals: usize, distance: DistanceKind) -> Self {
        Self {
            proposals,
            distance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.proposals == 0 {
            return Err(MessError::InvalidParameter("proposals must be >= 1".into()));
        }
        if self.max_shrink_iterations == 0 {
            return Err(MessError::InvalidParameter(
                "max_shrink_iterations must be >= 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(MessError::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub shrink_iterations: usize,
    pub likelihood_evaluations: usize,
    pub accepted_angle: f64,
    pub squared_jump: f64,
    /// Always true for the slice samplers.
    pub accepted: bool,
}

/// Evaluates batches of likelihoods, optionally on a dedicated worker pool.
/// Results are always returned in proposal order.
pub struct Evaluator {
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Evaluator")
            .field("workers", &self.workers())
            .finish()
    }
}

impl Evaluator {
    pub fn sequential() -> Self {
        Self { pool: None }
    }

    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(MessError::InvalidParameter("workers must be >= 1".into()));
        }
        if workers == 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| MessError::InvalidParameter(format!("worker pool: {e}")))?;
        Ok(Self { pool: Some(pool) })
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn evaluate<L: LogLikelihood + ?Sized>(
        &self,
        loglik: &L,
        states: &[Vec<f64>],
        out: &mut Vec<f64>,
    ) {
        match &self.pool {
            Some(pool) if states.len() > 1 => pool.install(|| {
                states
                    .par_iter()
                    .map(|s| loglik.log_likelihood(s))
                    .collect_into_vec(out)
            }),
            _ => {
                out.clear();
                out.extend(states.iter().map(|s| loglik.log_likelihood(s)));
            }
        }
    }
}

struct StepStart {
    log_y: f64,
    alpha: f64,
    nu: Vec<f64>,
}

fn begin_step<R: Rng + ?Sized>(
    state: &ChainState,
    prior: &GaussianPrior,
    rng: &mut R,
) -> Result<StepStart> {
    if state.x.len() != prior.dim() {
        return Err(MessError::DimensionMismatch {
            expected: prior.dim(),
            actual: state.x.len(),
        });
    }
    let u: f64 = rng.sample(Open01);
    let log_y = state.log_likelihood + u.ln();
    let alpha = TAU * (1.0 - rng.random::<f64>());
    let nu = prior.sample(rng);
    Ok(StepStart { log_y, alpha, nu })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One elliptical slice sampling update with a single angle per shrink
/// iteration.
pub fn ess_step<L, R>(
    state: &ChainState,
    prior: &GaussianPrior,
    loglik: &L,
    max_shrink_iterations: usize,
    rng: &mut R,
) -> Result<(ChainState, StepStats)>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let StepStart { log_y, alpha, nu } = begin_step(state, prior, rng)?;
    let mean = prior.mean();
    let mut bracket = AngleBracket::full(alpha);
    let mut angle = Vec::with_capacity(1);
    let mut proposal = Vec::with_capacity(state.x.len());
    for k in 1..=max_shrink_iterations {
        draw_angles_into(&bracket, 1, rng, &mut angle);
        let phi = angle[0];
        ellipse_point_into(&state.x, &nu, phi - alpha, mean, &mut proposal);
        let ll = checked(0, loglik.log_likelihood(&proposal))?;
        if ll >= log_y {
            let stats = StepStats {
                shrink_iterations: k,
                likelihood_evaluations: k,
                accepted_angle: phi,
                squared_jump: squared_distance(&proposal, &state.x),
                accepted: true,
            };
            return Ok((
                ChainState {
                    x: proposal,
                    log_likelihood: ll,
                },
                stats,
            ));
        }
        bracket = shrink(&bracket, &angle)?;
    }
    Err(MessError::ShrinkCapExceeded {
        cap: max_shrink_iterations,
    })
}

/// One multiproposal elliptical slice sampling update.
pub fn mess_step<L, R>(
    state: &ChainState,
    prior: &GaussianPrior,
    loglik: &L,
    config: &MessConfig,
    evaluator: &Evaluator,
    rng: &mut R,
) -> Result<(ChainState, StepStats)>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    let m = config.proposals;
    let StepStart { log_y, alpha, nu } = begin_step(state, prior, rng)?;
    let mean = prior.mean();
    let mut bracket = AngleBracket::full(alpha);
    let mut angles = Vec::with_capacity(m);
    let mut states: Vec<Vec<f64>> = vec![Vec::with_capacity(state.x.len()); m];
    let mut lls = Vec::with_capacity(m);

    for k in 1..=config.max_shrink_iterations {
        draw_angles_into(&bracket, m, rng, &mut angles);
        for (phi, s) in angles.iter().zip(states.iter_mut()) {
            ellipse_point_into(&state.x, &nu, phi - alpha, mean, s);
        }
        evaluator.evaluate(loglik, &states, &mut lls);
        let valid = valid_set(&lls, log_y)?;
        if valid.is_empty() {
            bracket = shrink(&bracket, &angles)?;
            continue;
        }

        let labelled: Vec<(usize, f64)> = valid.iter().map(|&j| (j, angles[j])).collect();
        let sorted = sort_with_anchor(alpha, &labelled);
        let matrix = if config.distance == DistanceKind::Euclidean {
            let ordered: Vec<&[f64]> = sorted
                .labels
                .iter()
                .map(|l| match *l {
                    CandidateLabel::Anchor => state.x.as_slice(),
                    CandidateLabel::Proposal(j) => states[j].as_slice(),
                })
                .collect();
            build_matrix(config.distance, config.lp_method, &sorted.angles, &ordered)?
        } else {
            build_matrix::<&[f64]>(config.distance, config.lp_method, &sorted.angles, &[])?
        };
        let s = sample_row(&matrix, sorted.anchor_position, rng);
        let CandidateLabel::Proposal(chosen) = sorted.label_at(s) else {
            unreachable!("transition matrices have a zero diagonal");
        };
        let x = std::mem::take(&mut states[chosen]);
        let stats = StepStats {
            shrink_iterations: k,
            likelihood_evaluations: k * m,
            accepted_angle: angles[chosen],
            squared_jump: squared_distance(&x, &state.x),
            accepted: true,
        };
        return Ok((
            ChainState {
                x,
                log_likelihood: lls[chosen],
            },
            stats,
        ));
    }
    Err(MessError::ShrinkCapExceeded {
        cap: config.max_shrink_iterations,
    })
}

/// Random-walk Metropolis with proposal `N(x, scale^2 C)` where `C` is the
/// prior covariance.
pub fn mh_step<L, R>(
    state: &ChainState,
    prior: &GaussianPrior,
    loglik: &L,
    scale: f64,
    rng: &mut R,
) -> Result<(ChainState, StepStats)>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    if !(scale > 0.0) {
        return Err(MessError::InvalidParameter(format!(
            "MH scale must be positive, got {scale}"
        )));
    }
    let n = prior.dim();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let proposal = prior.add_correlated(&state.x, &z, scale);
    let ll = checked(0, loglik.log_likelihood(&proposal))?;
    let log_ratio =
        ll + prior.log_density(&proposal)? - state.log_likelihood - prior.log_density(&state.x)?;
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        let stats = StepStats {
            shrink_iterations: 0,
            likelihood_evaluations: 1,
            accepted_angle: 0.0,
            squared_jump: squared_distance(&proposal, &state.x),
            accepted: true,
        };
        Ok((
            ChainState {
                x: proposal,
                log_likelihood: ll,
            },
            stats,
        ))
    } else {
        let stats = StepStats {
            shrink_iterations: 0,
            likelihood_evaluations: 1,
            accepted_angle: 0.0,
            squared_jump: 0.0,
            accepted: false,
        };
        Ok((state.clone(), stats))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhTuning {
    pub scale: f64,
    pub acceptance_rate: f64,
    pub rounds: usize,
}

pub const MH_SCALE_BRACKET: (f64, f64) = (1e-8, 1e4);
const MH_TUNE_ROUNDS: usize = 30;
const MH_TUNE_TOL: f64 = 0.01;

/// Acceptance rate of a pilot MH chain started at `start`.
pub fn mh_acceptance_rate<L>(
    prior: &GaussianPrior,
    loglik: &L,
    start: &ChainState,
    scale: f64,
    pilot_length: usize,
    seed: u64,
) -> Result<f64>
where
    L: LogLikelihood + ?Sized,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = start.clone();
    let mut accepted = 0usize;
    for _ in 0..pilot_length {
        let (next, stats) = mh_step(&state, prior, loglik, scale, &mut rng)?;
        accepted += stats.accepted as usize;
        state = next;
    }
    Ok(accepted as f64 / pilot_length as f64)
}

/// Bisection on `ln(scale)` until a pilot chain's acceptance rate is within
/// 0.01 of `target_rate`. Every pilot uses the same seed and start, so the
/// rate is a deterministic function of the scale.
pub fn tune_mh<L>(
    prior: &GaussianPrior,
    loglik: &L,
    start: &ChainState,
    target_rate: f64,
    pilot_length: usize,
    seed: u64,
) -> Result<MhTuning>
where
    L: LogLikelihood + ?Sized,
{
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(MessError::InvalidParameter(format!(
            "target acceptance rate must be in (0, 1), got {target_rate}"
        )));
    }
    if pilot_length == 0 {
        return Err(MessError::InvalidParameter(
            "pilot_length must be >= 1".into(),
        ));
    }
    let (lo0, hi0) = (MH_SCALE_BRACKET.0.ln(), MH_SCALE_BRACKET.1.ln());
    let (mut lo, mut hi) = (lo0, hi0);
    let mut best = MhTuning {
        scale: f64::NAN,
        acceptance_rate: f64::NAN,
        rounds: 0,
    };
    for round in 1..=MH_TUNE_ROUNDS {
        let mid = 0.5 * (lo + hi);
        let scale = mid.exp();
        let rate = mh_acceptance_rate(prior, loglik, start, scale, pilot_length, seed)?;
        if best.acceptance_rate.is_nan()
            || (rate - target_rate).abs() < (best.acceptance_rate - target_rate).abs()
        {
            best = MhTuning {
                scale,
                acceptance_rate: rate,
                rounds: round,
            };
        }
        if (rate - target_rate).abs() <= MH_TUNE_TOL {
            return Ok(MhTuning {
                scale,
                acceptance_rate: rate,
                rounds: round,
            });
        }
        if rate > target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // collapsed onto an end of the bracket: the target is out of reach
    let edge = 1e-3 * (hi0 - lo0);
    if hi - lo0 < edge || hi0 - lo < edge {
        return Err(MessError::TuningFailed {
            closest_rate: best.acceptance_rate,
            scale: best.scale,
        });
    }
    Ok(best)
}

/// Which update a chain uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerSpec {
    Ess {
        #[serde(default = "default_max_shrink")]
        max_shrink_iterations: usize,
    },
    Mess(MessConfig),
    Mh {
        scale: f64,
    },
}

fn default_max_shrink() -> usize {
    DEFAULT_MAX_SHRINK
}

impl SamplerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerSpec::Ess { .. } => "ess",
            SamplerSpec::Mess(_) => "mess",
            SamplerSpec::Mh { .. } => "mh",
        }
    }

    pub fn proposals(&self) -> usize {
        match self {
            SamplerSpec::Mess(c) => c.proposals,
            _ => 1,
        }
    }

    pub fn distance(&self) -> Option<DistanceKind> {
        match self {
            SamplerSpec::Mess(c) => Some(c.distance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub iterations: usize,
    pub seed: u64,
    pub thinning: usize,
    pub workers: usize,
}

impl ChainOptions {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            thinning: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChainOutput {
    /// Thinned states, one per kept iteration.
    pub samples: Vec<Vec<f64>>,
    /// Statistics for every step, before thinning.
    pub stats: Vec<StepStats>,
    pub final_state: Option<ChainState>,
}

impl ChainOutput {
    /// Column `component` of the thinned samples.
    pub fn component(&self, component: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[component]).collect()
    }
}

/// A chain that stopped early; `partial` holds everything produced before
/// the failing iteration.
#[derive(Debug)]
pub struct ChainFailure {
    pub error: MessError,
    pub partial: ChainOutput,
}

impl std::fmt::Display for ChainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for ChainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<MessError> for ChainFailure {
    fn from(error: MessError) -> Self {
        Self {
            error,
            partial: ChainOutput::default(),
        }
    }
}

/// Runs `options.iterations` steps from `initial`, keeping every
/// `options.thinning`-th state.
pub fn run_chain<L>(
    spec: &SamplerSpec,
    prior: &GaussianPrior,
    loglik: &L,
    initial: Vec<f64>,
    options: &ChainOptions,
) -> std::result::Result<ChainOutput, ChainFailure>
where
    L: LogLikelihood + ?Sized,
{
    run_chain_recording(spec, prior, loglik, initial, options, None)
}

/// As [`run_chain`], keeping only the listed components in `samples`.
pub fn run_chain_recording<L>(
    spec: &SamplerSpec,
    prior: &GaussianPrior,
    loglik: &L,
    initial: Vec<f64>,
    options: &ChainOptions,
    record: Option<&[usize]>,
) -> std::result::Result<ChainOutput, ChainFailure>
where
    L: LogLikelihood + ?Sized,
{
    if options.iterations == 0 || options.thinning == 0 {
        return Err(
            MessError::InvalidParameter("iterations and thinning must be >= 1".into()).into(),
        );
    }
    if let Some(rec) = record {
        if let Some(&bad) = rec.iter().find(|&&c| c >= prior.dim()) {
            return Err(MessError::IndexOutOfRange {
                index: bad,
                len: prior.dim(),
            }
            .into());
        }
    }
    let workers = match spec {
        SamplerSpec::Mess(c) => {
            c.validate()?;
            options.workers.max(c.workers)
        }
        _ => options.workers,
    };
    let evaluator = Evaluator::new(workers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut state = ChainState::new(initial, loglik)?;
    let mut out = ChainOutput {
        samples: Vec::with_capacity(options.iterations / options.thinning),
        stats: Vec::with_capacity(options.iterations),
        final_state: None,
    };

    for t in 0..options.iterations {
        let step = match spec {
            SamplerSpec::Ess {
                max_shrink_iterations,
            } => ess_step(&state, prior, loglik, *max_shrink_iterations, &mut rng),
            SamplerSpec::Mess(config) => {
                mess_step(&state, prior, loglik, config, &evaluator, &mut rng)
            }
            SamplerSpec::Mh { scale } => mh_step(&state, prior, loglik, *scale, &mut rng),
        };
        match step {
            Ok((next, stats)) => {
                state = next;
                out.stats.push(stats);
                if (t + 1) % options.thinning == 0 {
                    out.samples.push(match record {
                        Some(rec) => rec.iter().map(|&c| state.x[c]).collect(),
                        None => state.x.clone(),
                    });
                }
            }
            Err(e) => {
                out.final_state = Some(state);
                return Err(ChainFailure {
                    error: MessError::StepFailed {
                        iteration: t,
                        source: Box::new(e),
                    },
                    partial: out,
                });
            }
        }
    }
    out.final_state = Some(state);
    Ok(out)
}
