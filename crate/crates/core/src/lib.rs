//! Multiproposal elliptical slice sampling (MESS) for posteriors of the form
//! `L(x) N(x; mu, Sigma)`.
//!
//! Each step draws `M` angles per shrink round on the ellipse through the
//! current state and a prior draw, and picks among the accepted angles with
//! a doubly-stochastic transition matrix that maximizes expected jump
//! distance. `M = 1` reduces to plain elliptical slice sampling.
//!
//! ```
//! use mess_core::{run_chain, ChainOptions, DistanceKind, GaussianPrior, MessConfig, SamplerSpec};
//!
//! let prior = GaussianPrior::standard(3);
//! let loglik = |x: &[f64]| -0.5 * x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>();
//! let spec = SamplerSpec::Mess(MessConfig::new(4, DistanceKind::Angular));
//! let out = run_chain(&spec, &prior, &loglik, vec![0.0; 3], &ChainOptions::new(200, 7)).unwrap();
//! assert_eq!(out.samples.len(), 200);
//! ```

// `!(x > 0.0)` is used on purpose to reject NaN, and index loops read
// closer to the matrix formulas than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod ellipse;
pub mod error;
pub mod lp;
pub mod models;
pub mod prior;
pub mod sampler;
pub mod transform;
pub mod transition;

pub use diagnostics::{
    effective_sample_size, mc_standard_error, msjd, summarize, ChainSummary, Histogram,
};
pub use ellipse::{AngleBracket, CandidateLabel, SortedCandidates};
pub use error::{MessError, Result};
pub use prior::{rotate_pair, ConditionedPrior, GaussianPrior};
pub use sampler::{
    ess_step, mess_step, mh_step, run_chain, run_chain_recording, tune_mh, ChainFailure,
    ChainOptions, ChainOutput, ChainState, Evaluator, FlatLikelihood, LogLikelihood, MessConfig,
    MhTuning, SamplerSpec, StepStats,
};
pub use transform::PathTuple;
pub use transition::{
    solve_transition_lp, solve_transition_lp_with, DistanceKind, LpMethod, TransitionMatrix,
};
