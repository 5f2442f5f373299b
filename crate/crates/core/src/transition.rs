//! Zero-diagonal doubly-stochastic transition matrices over the sorted
//! candidate angles, and sampling of the accepted candidate.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MessError, Result};
use crate::lp::{max_weight_derangement, DenseSimplex};

/// Distance used to inform the transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Uniform,
    Angular,
    Euclidean,
}

impl DistanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistanceKind::Uniform => "uniform",
            DistanceKind::Angular => "angular",
            DistanceKind::Euclidean => "euclidean",
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = MessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DistanceKind::Uniform),
            "angular" => Ok(DistanceKind::Angular),
            "euclidean" => Ok(DistanceKind::Euclidean),
            other => Err(MessError::InvalidParameter(format!(
                "unknown distance '{other}'"
            ))),
        }
    }
}

/// How the distance-maximizing linear program is solved.
///
/// Both return an optimal vertex. `Assignment` exploits the fact that the
/// vertices of the zero-diagonal doubly-stochastic polytope are derangement
/// permutation matrices and costs `O(B^3)`; `Simplex` solves the LP over all
/// `B(B-1)` entries directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LpMethod {
    #[default]
    Assignment,
    Simplex,
}

/// A `B x B` row-major transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.entries[r * self.order + s]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.order..(r + 1) * self.order]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `sum_rs D_rs P_rs`.
    pub fn objective(&self, distances: &DMatrix<f64>) -> f64 {
        let b = self.order;
        let mut acc = 0.0;
        for r in 0..b {
            for s in 0..b {
                acc += distances[(r, s)] * self.get(r, s);
            }
        }
        acc
    }

    fn from_permutation(perm: &[usize]) -> Self {
        let b = perm.len();
        let mut entries = vec![0.0; b * b];
        for (r, &s) in perm.iter().enumerate() {
            entries[r * b + s] = 1.0;
        }
        Self { order: b, entries }
    }

    /// Checks entry bounds, row and column sums within `tol` and an exactly
    /// zero diagonal.
    pub fn validate(&self, tol: f64) -> bool {
        let b = self.order;
        if self.entries.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return false;
        }
        if (0..b).any(|r| self.get(r, r) != 0.0) {
            return false;
        }
        (0..b).all(|r| (self.row(r).iter().sum::<f64>() - 1.0).abs() <= tol)
            && (0..b).all(|s| ((0..b).map(|r| self.get(r, s)).sum::<f64>() - 1.0).abs() <= tol)
    }
}

/// Off-diagonal entries `1/(B-1)`, zero diagonal.
pub fn uniform_matrix(order: usize) -> Result<TransitionMatrix> {
    if order < 2 {
        return Err(MessError::TooFewCandidates(order));
    }
    let p = 1.0 / (order - 1) as f64;
    let mut entries = vec![p; order * order];
    for r in 0..order {
        entries[r * order + r] = 0.0;
    }
    Ok(TransitionMatrix { order, entries })
}

/// Great-circle distance between two angles.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(TAU - d)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MessError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Pairwise angular distances of sorted candidate angles.
pub fn angular_distance_matrix(angles: &[f64]) -> DMatrix<f64> {
    let b = angles.len();
    DMatrix::from_fn(b, b, |r, s| angular_distance(angles[r], angles[s]))
}

/// Pairwise Euclidean distances between candidate states.
pub fn euclidean_distance_matrix<S: AsRef<[f64]>>(states: &[S]) -> DMatrix<f64> {
    let b = states.len();
    let mut d = DMatrix::zeros(b, b);
    for r in 0..b {
        for s in r + 1..b {
            let v =
                euclidean_distance(states[r].as_ref(), states[s].as_ref()).expect("equal lengths");
            d[(r, s)] = v;
            d[(s, r)] = v;
        }
    }
    d
}

/// Maximizes `sum_rs D_rs P_rs` over zero-diagonal doubly-stochastic
/// matrices with the default method.
pub fn solve_transition_lp(distances: &DMatrix<f64>) -> Result<TransitionMatrix> {
    solve_transition_lp_with(distances, LpMethod::default())
}

pub fn solve_transition_lp_with(
    distances: &DMatrix<f64>,
    method: LpMethod,
) -> Result<TransitionMatrix> {
    let b = distances.nrows();
    if b < 2 {
        return Err(MessError::TooFewCandidates(b));
    }
    if distances.ncols() != b {
        return Err(MessError::DimensionMismatch {
            expected: b,
            actual: distances.ncols(),
        });
    }
    if distances.iter().any(|&d| !d.is_finite() || d < 0.0) {
        return Err(MessError::InvalidParameter(
            "distances must be finite and nonnegative".into(),
        ));
    }
    if b == 2 {
        return Ok(TransitionMatrix::from_permutation(&[1, 0]));
    }
    match method {
        LpMethod::Assignment => {
            let w: Vec<f64> = (0..b * b).map(|i| distances[(i / b, i % b)]).collect();
            let perm = max_weight_derangement(&w, b)?;
            Ok(TransitionMatrix::from_permutation(&perm))
        }
        LpMethod::Simplex => solve_with_simplex(distances),
    }
}

fn solve_with_simplex(distances: &DMatrix<f64>) -> Result<TransitionMatrix> {
    let b = distances.nrows();
    // variables: off-diagonal entries in row-major order
    let var = |r: usize, s: usize| r * (b - 1) + if s < r { s } else { s - 1 };
    let nvar = b * (b - 1);
    let rows = 2 * b;
    let mut a = vec![0.0; rows * nvar];
    let mut c = vec![0.0; nvar];
    for r in 0..b {
        for s in 0..b {
            if r == s {
                continue;
            }
            let v = var(r, s);
            a[r * nvar + v] = 1.0;
            a[(b + s) * nvar + v] = 1.0;
            c[v] = distances[(r, s)];
        }
    }
    let sol = DenseSimplex::new(rows, nvar, a, vec![1.0; rows], c)?.maximize()?;
    let mut entries = vec![0.0; b * b];
    for r in 0..b {
        for s in 0..b {
            if r != s {
                entries[r * b + s] = sol.x[var(r, s)].clamp(0.0, 1.0);
            }
        }
    }
    Ok(TransitionMatrix { order: b, entries })
}

/// Builds the transition matrix for the given candidates. `states` is only
/// consulted for [`DistanceKind::Euclidean`] and must be in sorted order.
pub fn build_matrix<S: AsRef<[f64]>>(
    kind: DistanceKind,
    method: LpMethod,
    sorted_angles: &[f64],
    states: &[S],
) -> Result<TransitionMatrix> {
    match kind {
        DistanceKind::Uniform => uniform_matrix(sorted_angles.len()),
        DistanceKind::Angular => {
            solve_transition_lp_with(&angular_distance_matrix(sorted_angles), method)
        }
        DistanceKind::Euclidean => {
            solve_transition_lp_with(&euclidean_distance_matrix(states), method)
        }
    }
}

/// Samples a column from row `r`. A row with a single nonzero entry is
/// returned without touching the random stream.
pub fn sample_row<R: Rng + ?Sized>(matrix: &TransitionMatrix, r: usize, rng: &mut R) -> usize {
    let row = matrix.row(r);
    let mut support = row.iter().enumerate().filter(|(_, &p)| p > 0.0);
    let first = support.next().map(|(s, _)| s).expect("row sums to one");
    if support.next().is_none() {
        return first;
    }
    let u: f64 = rng.random();
    let total: f64 = row.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = first;
    for (s, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = s;
        if target < acc {
            return s;
        }
    }
    last
}
