//! Bracket bookkeeping for one multiproposal step: angle draws, the
//! valid-angle test, the shrinking rule and anchored sorting.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{MessError, Result};

/// Widths below this collapse every draw onto the right endpoint.
pub const DEGENERATE_WIDTH: f64 = 1e-14;

/// Anchored half-open interval `(left, right]` containing the anchor angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleBracket {
    pub left: f64,
    pub right: f64,
    pub anchor: f64,
}

impl AngleBracket {
    /// The initial bracket `(0, 2π]` around `anchor`.
    pub fn full(anchor: f64) -> Self {
        debug_assert!(anchor > 0.0 && anchor <= TAU);
        Self {
            left: 0.0,
            right: TAU,
            anchor,
        }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle > self.left && angle <= self.right
    }

    /// Same interval, different anchor. Used when replaying a shrink history.
    pub fn with_anchor(&self, anchor: f64) -> Self {
        Self { anchor, ..*self }
    }
}

/// Draws `m` angles uniformly on `(left, right]`, consuming exactly `m`
/// uniforms in index order.
pub fn draw_angles<R: Rng + ?Sized>(bracket: &AngleBracket, m: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(m);
    draw_angles_into(bracket, m, rng, &mut out);
    out
}

pub(crate) fn draw_angles_into<R: Rng + ?Sized>(
    bracket: &AngleBracket,
    m: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    out.clear();
    let width = bracket.width();
    for _ in 0..m {
        // random() is on [0, 1); flip it onto (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let angle = if width < DEGENERATE_WIDTH {
            bracket.right
        } else {
            let a = bracket.left + u * width;
            if a <= bracket.left || a > bracket.right {
                bracket.right
            } else {
                a
            }
        };
        out.push(angle);
    }
}

/// Indices `j` with `log_likelihoods[j] >= log_y`. NaN and `+inf` are
/// rejected as model errors; `-inf` is simply below every level.
pub fn valid_set(log_likelihoods: &[f64], log_y: f64) -> Result<Vec<usize>> {
    let mut valid = Vec::new();
    for (j, &ll) in log_likelihoods.iter().enumerate() {
        if ll.is_nan() || ll == f64::INFINITY {
            return Err(MessError::InvalidLikelihood {
                index: j,
                value: ll,
            });
        }
        if ll >= log_y {
            valid.push(j);
        }
    }
    Ok(valid)
}

/// Shrinks to the tightest interval around the anchor formed by the
/// rejected angles: the largest one below the anchor and the smallest one
/// at or above it.
pub fn shrink(bracket: &AngleBracket, rejected: &[f64]) -> Result<AngleBracket> {
    let mut left = bracket.left;
    let mut right = bracket.right;
    for &phi in rejected {
        if !bracket.contains(phi) {
            return Err(MessError::AngleOutsideBracket {
                angle: phi,
                left: bracket.left,
                right: bracket.right,
            });
        }
        if phi < bracket.anchor {
            left = left.max(phi);
        } else {
            right = right.min(phi);
        }
    }
    Ok(AngleBracket {
        left,
        right,
        anchor: bracket.anchor,
    })
}

/// Label of a candidate angle: the anchor or the `j`-th proposal of the
/// accepting batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CandidateLabel {
    Anchor,
    Proposal(usize),
}

/// The anchor plus the valid angles, sorted ascending, with the bijection
/// between sorted positions and original labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedCandidates {
    pub angles: Vec<f64>,
    pub labels: Vec<CandidateLabel>,
    pub anchor_position: usize,
}

impl SortedCandidates {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Sorted position of `label`.
    pub fn position_of(&self, label: CandidateLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Original label of sorted position `pos`.
    pub fn label_at(&self, pos: usize) -> CandidateLabel {
        self.labels[pos]
    }
}

/// Sorts `(anchor, valid angles)`. Equal angles are ordered anchor first,
/// then by proposal index, so the result does not depend on input order.
pub fn sort_with_anchor(anchor: f64, valid: &[(usize, f64)]) -> SortedCandidates {
    let mut entries: Vec<(f64, CandidateLabel)> = Vec::with_capacity(valid.len() + 1);
    entries.push((anchor, CandidateLabel::Anchor));
    entries.extend(valid.iter().map(|&(j, a)| (a, CandidateLabel::Proposal(j))));
    entries.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let anchor_position = entries
        .iter()
        .position(|e| e.1 == CandidateLabel::Anchor)
        .expect("anchor present");
    SortedCandidates {
        angles: entries.iter().map(|e| e.0).collect(),
        labels: entries.iter().map(|e| e.1).collect(),
        anchor_position,
    }
}

/// Recomputes the bracket sequence `(l_0, r_0), ..., (l_n, r_n)` produced by
/// shrinking on the given rejected batches with `anchor`. Returns `None`
/// as soon as a batch violates bracket membership.
pub fn replay_brackets(anchor: f64, rejected: &[Vec<f64>]) -> Option<Vec<AngleBracket>> {
    let mut out = Vec::with_capacity(rejected.len() + 1);
    let mut b = AngleBracket::full(anchor);
    out.push(b);
    for batch in rejected {
        b = shrink(&b, batch).ok()?;
        out.push(b);
    }
    Some(out)
}
