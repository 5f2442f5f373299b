//! The forward/reverse path transform used to check reversibility of a
//! multiproposal step. Not used by the samplers themselves.
//!
//! A path tuple is `(x, nu, log_y, alpha, phi_{1..k}, m)`: the current
//! state, the prior draw, the slice level, the anchor, every batch of
//! proposed angles and the index of the accepted angle in the last batch.
//! The forward map moves the current state to the accepted point of the
//! ellipse and swaps the roles of `alpha` and `phi_{km}`.

use std::f64::consts::TAU;

use crate::ellipse::{replay_brackets, AngleBracket};
use crate::error::{MessError, Result};
use crate::prior::rotate_pair;

#[derive(Debug, Clone, PartialEq)]
pub struct PathTuple {
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    pub log_y: f64,
    pub alpha: f64,
    /// `k` batches of `M` angles; the last batch contains the accepted one.
    pub angles: Vec<Vec<f64>>,
    pub accepted: usize,
}

impl PathTuple {
    pub fn k(&self) -> usize {
        self.angles.len()
    }

    fn accepted_angle(&self) -> Result<f64> {
        let last = self
            .angles
            .last()
            .ok_or(MessError::IndexOutOfRange { index: 0, len: 0 })?;
        last.get(self.accepted)
            .copied()
            .ok_or(MessError::IndexOutOfRange {
                index: self.accepted,
                len: last.len(),
            })
    }

    /// Forward transform: rotate to the accepted angle, make it the new
    /// anchor and put the old anchor in its slot.
    pub fn forward(&self, mean: &[f64]) -> Result<PathTuple> {
        let phi = self.accepted_angle()?;
        let (x, nu) = rotate_pair(&self.x, &self.nu, phi - self.alpha, mean)?;
        let mut angles = self.angles.clone();
        let k = angles.len();
        angles[k - 1][self.accepted] = self.alpha;
        Ok(PathTuple {
            x,
            nu,
            log_y: self.log_y,
            alpha: phi,
            angles,
            accepted: self.accepted,
        })
    }

    /// Inverse of [`PathTuple::forward`]. The map is an involution, so
    /// this is the same rotation read with the roles of the anchor and the
    /// accepted slot exchanged.
    pub fn inverse(&self, mean: &[f64]) -> Result<PathTuple> {
        self.forward(mean)
    }

    /// Membership in the support of the step's random variables: slice level
    /// below the current likelihood, angles inside their brackets, every
    /// batch before the last fully rejected and the accepted angle valid.
    pub fn in_support<F>(&self, log_lik: F, mean: &[f64]) -> bool
    where
        F: Fn(&[f64]) -> f64,
    {
        let k = self.k();
        if k == 0 || !(self.alpha > 0.0 && self.alpha <= TAU) {
            return false;
        }
        if !self.log_y.is_finite() || self.log_y > log_lik(&self.x) {
            return false;
        }
        let m = self.angles[0].len();
        if m == 0 || self.accepted >= m || self.angles.iter().any(|b| b.len() != m) {
            return false;
        }
        let Some(brackets) = replay_brackets(self.alpha, &self.angles[..k - 1]) else {
            return false;
        };
        let last: &AngleBracket = &brackets[k - 1];
        if !self.angles[k - 1].iter().all(|&a| last.contains(a)) {
            return false;
        }
        let level = |phi: f64| -> f64 {
            let (p, _) =
                rotate_pair(&self.x, &self.nu, phi - self.alpha, mean).expect("lengths checked");
            log_lik(&p)
        };
        for batch in &self.angles[..k - 1] {
            if batch.iter().any(|&phi| level(phi) >= self.log_y) {
                return false;
            }
        }
        level(self.angles[k - 1][self.accepted]) >= self.log_y
    }
}
