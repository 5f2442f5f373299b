//! Small dense linear programs.
//!
//! [`DenseSimplex`] is a two-phase tableau simplex with Bland's rule for
//! `max c'x s.t. Ax = b, x >= 0`. [`max_weight_derangement`] solves the
//! special case of a zero-diagonal assignment problem with shortest
//! augmenting paths; it returns a vertex of the same polytope.

use crate::error::{MessError, Result};

const PIVOT_EPS: f64 = 1e-11;

/// Result of a dense LP solve.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// Two-phase dense tableau simplex. Deterministic: entering variable is the
/// lowest index with a positive reduced gain, ties in the ratio test go to
/// the lowest basic index.
#[derive(Debug, Clone)]
pub struct DenseSimplex {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    active: Vec<bool>,
    obj: Vec<f64>,
    pivots: usize,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let prow: Vec<f64> = self.row(pr).to_vec();
        let nrows = self.basis.len();
        for i in 0..nrows {
            if i == pr || !self.active[i] {
                continue;
            }
            let f = self.data[i * w + pc];
            if f != 0.0 {
                for (v, p) in self.data[i * w..(i + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * p;
                }
                self.data[i * w + pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for (v, p) in self.obj.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Runs simplex iterations over columns `< limit` until optimal.
    fn optimize(&mut self, limit: usize) -> Result<()> {
        let w = self.width;
        let rhs = w - 1;
        loop {
            let Some(pc) = (0..limit).find(|&j| self.obj[j] < -PIVOT_EPS) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.basis.len() {
                if !self.active[i] {
                    continue;
                }
                let aij = self.data[i * w + pc];
                if aij > PIVOT_EPS {
                    let ratio = self.data[i * w + rhs] / aij;
                    let better = match best {
                        None => true,
                        Some((r, _, bi)) => {
                            ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < bi)
                        }
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                Some((_, pr, _)) => self.pivot(pr, pc),
                None => {
                    return Err(MessError::InvalidParameter(
                        "linear program is unbounded".into(),
                    ))
                }
            }
        }
    }
}

impl DenseSimplex {
    /// `a` is row-major `rows x cols`; `b` must be nonnegative.
    pub fn new(rows: usize, cols: usize, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if a.len() != rows * cols || b.len() != rows || c.len() != cols {
            return Err(MessError::DimensionMismatch {
                expected: rows * cols,
                actual: a.len(),
            });
        }
        if b.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(MessError::InvalidParameter(
                "right-hand side must be nonnegative".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            a,
            b,
            c,
        })
    }

    pub fn maximize(&self) -> Result<LpSolution> {
        let (m, n) = (self.rows, self.cols);
        let width = n + m + 1;
        let mut data = vec![0.0; m * width];
        for i in 0..m {
            data[i * width..i * width + n].copy_from_slice(&self.a[i * n..(i + 1) * n]);
            data[i * width + n + i] = 1.0;
            data[i * width + width - 1] = self.b[i];
        }
        // phase one: maximize -sum(artificials)
        let mut obj = vec![0.0; width];
        for i in 0..m {
            for j in 0..n {
                obj[j] -= data[i * width + j];
            }
            obj[width - 1] -= self.b[i];
        }
        let mut t = Tableau {
            width,
            data,
            basis: (n..n + m).collect(),
            active: vec![true; m],
            obj,
            pivots: 0,
        };
        t.optimize(n + m)?;
        let scale = 1.0 + self.b.iter().sum::<f64>();
        if t.obj[width - 1] < -1e-9 * scale {
            return Err(MessError::InvalidParameter(
                "linear program is infeasible".into(),
            ));
        }

        // drive remaining artificials out of the basis; rows that cannot be
        // pivoted on an original column are redundant
        for i in 0..m {
            if t.basis[i] < n {
                continue;
            }
            let pc = (0..n).find(|&j| t.row(i)[j].abs() > 1e-9);
            match pc {
                Some(j) => t.pivot(i, j),
                None => t.active[i] = false,
            }
        }

        // phase two
        let mut obj = vec![0.0; width];
        for j in 0..n {
            obj[j] = -self.c[j];
        }
        for i in 0..m {
            if !t.active[i] {
                continue;
            }
            let cb = self.c[t.basis[i]];
            if cb != 0.0 {
                for (v, r) in obj.iter_mut().zip(t.row(i)) {
                    *v += cb * r;
                }
            }
        }
        for (i, &bi) in t.basis.iter().enumerate() {
            if t.active[i] {
                obj[bi] = 0.0;
            }
        }
        t.obj = obj;
        t.optimize(n)?;

        let mut x = vec![0.0; n];
        for i in 0..m {
            if t.active[i] && t.basis[i] < n {
                x[t.basis[i]] = t.row(i)[width - 1].max(0.0);
            }
        }
        let objective = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x,
            objective,
            pivots: t.pivots,
        })
    }
}

/// Maximum-weight assignment of rows to columns with the diagonal forbidden.
/// `weights` is row-major `n x n`, `n >= 2`. Returns `perm` with
/// `perm[r] != r` for every row.
pub fn max_weight_derangement(weights: &[f64], n: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(MessError::TooFewCandidates(n));
    }
    if weights.len() != n * n {
        return Err(MessError::DimensionMismatch {
            expected: n * n,
            actual: weights.len(),
        });
    }
    let wmax = weights.iter().copied().fold(0.0_f64, f64::max);
    let wmin = weights.iter().copied().fold(0.0_f64, f64::min);
    // any assignment touching the diagonal costs more than every derangement
    let forbidden = (wmax - wmin + 1.0) * (n as f64 + 1.0);
    let cost = |r: usize, s: usize| {
        if r == s {
            forbidden
        } else {
            wmax - weights[r * n + s]
        }
    };

    // shortest augmenting path with potentials, 1-based with a virtual column 0
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    debug_assert!(perm.iter().enumerate().all(|(r, &s)| r != s));
    Ok(perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 (slacks s1..s3)
        let a = vec![
            1.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, 1.0, 0.0, //
            3.0, 2.0, 0.0, 0.0, 1.0,
        ];
        let lp = DenseSimplex::new(
            3,
            5,
            a,
            vec![4.0, 12.0, 18.0],
            vec![3.0, 5.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let sol = lp.maximize().unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_handles_redundant_rows() {
        // x + y = 1 twice
        let lp = DenseSimplex::new(
            2,
            2,
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
        )
        .unwrap();
        let sol = lp.maximize().unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_reports_infeasible() {
        // x = 1 and x = 2
        let lp = DenseSimplex::new(2, 1, vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0]).unwrap();
        assert!(lp.maximize().is_err());
    }

    #[test]
    fn derangement_small_cases() {
        assert_eq!(
            max_weight_derangement(&[0.0, 5.0, 7.0, 0.0], 2).unwrap(),
            vec![1, 0]
        );
        let w = [0.0, 1.0, 9.0, 9.0, 0.0, 1.0, 1.0, 9.0, 0.0];
        assert_eq!(max_weight_derangement(&w, 3).unwrap(), vec![2, 0, 1]);
        assert!(max_weight_derangement(&[0.0], 1).is_err());
    }

    #[test]
    fn derangement_ignores_large_diagonal() {
        let w = [100.0, 1.0, 1.0, 100.0];
        assert_eq!(max_weight_derangement(&w, 2).unwrap(), vec![1, 0]);
    }
}
