//! Dense two-phase simplex and the interior-of-convex-hull test built on it.
//!
//! Problems here have few rows (dimension + 1) and possibly many columns
//! (one per sampled increment), so a dense tableau with Bland's rule is
//! adequate.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-11;
const MAX_ITER: usize = 50_000;

struct Tableau {
    rows: usize,
    cols: usize, // excluding rhs
    t: Vec<f64>, // (rows + 1) × (cols + 1); last row is the reduced objective
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f == 0.0 {
                continue;
            }
            for c in 0..w {
                self.t[r * w + c] -= f * self.t[pr * w + c];
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimizes the objective row over the allowed columns. Returns false
    /// if unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        for _ in 0..MAX_ITER {
            let obj = self.rows;
            // Bland: smallest index with negative reduced cost
            let Some(pc) = (0..allowed).find(|&c| self.at(obj, c) < -PIVOT_TOL) else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    match best {
                        Some((br, bv))
                            if ratio > bv + 1e-15
                                || (ratio >= bv - 1e-15 && self.basis[r] > self.basis[br]) => {}
                        _ => best = Some((r, ratio)),
                    }
                }
            }
            match best {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return false,
            }
        }
        true
    }
}

/// Maximizes `cᵀx` subject to `A x = b`, `x ≥ 0`, with `A` given row-major
/// as `m × k`.
pub fn maximize(c: &[f64], a: &[f64], b: &[f64], m: usize, k: usize) -> LpOutcome {
    assert_eq!(c.len(), k);
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), m);
    let cols = k + m;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            t[r * w + j] = sign * a[r * k + j];
        }
        t[r * w + k + r] = 1.0;
        t[r * w + cols] = sign * b[r];
    }
    // phase one objective: minimize Σ artificials
    for r in 0..m {
        for j in 0..w {
            if j < k || j == cols {
                t[m * w + j] -= t[r * w + j];
            }
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (k..k + m).collect(),
    };
    tab.run(cols);
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if -tab.rhs(m) > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // drive remaining artificials out of the basis where possible
    for r in 0..m {
        if tab.basis[r] >= k {
            if let Some(pc) = (0..k).find(|&c| tab.at(r, c).abs() > PIVOT_TOL) {
                tab.pivot(r, pc);
            }
        }
    }
    // phase two objective: minimize −cᵀx
    for j in 0..w {
        tab.t[m * w + j] = if j < k { -c[j] } else { 0.0 };
    }
    for r in 0..m {
        let bc = tab.basis[r];
        if bc < k {
            let f = tab.t[m * w + bc];
            if f != 0.0 {
                for j in 0..w {
                    tab.t[m * w + j] -= f * tab.t[r * w + j];
                }
            }
        }
    }
    if !tab.run(k) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; k];
    for r in 0..m {
        if tab.basis[r] < k {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}

/// Result of testing whether the origin lies in the interior of the convex
/// hull of a point set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullReport {
    /// Rank of the point set.
    pub rank: usize,
    /// `K · max_λ min_k λ_k` over convex weights with `Σ λ_k p_k = 0`;
    /// zero when the origin is on the boundary, `None` when outside.
    pub margin: Option<f64>,
    pub interior: bool,
}

/// Exact test of `0 ∈ int conv{p_k}` for flat `dim`-vectors.
///
/// The origin is interior iff the points span `ℝ^dim` and the origin is a
/// convex combination with all weights strictly positive. The second part
/// is the LP `max t` s.t. `Σ (μ_k + t) p_k = 0`, `Σ (μ_k + t) = 1`, `μ ≥ 0`.
pub fn origin_in_interior(points: &[f64], dim: usize) -> HullReport {
    let count = points.len() / dim;
    let scale = points
        .chunks_exact(dim)
        .map(math::norm)
        .fold(0.0f64, f64::max);
    let rank = linalg::rank(points, dim, 1e-9);
    if count == 0 || scale == 0.0 {
        return HullReport {
            rank,
            margin: None,
            interior: false,
        };
    }
    let k = count + 1;
    let m = dim + 1;
    let mut a = vec![0.0; m * k];
    for (j, p) in points.chunks_exact(dim).enumerate() {
        for i in 0..dim {
            a[i * k + j] = p[i] / scale;
            a[i * k + count] += p[i] / scale;
        }
        a[dim * k + j] = 1.0;
    }
    a[dim * k + count] = count as f64;
    let mut b = vec![0.0; m];
    b[dim] = 1.0;
    let mut c = vec![0.0; k];
    c[count] = 1.0;
    let margin = match maximize(&c, &a, &b, m, k) {
        LpOutcome::Optimal { value, .. } => Some(value * count as f64),
        _ => None,
    };
    let interior = rank == dim && margin.is_some_and(|v| v > 1e-9);
    HullReport {
        rank,
        margin,
        interior,
    }
}
