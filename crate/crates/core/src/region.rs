//! The diversity region `O(δ) = { x > 0 : max_j x_j / Σx < 1 − δ }`.
//!
//! `O(δ)` is an intersection of open half-spaces, namely
//! `x_i − (1−δ)·Σx < 0` and `x_i > 0`, so the distance from an interior
//! point to the complement is the smallest distance to one of the bounding
//! hyperplanes. Distances are taken in `ℝⁿ`, so the coordinate hyperplanes
//! count as boundary.

use crate::error::{domain, CoreResult};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityRegion {
    delta: f64,
    n: usize,
}

impl DiversityRegion {
    pub fn new(delta: f64, n: usize) -> CoreResult<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain("delta must lie in (0, 1)"));
        }
        if n == 0 {
            return Err(domain("region needs at least one asset"));
        }
        Ok(Self { delta, n })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest admissible market weight, `1 − δ`.
    pub fn weight_bound(&self) -> f64 {
        1.0 - self.delta
    }

    /// `O(δ)` is non-empty iff `1 − δ > 1/n`.
    pub fn is_empty(&self) -> bool {
        self.weight_bound() <= 1.0 / self.n as f64
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.n || x.iter().any(|&v| !(v > 0.0)) {
            return false;
        }
        let total: f64 = x.iter().sum();
        x.iter().all(|&v| v / total < self.weight_bound())
    }
}

/// Euclidean distance from a positive vector to the complement of `O(δ)`.
pub fn dist_to_complement(x: &[f64], region: &DiversityRegion) -> CoreResult<f64> {
    if x.len() != region.n() {
        return Err(domain("dimension mismatch"));
    }
    if x.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(domain("coordinates must be strictly positive"));
    }
    if !region.contains(x) {
        return Ok(0.0);
    }
    let n = region.n() as f64;
    let w = region.weight_bound();
    let total: f64 = x.iter().sum();
    // normal of x_i − w·Σx: e_i − w·1, squared length (1−w)² + (n−1)w²
    let normal_len = math::sqrt((1.0 - w) * (1.0 - w) + (n - 1.0) * w * w);
    let mut best = f64::INFINITY;
    for &xi in x {
        best = best.min((w * total - xi) / normal_len).min(xi);
    }
    Ok(best.max(0.0))
}
