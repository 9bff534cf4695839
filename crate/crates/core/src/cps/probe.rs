//! Monte Carlo probe of the support of one walk increment `Δ = X₁ − X₀`.
//!
//! The tilt needs `0 ∈ int conv supp Δ` and positive retirement mass. The
//! probe samples increments from a pivot and reports both, together with
//! how well the exits cover the sphere of radius `δ* = ε₀/(4 + 2L₀)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::cps::epsilon::EpsilonRule;
use crate::cps::tree::walk_edge;
use crate::cps::walk::StoppingRule;
use crate::error::{domain, CoreResult};
use crate::grid::TimeGrid;
use crate::lp::{self, HullReport};
use crate::math;
use crate::rng::RngStream;
use crate::sde::MarketModel;
use crate::stats::{wilson, Interval};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeParams {
    pub t0: f64,
    /// Radius at the pivot.
    pub eps0: f64,
    /// Lipschitz constant of the radius in the path.
    pub lipschitz: f64,
    pub stopping: StoppingRule,
    /// Number of equally spaced directions per coordinate plane.
    pub directions: usize,
    /// Angular tolerance for a direction to count as covered.
    pub theta_cov: f64,
}

impl ProbeParams {
    pub fn new(t0: f64, eps0: f64, lipschitz: f64) -> Self {
        Self {
            t0,
            eps0,
            lipschitz,
            stopping: StoppingRule::Interpolated,
            directions: 64,
            theta_cov: PI / 32.0,
        }
    }
}

/// Direction coverage in the plane of coordinates `(i, j)`; for one asset
/// the "plane" is the line and the two directions are `±1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCoverage {
    pub i: usize,
    pub j: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    pub retired: usize,
    /// `P{τ₁ = T}` with a Wilson interval.
    pub retirement: Interval,
    pub delta_star: f64,
    /// Exits with `|Δ| ≥ δ*`, i.e. increments whose projection onto the
    /// `δ*`-ball lands on its boundary sphere.
    pub sphere_hits: usize,
    pub coverage: Vec<PlaneCoverage>,
    pub min_coverage: f64,
    pub hull: HullReport,
    /// Set when retirements or sphere hits were never observed.
    pub inconclusive: bool,
}

/// Samples `n_samples` first increments of the walk from `(t0, pivot)`.
/// Sample `k` uses `rng.substream(k)`.
pub fn increment_support_probe(
    model: &dyn MarketModel,
    grid: &TimeGrid,
    pivot: &[f64],
    rule: &EpsilonRule,
    params: &ProbeParams,
    n_samples: usize,
    rng: &RngStream,
) -> CoreResult<ProbeReport> {
    if n_samples == 0 {
        return Err(domain("at least one sample is required"));
    }
    if !(params.eps0 > 0.0 && params.lipschitz >= 0.0 && params.directions > 0) {
        return Err(domain("probe needs eps0 > 0, L0 >= 0 and some directions"));
    }
    let n = pivot.len();
    let delta_star = params.eps0 / (4.0 + 2.0 * params.lipschitz);
    let mut deltas = Vec::with_capacity(n_samples * n);
    let mut retired = 0;
    for k in 0..n_samples {
        let mut r = rng.substream(k as u64);
        let e = walk_edge(model, grid, params.t0, pivot, params.eps0, rule, params.stopping, &mut r)?;
        if e.retired {
            retired += 1;
        }
        deltas.extend(e.pivot.iter().zip(pivot).map(|(a, b)| a - b));
    }
    let on_sphere: Vec<&[f64]> = deltas
        .chunks_exact(n)
        .filter(|d| math::norm(d) >= delta_star * (1.0 - 1e-12))
        .collect();
    let coverage = plane_coverage(&on_sphere, n, params.directions, params.theta_cov);
    let min_coverage = coverage.iter().map(|c| c.fraction).fold(1.0, f64::min);
    Ok(ProbeReport {
        samples: n_samples,
        retired,
        retirement: wilson(retired, n_samples),
        delta_star,
        sphere_hits: on_sphere.len(),
        coverage,
        min_coverage,
        hull: lp::origin_in_interior(&deltas, n),
        inconclusive: retired == 0 || on_sphere.is_empty(),
    })
}

fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn plane_coverage(points: &[&[f64]], n: usize, directions: usize, theta: f64) -> Vec<PlaneCoverage> {
    if n == 1 {
        let up = points.iter().any(|d| d[0] > 0.0);
        let down = points.iter().any(|d| d[0] < 0.0);
        let fraction = (up as u8 + down as u8) as f64 / 2.0;
        return vec![PlaneCoverage { i: 0, j: 0, fraction }];
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let angles: Vec<f64> = points
                .iter()
                .filter(|d| d[i] != 0.0 || d[j] != 0.0)
                .map(|d| math::atan2(d[j], d[i]))
                .collect();
            let hit = (0..directions)
                .filter(|&m| {
                    let dir = 2.0 * PI * m as f64 / directions as f64;
                    angles.iter().any(|&a| angular_gap(a, dir) <= theta)
                })
                .count();
            out.push(PlaneCoverage {
                i,
                j,
                fraction: hit as f64 / directions as f64,
            });
        }
    }
    out
}
