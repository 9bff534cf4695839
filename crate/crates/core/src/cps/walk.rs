//! Random walk with retirement: pivots move to the current price whenever
//! it strays more than `ε/2` from the last pivot, and freeze at the horizon.

use alloc::vec::Vec;

use crate::cps::epsilon::EpsilonProcess;
use crate::error::{domain, CoreError, CoreResult};
use crate::grid::MarketPath;
use crate::math;

/// How exits are detected between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoppingRule {
    /// Exact first crossing of `|S − X| = ε/2` for the piecewise-linear
    /// interpolation of `S` and `ε`.
    #[default]
    Interpolated,
    /// First grid index with `|S(t_k) − X| > ε(t_k)/2`. Overshoots the
    /// boundary by up to one increment, so the tube bound can fail.
    GridIndex,
}

/// A piecewise-linear path with radii at its knots.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Polyline<'a> {
    pub n: usize,
    pub times: &'a [f64],
    pub points: &'a [f64],
    pub eps: &'a [f64],
}

impl Polyline<'_> {
    pub fn knots(&self) -> usize {
        self.times.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    /// Point at position `seg + s`, `s ∈ [0, 1]`.
    pub fn at(&self, seg: usize, s: f64) -> Vec<f64> {
        if s == 0.0 || seg + 1 >= self.knots() {
            return self.point(seg).to_vec();
        }
        let (a, b) = (self.point(seg), self.point(seg + 1));
        a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
    }

    pub fn eps_at(&self, seg: usize, s: f64) -> f64 {
        if s == 0.0 || seg + 1 >= self.knots() {
            return self.eps[seg];
        }
        self.eps[seg] + s * (self.eps[seg + 1] - self.eps[seg])
    }

    pub fn time_at(&self, seg: usize, s: f64) -> f64 {
        if s == 0.0 || seg + 1 >= self.knots() {
            return self.times[seg];
        }
        self.times[seg] + s * (self.times[seg + 1] - self.times[seg])
    }

    /// First position after `(seg, s)` where `|S − pivot|` exceeds half the
    /// radius, as `(segment, fraction)` with fraction in `(0, 1]`.
    pub fn first_exit(&self, pivot: &[f64], seg: usize, s: f64) -> Option<(usize, f64)> {
        let mut from = s;
        for k in seg..self.knots().saturating_sub(1) {
            let a: Vec<f64> = self.point(k).iter().zip(pivot).map(|(x, p)| x - p).collect();
            let b: Vec<f64> = self.point(k + 1).iter().zip(self.point(k)).map(|(y, x)| y - x).collect();
            let e0 = self.eps[k];
            let e1 = self.eps[k + 1] - e0;
            if let Some(r) = upward_root(&a, &b, e0, e1, from) {
                return Some((k, r));
            }
            from = 0.0;
        }
        None
    }
}

/// Smallest `r ∈ (from, 1]` where `f(s) = |a + s b|² − ¼(e0 + s e1)²`
/// crosses zero upwards.
fn upward_root(a: &[f64], b: &[f64], e0: f64, e1: f64, from: f64) -> Option<f64> {
    let qa = math::dot(b, b) - 0.25 * e1 * e1;
    let qb = 2.0 * math::dot(a, b) - 0.5 * e0 * e1;
    let qc = math::dot(a, a) - 0.25 * e0 * e0;
    let slope = |r: f64| 2.0 * qa * r + qb;
    let mut roots = [f64::NAN; 2];
    let scale = math::dot(b, b) + 0.25 * e1 * e1;
    if qa.abs() <= 1e-14 * scale || scale == 0.0 {
        if qb != 0.0 {
            roots[0] = -qc / qb;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let q = -0.5 * (qb + math::sqrt(disc).copysign(qb));
        if q != 0.0 {
            roots[0] = q / qa;
            roots[1] = qc / q;
        } else {
            roots[0] = 0.0;
        }
    }
    roots
        .into_iter()
        .filter(|&r| r > from && r <= 1.0 && slope(r) > 0.0)
        .min_by(f64::total_cmp)
}

/// Stopping positions `τ_n` and pivots `X_n` of the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct RetirementWalk {
    n: usize,
    rule: StoppingRule,
    /// Fractional grid positions `τ_n / dt`.
    positions: Vec<f64>,
    times: Vec<f64>,
    pivots: Vec<f64>,
    retired: bool,
    retirement_step: Option<usize>,
}

impl RetirementWalk {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn rule(&self) -> StoppingRule {
        self.rule
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn pivot(&self, i: usize) -> &[f64] {
        &self.pivots[i * self.n..(i + 1) * self.n]
    }

    pub fn retired(&self) -> bool {
        self.retired
    }

    /// Index `m` of the pivot created by retirement (`τ_m = T`).
    pub fn retirement_step(&self) -> Option<usize> {
        self.retirement_step
    }

    /// Replaces pivot `i` (for negative controls).
    pub fn set_pivot(&mut self, i: usize, x: &[f64]) {
        self.pivots[i * self.n..(i + 1) * self.n].copy_from_slice(x);
    }
}

pub fn retirement_walk(path: &MarketPath, eps: &EpsilonProcess) -> CoreResult<RetirementWalk> {
    retirement_walk_with(path, eps, StoppingRule::Interpolated)
}

pub fn retirement_walk_with(
    path: &MarketPath,
    eps: &EpsilonProcess,
    rule: StoppingRule,
) -> CoreResult<RetirementWalk> {
    if eps.grid() != path.grid() {
        return Err(domain("radius and path grids differ"));
    }
    let grid = path.grid();
    let n = path.n_assets();
    let last = grid.steps();
    let mut walk = RetirementWalk {
        n,
        rule,
        positions: alloc::vec![0.0],
        times: alloc::vec![0.0],
        pivots: path.row(0).to_vec(),
        retired: false,
        retirement_step: None,
    };
    let times: Vec<f64> = grid.times().collect();
    let line = Polyline {
        n,
        times: &times,
        points: path.as_grid_path().values(),
        eps: eps.values(),
    };
    let (mut seg, mut frac) = (0usize, 0.0f64);
    loop {
        let pivot = walk.pivot(walk.len() - 1).to_vec();
        let exit = match rule {
            StoppingRule::Interpolated => line.first_exit(&pivot, seg, frac),
            StoppingRule::GridIndex => (seg + 1..=last)
                .find(|&k| math::dist(path.row(k), &pivot) > 0.5 * eps.value(k))
                .map(|k| (k - 1, 1.0)),
        };
        match exit {
            Some((k, s)) if (k as f64 + s) < last as f64 => {
                let (k, s) = if s >= 1.0 { (k + 1, 0.0) } else { (k, s) };
                walk.positions.push(k as f64 + s);
                walk.times.push(line.time_at(k, s));
                walk.pivots.extend_from_slice(&line.at(k, s));
                seg = k;
                frac = s;
            }
            _ => {
                walk.positions.push(last as f64);
                walk.times.push(grid.horizon());
                walk.pivots.extend_from_slice(&pivot);
                walk.retired = true;
                walk.retirement_step = Some(walk.len() - 1);
                return Ok(walk);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeReport {
    /// `max (|S_t − X_{n+1}| − ε_t)` over checked points; `≤ 0` passes.
    pub max_slack: f64,
    pub worst_time: f64,
    pub points_checked: usize,
}

/// Largest tube slack without failing.
pub fn tube_slack(path: &MarketPath, eps: &EpsilonProcess, walk: &RetirementWalk) -> TubeReport {
    let times: Vec<f64> = path.grid().times().collect();
    let line = Polyline {
        n: path.n_assets(),
        times: &times,
        points: path.as_grid_path().values(),
        eps: eps.values(),
    };
    let mut report = TubeReport {
        max_slack: f64::NEG_INFINITY,
        worst_time: 0.0,
        points_checked: 0,
    };
    for j in 0..walk.len() - 1 {
        let (lo, hi) = (walk.positions[j], walk.positions[j + 1]);
        let target = walk.pivot(j + 1);
        let mut check = |seg: usize, s: f64| {
            let slack = math::dist(&line.at(seg, s), target) - line.eps_at(seg, s);
            report.points_checked += 1;
            if slack > report.max_slack {
                report.max_slack = slack;
                report.worst_time = line.time_at(seg, s);
            }
        };
        for pos in [lo, hi] {
            let k = pos as usize;
            check(k, pos - k as f64);
        }
        for k in (math::ceil(lo) as usize)..=(math::floor(hi) as usize) {
            check(k, 0.0);
        }
    }
    report
}

/// Verifies `|S_t − X_{n+1}| ≤ ε_t` for `τ_n ≤ t ≤ τ_{n+1}` at every grid
/// point and stopping time.
pub fn tube_check(path: &MarketPath, eps: &EpsilonProcess, walk: &RetirementWalk) -> CoreResult<TubeReport> {
    let report = tube_slack(path, eps, walk);
    if report.max_slack > 0.0 {
        return Err(CoreError::TubeViolation {
            slack: report.max_slack,
            time: report.worst_time,
        });
    }
    Ok(report)
}
