//! Minimal-entropy martingale re-weighting of one scenario-tree node.
//!
//! The primal problem is `min KL(q‖p)` subject to `Σ q Δ = 0`, `Σ q = 1`,
//! a floor on the retirement mass and a cap on `Σ q |Δ|²`. Its dual is
//! `min_v log Σ_k p_k exp(v·φ_k) − v·c` over `v = (λ, α ≥ 0, β ≥ 0)` with
//! features `φ_k = (Δ_k, r_k, −s_k)` and `c = (0, floor, −budget)`; the
//! optimum is `q_k ∝ p_k exp(v·φ_k)`. Inequality constraints are handled by
//! enumerating which of them are active and keeping the KKT-consistent set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, CoreError, CoreResult};
use crate::linalg;
use crate::lp::{self, LpOutcome};
use crate::math;

#[derive(Debug, Clone, Copy)]
pub struct TiltProblem<'a> {
    pub dim: usize,
    /// Flat `K × dim` increments.
    pub deltas: &'a [f64],
    /// Original child probabilities.
    pub p: &'a [f64],
    /// Children whose increment ends at the horizon.
    pub retirement: &'a [bool],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltParams {
    pub retirement_mass_floor: f64,
    /// The cap is `2^{−budget_exponent} · max_k |Δ_k|²`.
    pub budget_exponent: i32,
}

impl Default for TiltParams {
    fn default() -> Self {
        Self {
            retirement_mass_floor: 0.5,
            budget_exponent: 0,
        }
    }
}

/// Budget cap replaced because it was not strictly feasible (in units of
/// `max |Δ|²`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub requested: f64,
    /// Smallest achievable `Σ q |Δ|²`.
    pub minimum: f64,
    pub used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltMethod {
    /// All increments vanish; `q = p`.
    Trivial,
    /// `K = dim + 1`: the martingale constraints fix `q`.
    Unique,
    Dual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltSolution {
    pub q: Vec<f64>,
    pub method: TiltMethod,
    /// `|Σ q Δ|`.
    pub residual: f64,
    /// `|Σ q Δ| / max |Δ|`.
    pub scaled_residual: f64,
    pub retirement_mass: f64,
    pub floor_active: bool,
    /// `Σ q |Δ|² / max |Δ|²`.
    pub budget_used: f64,
    pub budget_bound: f64,
    pub budget_active: bool,
    pub relaxation: Option<Relaxation>,
    pub iterations: usize,
}

const KKT_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 400;
const RELAX_FRACTION: f64 = 0.1;

/// Solves the tilt at one node. `node` only labels errors.
pub fn tilt_node(problem: &TiltProblem<'_>, params: &TiltParams, node: usize) -> CoreResult<TiltSolution> {
    let TiltProblem {
        dim,
        deltas,
        p,
        retirement,
    } = *problem;
    let k = p.len();
    if dim == 0 || k == 0 || deltas.len() != k * dim || retirement.len() != k {
        return Err(domain("tilt problem has inconsistent shapes"));
    }
    if p.iter().any(|&x| !(x > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(domain("original weights must be a positive probability vector"));
    }
    if !(params.retirement_mass_floor > 0.0 && params.retirement_mass_floor < 1.0) {
        return Err(domain("retirement mass floor must lie in (0, 1)"));
    }
    let scale = deltas.chunks_exact(dim).map(math::norm).fold(0.0f64, f64::max);
    let bound = math::exp(-(params.budget_exponent as f64) * core::f64::consts::LN_2);
    if scale == 0.0 {
        return Ok(finish(problem, p.to_vec(), TiltMethod::Trivial, 1.0, bound, None, false, false, 0));
    }
    let hull = lp::origin_in_interior(deltas, dim);
    if !hull.interior {
        return Err(CoreError::NoTilt {
            node,
            reason: format!("origin not interior to the increment hull (rank {}, margin {:?})", hull.rank, hull.margin),
        });
    }
    let norm: Vec<f64> = deltas.iter().map(|x| x / scale).collect();
    let s: Vec<f64> = norm.chunks_exact(dim).map(|d| math::dot(d, d)).collect();

    if k == dim + 1 {
        if let Some(q) = unique_weights(&norm, dim) {
            let used: f64 = q.iter().zip(&s).map(|(a, b)| a * b).sum();
            let relaxation = (used > bound).then_some(Relaxation {
                requested: bound,
                minimum: used,
                used,
            });
            return Ok(finish(problem, q, TiltMethod::Unique, scale, bound, relaxation, false, false, 0));
        }
    }

    let has_ret = retirement.iter().any(|&r| r);
    let floor = has_ret.then_some(params.retirement_mass_floor);
    let ctx = Ctx {
        norm: &norm,
        s: &s,
        retirement,
        p,
        dim,
        floor,
    };
    let free = ctx.solve(f64::INFINITY).ok_or(numerical(node))?;
    let s_free = ctx.second_moment(&free.0.q);
    if bound >= s_free {
        let (sol, floor_on, _) = free;
        return Ok(finish(problem, sol.q, TiltMethod::Dual, scale, bound, None, floor_on, false, sol.iterations));
    }

    // a cap at (or barely above) the smallest achievable second moment pins
    // q to an LP vertex and sends weights to zero; keep it a fixed fraction
    // of the way towards the unconstrained optimum
    let s_min = min_second_moment(&norm, &s, dim);
    let budget = bound.max(s_min + RELAX_FRACTION * (s_free - s_min));
    let best = ctx.solve(budget).ok_or(numerical(node))?;
    let relaxation = (budget > bound).then_some(Relaxation {
        requested: bound,
        minimum: s_min,
        used: budget,
    });
    let (sol, floor_on, budget_on) = best;
    Ok(finish(problem, sol.q, TiltMethod::Dual, scale, budget, relaxation, floor_on, budget_on, sol.iterations))
}

fn numerical(node: usize) -> CoreError {
    CoreError::NumericalTilt {
        node,
        residual: f64::NAN,
    }
}

struct Ctx<'a> {
    norm: &'a [f64],
    s: &'a [f64],
    retirement: &'a [bool],
    p: &'a [f64],
    dim: usize,
    floor: Option<f64>,
}

impl Ctx<'_> {
    fn second_moment(&self, q: &[f64]) -> f64 {
        q.iter().zip(self.s).map(|(a, b)| a * b).sum()
    }

    /// Enumerates active sets of the two inequalities and returns the
    /// KKT-consistent solution with the flags `(floor active, cap active)`.
    fn solve(&self, budget: f64) -> Option<(DualSolution, bool, bool)> {
        let sets: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];
        for (floor_on, budget_on) in sets {
            if (floor_on && self.floor.is_none()) || (budget_on && !budget.is_finite()) {
                continue;
            }
            let Some(sol) = solve_dual(
                self.norm,
                self.s,
                self.retirement,
                self.p,
                self.dim,
                if floor_on { self.floor } else { None },
                budget_on.then_some(budget),
            ) else {
                continue;
            };
            let ret_mass: f64 = sol.q.iter().zip(self.retirement).filter(|(_, &r)| r).map(|(q, _)| q).sum();
            let floor_ok = floor_on || self.floor.is_none_or(|f| ret_mass >= f - KKT_TOL);
            let budget_ok = budget_on || self.second_moment(&sol.q) <= budget + KKT_TOL;
            let multipliers_ok = sol.alpha >= -KKT_TOL && sol.beta >= -KKT_TOL;
            if floor_ok && budget_ok && multipliers_ok {
                return Some((sol, floor_on, budget_on));
            }
        }
        None
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &TiltProblem<'_>,
    q: Vec<f64>,
    method: TiltMethod,
    scale: f64,
    bound: f64,
    relaxation: Option<Relaxation>,
    floor_active: bool,
    budget_active: bool,
    iterations: usize,
) -> TiltSolution {
    let dim = problem.dim;
    let mut mean = vec![0.0; dim];
    let mut used = 0.0;
    for (qk, d) in q.iter().zip(problem.deltas.chunks_exact(dim)) {
        for (m, x) in mean.iter_mut().zip(d) {
            *m += qk * x;
        }
        used += qk * math::dot(d, d) / (scale * scale);
    }
    let residual = math::norm(&mean);
    TiltSolution {
        retirement_mass: q.iter().zip(problem.retirement).filter(|(_, &r)| r).map(|(q, _)| q).sum(),
        q,
        method,
        residual,
        scaled_residual: residual / scale,
        floor_active,
        budget_used: used,
        budget_bound: relaxation.map_or(bound, |r| r.used),
        budget_active,
        relaxation,
        iterations,
    }
}

/// The unique `q` with `Σ q Δ = 0`, `Σ q = 1` when `K = dim + 1`.
fn unique_weights(norm: &[f64], dim: usize) -> Option<Vec<f64>> {
    if dim == 1 {
        // closed form keeps rational instances exact
        let (a, b) = (norm[0], norm[1]);
        if a == b {
            return None;
        }
        return Some(vec![b / (b - a), a / (a - b)]);
    }
    let m = dim + 1;
    let mut a = vec![0.0; m * m];
    for (j, d) in norm.chunks_exact(dim).enumerate() {
        for i in 0..dim {
            a[i * m + j] = d[i];
        }
        a[dim * m + j] = 1.0;
    }
    let mut rhs = vec![0.0; m];
    rhs[dim] = 1.0;
    let q = linalg::solve(&mut a, &mut rhs, m)?;
    q.iter().all(|&x| x > 0.0).then_some(q)
}

/// `min Σ q s` over martingale probability vectors.
fn min_second_moment(norm: &[f64], s: &[f64], dim: usize) -> f64 {
    let k = s.len();
    let m = dim + 1;
    let mut a = vec![0.0; m * k];
    for (j, d) in norm.chunks_exact(dim).enumerate() {
        for i in 0..dim {
            a[i * k + j] = d[i];
        }
        a[dim * k + j] = 1.0;
    }
    let mut b = vec![0.0; m];
    b[dim] = 1.0;
    let c: Vec<f64> = s.iter().map(|x| -x).collect();
    match lp::maximize(&c, &a, &b, m, k) {
        LpOutcome::Optimal { value, .. } => -value,
        _ => f64::INFINITY,
    }
}

struct DualSolution {
    q: Vec<f64>,
    alpha: f64,
    beta: f64,
    iterations: usize,
}

/// Damped Newton on the dual with the given inequality constraints treated
/// as equalities. Returns `None` when it fails to converge.
fn solve_dual(
    norm: &[f64],
    s: &[f64],
    retirement: &[bool],
    p: &[f64],
    dim: usize,
    floor: Option<f64>,
    budget: Option<f64>,
) -> Option<DualSolution> {
    let k = p.len();
    let m = dim + usize::from(floor.is_some()) + usize::from(budget.is_some());
    let mut feats = vec![0.0; k * m];
    let mut c = vec![0.0; m];
    for j in 0..k {
        let row = &mut feats[j * m..(j + 1) * m];
        row[..dim].copy_from_slice(&norm[j * dim..(j + 1) * dim]);
        let mut col = dim;
        if floor.is_some() {
            row[col] = if retirement[j] { 1.0 } else { 0.0 };
            col += 1;
        }
        if budget.is_some() {
            row[col] = -s[j];
        }
    }
    let mut col = dim;
    if let Some(f) = floor {
        c[col] = f;
        col += 1;
    }
    if let Some(b) = budget {
        c[col] = -b;
    }
    let logp: Vec<f64> = p.iter().map(|&x| math::ln(x)).collect();
    let dual = Dual {
        feats: &feats,
        logp: &logp,
        c: &c,
        m,
    };
    let mut v = vec![0.0; m];
    let mut state = dual.eval(&v);
    for it in 0..MAX_NEWTON {
        let gnorm = state.grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gnorm <= 0.01 * KKT_TOL || (gnorm <= KKT_TOL && it > 0) {
            return Some(dual.solution(v, state, floor.is_some(), budget.is_some(), dim, it));
        }
        let mut hess = state.hess.clone();
        let ridge = 1e-14 * (1.0 + (0..m).map(|i| hess[i * m + i]).fold(0.0, f64::max));
        for i in 0..m {
            hess[i * m + i] += ridge;
        }
        let mut rhs: Vec<f64> = state.grad.iter().map(|g| -g).collect();
        let step = linalg::solve(&mut hess, &mut rhs, m)?;
        let slope: f64 = step.iter().zip(&state.grad).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            return (gnorm <= KKT_TOL).then(|| dual.solution(v, state, floor.is_some(), budget.is_some(), dim, it));
        }
        // near the optimum the predicted decrease drops below the rounding
        // of the objective; fall back to requiring a smaller gradient
        let flat = -slope < 1e-10 * (1.0 + state.value.abs());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            if trial == v {
                break;
            }
            let next = dual.eval(&trial);
            let next_gnorm = next.grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            let armijo = next.value <= state.value + 1e-4 * t * slope;
            if next.value.is_finite() && (armijo || (flat && next_gnorm < gnorm)) {
                accepted = Some((trial, next));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, next)) => {
                v = trial;
                state = next;
            }
            None => {
                return (gnorm <= KKT_TOL).then(|| dual.solution(v, state, floor.is_some(), budget.is_some(), dim, it));
            }
        }
    }
    None
}

struct Dual<'a> {
    feats: &'a [f64],
    logp: &'a [f64],
    c: &'a [f64],
    m: usize,
}

struct DualState {
    value: f64,
    q: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Dual<'_> {
    fn eval(&self, v: &[f64]) -> DualState {
        let m = self.m;
        let w: Vec<f64> = self
            .logp
            .iter()
            .zip(self.feats.chunks_exact(m))
            .map(|(lp, f)| lp + math::dot(v, f))
            .collect();
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut q: Vec<f64> = w.iter().map(|x| math::exp(x - top)).collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        let value = top + math::ln(z) - math::dot(v, self.c);
        let mut mean = vec![0.0; m];
        for (qk, f) in q.iter().zip(self.feats.chunks_exact(m)) {
            for (a, b) in mean.iter_mut().zip(f) {
                *a += qk * b;
            }
        }
        let mut hess = vec![0.0; m * m];
        for (qk, f) in q.iter().zip(self.feats.chunks_exact(m)) {
            for i in 0..m {
                let di = f[i] - mean[i];
                for j in 0..=i {
                    hess[i * m + j] += qk * di * (f[j] - mean[j]);
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                hess[j * m + i] = hess[i * m + j];
            }
        }
        let grad = mean.iter().zip(self.c).map(|(a, b)| a - b).collect();
        DualState { value, q, grad, hess }
    }

    fn solution(&self, v: Vec<f64>, state: DualState, floor: bool, budget: bool, dim: usize, it: usize) -> DualSolution {
        let alpha = if floor { v[dim] } else { 0.0 };
        let beta = if budget { v[self.m - 1] } else { 0.0 };
        DualSolution {
            q: state.q,
            alpha,
            beta,
            iterations: it,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn solve(dim: usize, deltas: &[f64], ret: &[bool], params: TiltParams) -> CoreResult<TiltSolution> {
        let k = ret.len();
        let p = vec![1.0 / k as f64; k];
        tilt_node(
            &TiltProblem {
                dim,
                deltas,
                p: &p,
                retirement: ret,
            },
            &params,
            0,
        )
    }

    #[test]
    fn two_point_instance_is_exact() {
        let s = solve(1, &[1.0, -2.0], &[false, false], TiltParams::default()).unwrap();
        assert_eq!(s.q, [2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(s.method, TiltMethod::Unique);
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn symmetric_and_trivial() {
        let s = solve(1, &[0.3, -0.3], &[false, false], TiltParams::default()).unwrap();
        assert_eq!(s.q, [0.5, 0.5]);
        let s = solve(2, &[0.0; 6], &[true; 3], TiltParams::default()).unwrap();
        assert_eq!(s.method, TiltMethod::Trivial);
        assert_eq!(s.q, [1.0 / 3.0; 3]);
    }

    #[test]
    fn one_sided_has_no_tilt() {
        let e = solve(1, &[1.0, 2.0, 0.0], &[false, false, true], TiltParams::default()).unwrap_err();
        assert!(matches!(e, CoreError::NoTilt { .. }));
    }

    #[test]
    fn entropy_solution_matches_closed_form() {
        // three 1-d children {+1, 0, −1} with p uniform: symmetric optimum
        let s = solve(1, &[1.0, 0.0, -1.0], &[false; 3], TiltParams::default()).unwrap();
        for (a, b) in s.q.iter().zip([1.0 / 3.0; 3]) {
            assert!((a - b).abs() < 1e-14);
        }
        // {+2, −1, −1}: q ∝ p·exp(λΔ) with 2q₁ = q₂ + q₃ = 1 − q₁ ⇒ q₁ = 1/3
        let s = solve(1, &[2.0, -1.0, -1.0], &[false; 3], TiltParams::default()).unwrap();
        assert!((s.q[0] - 1.0 / 3.0).abs() < 1e-13);
        assert!((s.q[1] - s.q[2]).abs() < 1e-15);
    }

    #[test]
    fn retirement_floor_binds() {
        let params = TiltParams {
            retirement_mass_floor: 0.6,
            budget_exponent: 0,
        };
        let s = solve(1, &[1.0, -1.0, 0.0], &[false, false, true], params).unwrap();
        assert!(s.floor_active);
        assert!((s.retirement_mass - 0.6).abs() < 1e-12);
        assert!((s.q[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn budget_binds_and_relaxes() {
        // with a retirement child the budget can always be met
        let params = TiltParams {
            retirement_mass_floor: 0.1,
            budget_exponent: 3,
        };
        let s = solve(1, &[1.0, -1.0, 0.0], &[false, false, true], params).unwrap();
        assert!(s.relaxation.is_none());
        assert!(s.budget_used <= 0.125 + 1e-12);
        assert!(s.budget_active);
        // without one, |Δ| = max everywhere makes Σ q s = 1 unavoidable
        let params = TiltParams {
            retirement_mass_floor: 0.5,
            budget_exponent: 2,
        };
        let s = solve(2, &[1.0, 0.0, 0.0, 1.0, -0.6, -0.8, 0.0, -1.0], &[false; 4], params).unwrap();
        let r = s.relaxation.unwrap();
        assert_eq!(r.requested, 0.25);
        assert!((r.minimum - 1.0).abs() < 1e-12);
        assert!(s.scaled_residual < 1e-12);
    }

    #[test]
    fn partial_relaxation_lands_between_minimum_and_free() {
        let params = TiltParams {
            retirement_mass_floor: 0.5,
            budget_exponent: 1,
        };
        let s = solve(1, &[0.2, -1.0, 1.0, -0.3], &[false; 4], params).unwrap();
        assert!(s.relaxation.is_none());
        let params = TiltParams {
            retirement_mass_floor: 0.5,
            budget_exponent: 10,
        };
        let s = solve(1, &[0.2, -1.0, 1.0, -0.3], &[false; 4], params).unwrap();
        let r = s.relaxation.unwrap();
        assert!(r.minimum < r.used);
        assert!((s.budget_used - r.used).abs() < 1e-9);
        assert!(s.scaled_residual < 1e-10);
    }

    fn random_node(rng: &mut RngStream) -> (usize, Vec<f64>, Vec<f64>, Vec<bool>) {
        let dim = 1 + (rng.next_u64() % 3) as usize;
        let k = 2 + (rng.next_u64() % 15) as usize;
        let mut deltas = vec![0.0; k * dim];
        rng.fill_normal(&mut deltas);
        let ret: Vec<bool> = (0..k).map(|_| rng.uniform() < 0.2).collect();
        for (j, r) in ret.iter().enumerate() {
            if *r {
                deltas[j * dim..(j + 1) * dim].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let mut p: Vec<f64> = (0..k).map(|_| 0.1 + rng.uniform()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        (dim, deltas, p, ret)
    }

    #[test]
    fn random_nodes_meet_tolerances() {
        let mut rng = RngStream::new(99, 0);
        let mut solved = 0;
        while solved < 300 {
            let (dim, deltas, p, ret) = random_node(&mut rng);
            if !lp::origin_in_interior(&deltas, dim).interior {
                continue;
            }
            let problem = TiltProblem {
                dim,
                deltas: &deltas,
                p: &p,
                retirement: &ret,
            };
            let params = TiltParams {
                retirement_mass_floor: 0.5,
                budget_exponent: (rng.next_u64() % 4) as i32,
            };
            let s = tilt_node(&problem, &params, 0).unwrap();
            assert!(s.scaled_residual <= 1e-10, "{s:?}");
            // KL projections can leave weights far below any fixed floor
            // when the multipliers are large, but never exactly zero
            assert!(s.q.iter().all(|&x| x > 0.0));
            if ret.iter().any(|&r| r) && s.method == TiltMethod::Dual {
                assert!(s.retirement_mass >= 0.5 - 1e-12);
            }
            if s.method == TiltMethod::Dual {
                assert!(s.budget_used <= s.budget_bound + 1e-10, "{s:?}");
            }
            solved += 1;
        }
    }

    proptest! {
        #[test]
        fn tilt_is_kl_optimal_against_perturbations(seed in any::<u64>()) {
            // the solution beats any feasible martingale perturbation in KL
            let mut rng = RngStream::new(seed, 0);
            let (dim, deltas, p, _) = random_node(&mut rng);
            let ret = vec![false; p.len()];
            let deltas: Vec<f64> = deltas.iter().map(|x| if *x == 0.0 { 0.5 } else { *x }).collect();
            prop_assume!(lp::origin_in_interior(&deltas, dim).interior);
            let problem = TiltProblem { dim, deltas: &deltas, p: &p, retirement: &ret };
            let params = TiltParams { retirement_mass_floor: 0.5, budget_exponent: -20 };
            let s = tilt_node(&problem, &params, 0).unwrap();
            let kl = |q: &[f64]| q.iter().zip(&p).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
            let base = kl(&s.q);
            let k = p.len();
            // null-space direction of the constraints via projection
            let mut dir = vec![0.0; k];
            rng.fill_normal(&mut dir);
            let m = dim + 1;
            let mut rows: Vec<Vec<f64>> = (0..dim).map(|i| (0..k).map(|j| deltas[j * dim + i]).collect()).collect();
            rows.push(vec![1.0; k]);
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for r in rows.iter().take(m) {
                let mut v = r.clone();
                for b in &basis {
                    let c = math::dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
                let n = math::norm(&v);
                if n > 1e-9 {
                    basis.push(v.iter().map(|x| x / n).collect());
                }
            }
            for b in &basis {
                let c = math::dot(&dir, b);
                dir.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            for t in [1e-3, -1e-3] {
                let q: Vec<f64> = s.q.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                if q.iter().all(|&x| x > 0.0) {
                    prop_assert!(kl(&q) >= base - 1e-12);
                }
            }
        }
    }
}
