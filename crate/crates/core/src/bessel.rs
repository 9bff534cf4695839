//! Squared radius of a driftless bounded-volatility martingale, its time
//! change into a squared Bessel type equation, and the comparison with a
//! BESQ process driven by the same Brownian motion.
//!
//! For `dX = σ dW` in `ℝᵈ` with `c I ≤ a = σσᵀ ≤ C I`, `R = |X|²` solves
//! `dR = 2√R dN + Tr(a) dt` with `dN = uᵀdX`, `u = X/|X|`. Running the clock
//! `s = ⟨N⟩_t` turns `N` into a Brownian motion `β` and `R` into `R̃` with
//! `dR̃ = 2√R̃ dβ + b ds`, `b = Tr(a)/(uᵀau) ≤ dC/c`. A BESQ(δ) process `Z`
//! on the same `β` with `δ ≥ dC/c` dominates `R̃`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, precondition, CoreError, CoreResult};
use crate::grid::{GridPath, MarketPath, TimeGrid};
use crate::math;
use crate::rng::RngStream;
use crate::sde::{simulate_additive, DriftSpec, MarketModel, VolBounds, VolatilitySpec};
use crate::stats::{self, wilson, Interval, Z95};

const BOUND_TOL: f64 = 1e-12;

/// Radial process of a grid path and its time change.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDecomposition {
    grid: TimeGrid,
    /// `R_k = |X_k|²`.
    r: Vec<f64>,
    /// `N_k = Σ_{j<k} u_jᵀ ΔX_j`.
    n: Vec<f64>,
    /// `⟨N⟩` at the grid times, i.e. the new clock `s_k`.
    qvar: Vec<f64>,
    /// Effective drift `Tr(a)/(uᵀau)` on each step.
    b: Vec<f64>,
}

impl RadialDecomposition {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn n_values(&self) -> &[f64] {
        &self.n
    }

    pub fn qvar(&self) -> &[f64] {
        &self.qvar
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Increments of `β` on the clock knots.
    pub fn dbeta(&self) -> Vec<f64> {
        self.n.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Clock steps `s_{k+1} − s_k`.
    pub fn ds(&self) -> Vec<f64> {
        self.qvar.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `η(s)`: the grid time at which `⟨N⟩` reaches `s`, by linear
    /// interpolation; clamped to `[0, T]`.
    pub fn time_change(&self, s: f64) -> f64 {
        let k = self.qvar.partition_point(|&q| q <= s);
        if k == 0 {
            return 0.0;
        }
        if k >= self.qvar.len() {
            return self.grid.horizon();
        }
        let (q0, q1) = (self.qvar[k - 1], self.qvar[k]);
        let (t0, t1) = (self.grid.t(k - 1), self.grid.t(k));
        t0 + (s - q0) / (q1 - q0) * (t1 - t0)
    }

    /// `R̃(s) = R(η(s))` with `R` linear between grid times.
    pub fn r_tilde(&self, s: f64) -> f64 {
        let pos = self.time_change(s) / self.grid.dt();
        let k = (pos as usize).min(self.r.len() - 1);
        if k + 1 >= self.r.len() {
            return self.r[k];
        }
        let f = pos - k as f64;
        self.r[k] + f * (self.r[k + 1] - self.r[k])
    }
}

/// Decomposes a driftless path `X` of `dX = σ dW`. At the origin the
/// direction `u` is the first unit vector.
pub fn radial_decompose(x: &GridPath, vol: &VolatilitySpec) -> CoreResult<RadialDecomposition> {
    let d = x.dim();
    if vol.n() != d {
        return Err(domain("path and volatility dimensions differ"));
    }
    let grid = *x.grid();
    let dt = grid.dt();
    let VolBounds { eps_lo: c, m_hi: cap } = vol.bounds();
    let steps = grid.steps();
    let mut sigma = vec![0.0; d * vol.d()];
    let mut u = vec![0.0; d];
    let mut r = Vec::with_capacity(steps + 1);
    let mut n = vec![0.0];
    let mut qvar = vec![0.0];
    let mut b = Vec::with_capacity(steps);
    r.push(math::dot(x.row(0), x.row(0)));
    for k in 0..steps {
        let xk = x.row(k);
        let len = math::norm(xk);
        if len == 0.0 {
            u.iter_mut().for_each(|v| *v = 0.0);
            u[0] = 1.0;
        } else {
            u.iter_mut().zip(xk).for_each(|(v, x)| *v = x / len);
        }
        vol.eval(grid.t(k), xk, &mut sigma);
        // uᵀ a u = |σᵀu|², Tr(a) = |σ|²_F
        let aa: f64 = (0..vol.d())
            .map(|nu| {
                let s: f64 = (0..d).map(|i| sigma[i * vol.d() + nu] * u[i]).sum();
                s * s
            })
            .sum();
        let trace: f64 = sigma.iter().map(|s| s * s).sum();
        let h = aa * dt;
        if !(h > 0.0) {
            return Err(CoreError::TimeChange { step: k });
        }
        if h < c * dt * (1.0 - BOUND_TOL) || h > cap * dt * (1.0 + BOUND_TOL) {
            return Err(CoreError::ModelContract(alloc::format!(
                "d<N>/dt = {aa} outside [{c}, {cap}] at step {k}"
            )));
        }
        let dx: Vec<f64> = x.row(k + 1).iter().zip(xk).map(|(a, b)| a - b).collect();
        n.push(n[k] + math::dot(&u, &dx));
        qvar.push(qvar[k] + h);
        b.push(trace / aa);
        r.push(math::dot(x.row(k + 1), x.row(k + 1)));
    }
    Ok(RadialDecomposition { grid, r, n, qvar, b })
}

/// Dimension of the comparison process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesqParams {
    delta_b: f64,
}

/// Smallest dimension `d·C/c` for which domination is guaranteed.
pub fn min_dimension(d: usize, bounds: VolBounds) -> CoreResult<f64> {
    if !(bounds.eps_lo > 0.0) {
        return Err(domain("domination needs a positive lower volatility bound"));
    }
    Ok(d as f64 * bounds.m_hi / bounds.eps_lo)
}

impl BesqParams {
    pub fn new(delta_b: f64) -> CoreResult<Self> {
        if !(delta_b >= 0.0 && delta_b.is_finite()) {
            return Err(domain("BESQ dimension must be non-negative"));
        }
        Ok(Self { delta_b })
    }

    /// Checks `delta_b ≥ d·C/c`.
    pub fn for_domination(delta_b: f64, d: usize, bounds: VolBounds) -> CoreResult<Self> {
        let need = min_dimension(d, bounds)?;
        if delta_b < need * (1.0 - BOUND_TOL) {
            return Err(domain(alloc::format!("delta_B < dC/c = {need}")));
        }
        Self::new(delta_b)
    }

    pub fn delta_b(&self) -> f64 {
        self.delta_b
    }
}

/// Discretization of `dZ = 2√Z dβ + δ ds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BesqScheme {
    /// `Z' = (√Z + Δβ)² + (δ − 1)Δs`, floored at 0. Exact for `δ = 1`;
    /// for `δ = 0` the origin is kept absorbing.
    #[default]
    Milstein,
    /// `Z' = Z + 2√Z⁺ Δβ + δΔs`, floored at 0.
    FullTruncationEuler,
}

fn besq_step(z: f64, dbeta: f64, ds: f64, delta: f64, scheme: BesqScheme) -> f64 {
    if delta == 0.0 && z == 0.0 {
        return 0.0;
    }
    let root = math::sqrt(z.max(0.0));
    let next = match scheme {
        BesqScheme::Milstein => (root + dbeta) * (root + dbeta) + (delta - 1.0) * ds,
        BesqScheme::FullTruncationEuler => z + 2.0 * root * dbeta + delta * ds,
    };
    next.max(0.0)
}

/// `Z` from `Z₀ = 0` along given clock steps and driver increments.
pub fn besq_from_increments(params: &BesqParams, dbeta: &[f64], ds: &[f64], scheme: BesqScheme) -> Vec<f64> {
    let mut z = Vec::with_capacity(dbeta.len() + 1);
    z.push(0.0);
    for (db, h) in dbeta.iter().zip(ds) {
        let prev = z[z.len() - 1];
        z.push(besq_step(prev, *db, *h, params.delta_b, scheme));
    }
    z
}

/// BESQ path from 0 on a uniform grid.
pub fn besq_simulate(params: &BesqParams, grid: &TimeGrid, scheme: BesqScheme, rng: &mut RngStream) -> GridPath {
    let dt = grid.dt();
    let sq = math::sqrt(dt);
    let dbeta: Vec<f64> = (0..grid.steps()).map(|_| sq * rng.normal()).collect();
    let ds = vec![dt; grid.steps()];
    let z = besq_from_increments(params, &dbeta, &ds, scheme);
    GridPath::new(*grid, 1, z).expect("one value per grid point")
}

/// `1e-6 + 10·dt`.
pub fn default_tolerance(grid: &TimeGrid) -> f64 {
    1e-6 + 10.0 * grid.dt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    /// Clock knots compared (including `s = 0`).
    pub points: usize,
    /// Knots with `R̃ ≤ Z + tolerance`.
    pub dominated: usize,
    pub fraction: f64,
    /// `max (R̃ − Z)`.
    pub max_excess: f64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    /// `max b(s)`; domination needs it below `delta_B`.
    pub max_b: f64,
    pub z: Vec<f64>,
}

/// Runs `Z` on the `β` extracted from `X` and compares it with `R̃` at the
/// clock knots `s_k = ⟨N⟩_{t_k}`, where `R̃(s_k) = R(t_k)`.
pub fn coupled_comparison(
    decomposition: &RadialDecomposition,
    params: &BesqParams,
    scheme: BesqScheme,
    tolerance: f64,
) -> CouplingReport {
    let z = besq_from_increments(params, &decomposition.dbeta(), &decomposition.ds(), scheme);
    let r = decomposition.r();
    let mut report = CouplingReport {
        points: r.len(),
        dominated: 0,
        fraction: 0.0,
        max_excess: f64::NEG_INFINITY,
        max_abs_diff: 0.0,
        tolerance,
        max_b: decomposition.b().iter().copied().fold(0.0, f64::max),
        z: Vec::new(),
    };
    for (rk, zk) in r.iter().zip(&z) {
        let excess = rk - zk;
        if excess <= tolerance {
            report.dominated += 1;
        }
        report.max_excess = report.max_excess.max(excess);
        report.max_abs_diff = report.max_abs_diff.max(excess.abs());
    }
    report.fraction = report.dominated as f64 / report.points as f64;
    report.z = z;
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    pub paths: usize,
    /// Fraction of paths with `|X_k| ≤ ε` at every grid point.
    pub grid: Interval,
    /// Grid indicator times the Brownian-bridge probability of staying in
    /// the ball between grid points (normal interval).
    pub bridge: Interval,
    /// `P{sup_{s ≤ CT} Z_s < ε²}` for BESQ(`dC/c`) sampled on the grid.
    pub besq_bound: Interval,
}

/// Probability that a half-space bridge with endpoint distances `a, b ≥ 0`
/// from the boundary and variance `v` never crosses it.
fn bridge_survival(a: f64, b: f64, v: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    1.0 - math::exp(-2.0 * a * b / v)
}

const BESQ_STREAM: u64 = 0x4245_5351;

/// Monte Carlo estimates of `P{sup_{t≤T} |X_t| ≤ ε}` for `dX = σ dW`,
/// `X₀ = 0`. Path `k` uses `rng.substream(k)`.
pub fn support_probability(
    vol: &VolatilitySpec,
    grid: &TimeGrid,
    eps: f64,
    n_paths: usize,
    rng: &RngStream,
) -> CoreResult<SupportReport> {
    if !(eps > 0.0) || n_paths == 0 {
        return Err(domain("support probability needs eps > 0 and at least one path"));
    }
    let d = vol.n();
    let dt = grid.dt();
    let x0 = vec![0.0; d];
    let mut sigma = vec![0.0; d * vol.d()];
    let mut inside = 0;
    let mut weights = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        let mut r = rng.substream(k as u64);
        let x = simulate_additive(grid, &x0, &DriftSpec::zero(), vol, &mut r)?;
        let ok = x.rows().all(|row| math::norm(row) <= eps);
        let mut w = 0.0;
        if ok {
            inside += 1;
            w = 1.0;
            for j in 0..grid.steps() {
                let (a, b) = (x.row(j), x.row(j + 1));
                vol.eval(grid.t(j), a, &mut sigma);
                if d == 1 {
                    let v = sigma.iter().map(|s| s * s).sum::<f64>() * dt;
                    w *= bridge_survival(eps - a[0], eps - b[0], v) * bridge_survival(eps + a[0], eps + b[0], v);
                } else {
                    let (la, lb) = (math::norm(a), math::norm(b));
                    let v = if la > 0.0 {
                        (0..vol.d())
                            .map(|nu| {
                                let s: f64 = (0..d).map(|i| sigma[i * vol.d() + nu] * a[i] / la).sum();
                                s * s
                            })
                            .sum::<f64>()
                    } else {
                        vol.bounds().m_hi
                    } * dt;
                    w *= bridge_survival(eps - la, eps - lb, v);
                }
            }
        }
        weights.push(w);
    }
    let m = stats::mean(&weights);
    let se = if n_paths > 1 { stats::std_error(&weights) } else { f64::INFINITY };
    let bounds = vol.bounds();
    let besq_bound = if bounds.eps_lo > 0.0 {
        let params = BesqParams::new(min_dimension(d, bounds)?)?;
        let long = TimeGrid::new(bounds.m_hi * grid.horizon(), grid.steps())?;
        let base = rng.substream(BESQ_STREAM);
        let stay = (0..n_paths)
            .filter(|&k| {
                let z = besq_simulate(&params, &long, BesqScheme::Milstein, &mut base.substream(k as u64));
                z.values().iter().all(|&v| v < eps * eps)
            })
            .count();
        wilson(stay, n_paths)
    } else {
        Interval {
            estimate: f64::NAN,
            lo: 0.0,
            hi: 1.0,
        }
    };
    Ok(SupportReport {
        paths: n_paths,
        grid: wilson(inside, n_paths),
        bridge: Interval {
            estimate: m,
            lo: (m - Z95 * se).max(0.0),
            hi: (m + Z95 * se).min(1.0),
        },
        besq_bound,
    })
}

/// Straight-line target from `from` at grid index `t_index` to `to` at `T`,
/// one row per grid point from `t_index` on.
pub fn linear_target(grid: &TimeGrid, t_index: usize, from: &[f64], to: &[f64]) -> Vec<f64> {
    let steps = grid.steps() - t_index;
    let mut out = Vec::with_capacity((steps + 1) * from.len());
    for j in 0..=steps {
        let s = if steps == 0 { 1.0 } else { j as f64 / steps as f64 };
        out.extend(from.iter().zip(to).map(|(a, b)| a + s * (b - a)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfsReport {
    pub paths: usize,
    pub hits: usize,
    pub estimate: Interval,
}

/// Estimates `P{sup_{[t,T]} |S − f| < eta_tube | prefix}` by restarting the
/// model from the prefix end `S(t_index)`. Path `k` uses `rng.substream(k)`.
#[allow(clippy::too_many_arguments)]
pub fn cfs_probe(
    model: &dyn MarketModel,
    prefix: &MarketPath,
    t_index: usize,
    target: &[f64],
    eta_tube: f64,
    n_paths: usize,
    rng: &RngStream,
) -> CoreResult<CfsReport> {
    let grid = prefix.grid();
    let n = prefix.n_assets();
    if t_index > grid.steps() || n != model.n_assets() {
        return Err(precondition("prefix index or dimension does not fit the model"));
    }
    if target.len() != (grid.steps() - t_index + 1) * n {
        return Err(precondition("target needs one row per grid point from t on"));
    }
    if !(eta_tube > 0.0) || n_paths == 0 {
        return Err(precondition("tube width and path count must be positive"));
    }
    let start = prefix.row(t_index);
    if !(math::dist(start, &target[..n]) < eta_tube) {
        return Err(precondition("target does not start within the tube around the prefix end"));
    }
    let mut hits = 0;
    for k in 0..n_paths {
        let mut r = rng.substream(k as u64);
        let seg = model.continuation(grid, grid.t(t_index), start, &mut r)?;
        let inside = (0..seg.len()).all(|j| math::dist(seg.point(j), &target[j * n..(j + 1) * n]) < eta_tube);
        if inside {
            hits += 1;
        }
    }
    Ok(CfsReport {
        paths: n_paths,
        hits,
        estimate: wilson(hits, n_paths),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::DiversityRegion;
    use crate::sde::{Diffusion, FernholzParams};
    use crate::stats::{ks_one_sample, normal_cdf};
    use alloc::sync::Arc;

    fn bm(d: usize, steps: usize, seed: u64) -> (GridPath, VolatilitySpec) {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let vol = VolatilitySpec::scaled_identity(d, 1.0).unwrap();
        let x = simulate_additive(&grid, &vec![0.0; d], &DriftSpec::zero(), &vol, &mut RngStream::new(seed, 0)).unwrap();
        (x, vol)
    }

    #[test]
    fn zero_path_has_zero_radius() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let x = GridPath::new(grid, 2, vec![0.0; 34]).unwrap();
        let vol = VolatilitySpec::scaled_identity(2, 1.0).unwrap();
        let rd = radial_decompose(&x, &vol).unwrap();
        assert!(rd.r().iter().all(|&r| r == 0.0));
        assert!(rd.n_values().iter().all(|&n| n == 0.0));
        let rep = coupled_comparison(&rd, &BesqParams::new(2.0).unwrap(), BesqScheme::Milstein, 0.0);
        assert_eq!(rep.fraction, 1.0);
        assert!(rep.max_excess <= 0.0);
    }

    #[test]
    fn one_dimensional_quadratic_variation_is_exact() {
        let (x, vol) = bm(1, 256, 3);
        let rd = radial_decompose(&x, &vol).unwrap();
        for (k, q) in rd.qvar().iter().enumerate() {
            assert!((q - x.grid().t(k)).abs() < 1e-12);
        }
        // N = Σ sign(X) ΔX with sign(0) = +1
        let mut n = 0.0;
        for k in 0..256 {
            let s = if x.row(k)[0] >= 0.0 { 1.0 } else { -1.0 };
            n += s * (x.row(k + 1)[0] - x.row(k)[0]);
            assert!((rd.n_values()[k + 1] - n).abs() < 1e-12);
        }
        assert!(rd.b().iter().all(|&b| (b - 1.0).abs() < 1e-15));
    }

    #[test]
    fn identity_in_the_plane_has_unit_clock_and_drift_two() {
        let (x, vol) = bm(2, 128, 4);
        let rd = radial_decompose(&x, &vol).unwrap();
        assert!(rd.ds().iter().all(|&h| (h - x.grid().dt()).abs() < 1e-15));
        assert!(rd.b().iter().all(|&b| (b - 2.0).abs() < 1e-12));
    }

    #[test]
    fn time_change_inverts_the_clock() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        // σ = diag(1 + x₀², 2)/…: state-dependent, bounds [1, 4]
        let f = Arc::new(|_t: f64, x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&[1.0 + 1.0 / (1.0 + x[0] * x[0]), 0.0, 0.0, 1.5]);
        });
        let vol = VolatilitySpec::custom(2, 2, f, VolBounds::new(1.0, 4.0).unwrap()).unwrap();
        let x = simulate_additive(&grid, &[0.0, 0.0], &DriftSpec::zero(), &vol, &mut RngStream::new(5, 0)).unwrap();
        let rd = radial_decompose(&x, &vol).unwrap();
        assert!(rd.qvar().windows(2).all(|w| w[1] > w[0]));
        for k in [0usize, 7, 30, 64] {
            let s = rd.qvar()[k];
            assert!((rd.time_change(s) - grid.t(k)).abs() < 1e-12);
            assert!((rd.r_tilde(s) - rd.r()[k]).abs() < 1e-9);
        }
        assert!(rd.b().iter().all(|&b| (0.0..=2.0 * 4.0).contains(&b)));
    }

    #[test]
    fn vol_outside_declared_bounds_is_a_contract_error() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let f = Arc::new(|_t: f64, _x: &[f64], out: &mut [f64]| out[0] = 3.0);
        let vol = VolatilitySpec::custom(1, 1, f, VolBounds::new(1.0, 4.0).unwrap()).unwrap();
        let x = GridPath::new(grid, 1, vec![0.0; 9]).unwrap();
        assert!(matches!(radial_decompose(&x, &vol), Err(CoreError::ModelContract(_))));
        let g = Arc::new(|_t: f64, _x: &[f64], out: &mut [f64]| out[0] = 0.0);
        let flat = VolatilitySpec::custom(1, 1, g, VolBounds::new(0.0, 4.0).unwrap()).unwrap();
        assert!(matches!(radial_decompose(&x, &flat), Err(CoreError::TimeChange { step: 0 })));
    }

    #[test]
    fn besq_zero_dimension_is_absorbed_at_zero() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        for scheme in [BesqScheme::Milstein, BesqScheme::FullTruncationEuler] {
            let z = besq_simulate(&BesqParams::new(0.0).unwrap(), &grid, scheme, &mut RngStream::new(1, 0));
            assert!(z.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn besq_stays_nonnegative_for_small_dimensions() {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        for (i, delta) in [0.3, 0.9, 1.7].into_iter().enumerate() {
            for scheme in [BesqScheme::Milstein, BesqScheme::FullTruncationEuler] {
                let z = besq_simulate(&BesqParams::new(delta).unwrap(), &grid, scheme, &mut RngStream::new(i as u64, 1));
                assert!(z.values().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn besq_one_is_squared_brownian_motion() {
        // exact oracle: BESQ(1)_T = T·N(0,1)², P(Z ≤ z) = 2Φ(√(z/T)) − 1
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let p = BesqParams::new(1.0).unwrap();
        let ends: Vec<f64> = (0..4000)
            .map(|k| *besq_simulate(&p, &grid, BesqScheme::Milstein, &mut RngStream::new(6, k)).values().last().unwrap())
            .collect();
        let ks = ks_one_sample(&ends, |z| 2.0 * normal_cdf(math::sqrt(z.max(0.0) / 2.0)) - 1.0);
        assert!(!ks.rejects_at(0.01), "{ks:?}");
    }

    #[test]
    fn domination_parameters() {
        let b = VolBounds::new(1.0, 1.0).unwrap();
        assert!(BesqParams::for_domination(2.0, 2, b).is_ok());
        let err = BesqParams::for_domination(1.0, 2, b).unwrap_err();
        assert_eq!(err, CoreError::Domain("delta_B < dC/c = 2".into()));
        assert_eq!(min_dimension(3, VolBounds::new(0.5, 2.0).unwrap()).unwrap(), 12.0);
    }

    #[test]
    fn one_dimensional_coupling_is_identical_under_milstein() {
        let (x, vol) = bm(1, 1024, 7);
        let rd = radial_decompose(&x, &vol).unwrap();
        let p = BesqParams::new(1.0).unwrap();
        let rep = coupled_comparison(&rd, &p, BesqScheme::Milstein, default_tolerance(x.grid()));
        assert!(rep.max_abs_diff < 1e-12, "{}", rep.max_abs_diff);
        let fte = coupled_comparison(&rd, &p, BesqScheme::FullTruncationEuler, default_tolerance(x.grid()));
        assert!(fte.max_abs_diff < 10.0 * math::sqrt(x.grid().dt()));
    }

    #[test]
    fn strictly_larger_dimension_dominates() {
        for seed in 0..20 {
            let (x, vol) = bm(2, 512, 100 + seed);
            let rd = radial_decompose(&x, &vol).unwrap();
            let rep = coupled_comparison(&rd, &BesqParams::new(6.0).unwrap(), BesqScheme::Milstein, 1e-6);
            assert!(rep.max_excess <= 1e-6, "seed {seed}: {}", rep.max_excess);
        }
    }

    #[test]
    fn support_probability_limits_and_monotonicity() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let vol = VolatilitySpec::scaled_identity(1, 1.0).unwrap();
        let rng = RngStream::new(9, 0);
        let big = support_probability(&vol, &grid, 1e6, 200, &rng).unwrap();
        assert_eq!(big.grid.estimate, 1.0);
        assert!((big.bridge.estimate - 1.0).abs() < 1e-12);
        let est: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&e| support_probability(&vol, &grid, e, 2000, &rng).unwrap().grid.estimate)
            .collect();
        assert!(est[0] <= est[1] && est[1] <= est[2]);
        // the bridge correction only lowers the grid estimate
        let r = support_probability(&vol, &grid, 1.0, 2000, &rng).unwrap();
        assert!(r.bridge.estimate <= r.grid.estimate);
    }

    #[test]
    fn cfs_probe_preconditions_and_limits() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let fp = FernholzParams::new(vec![0.02; 3], 0.3, 1.0).unwrap();
        let model = Diffusion::new(DriftSpec::fernholz(fp), VolatilitySpec::scaled_identity(3, 0.2).unwrap()).unwrap();
        let prefix = model.sample_path(&grid, &[1.0, 1.0, 1.0], &mut RngStream::new(1, 0)).unwrap();
        let t = 24;
        let here = prefix.row(t).to_vec();
        let frozen = linear_target(&grid, t, &here, &here);
        let all = cfs_probe(&model, &prefix, t, &frozen, 1e9, 50, &RngStream::new(2, 0)).unwrap();
        assert_eq!(all.hits, 50);
        let far: Vec<f64> = here.iter().map(|x| x + 1.0).collect();
        let bad = linear_target(&grid, t, &far, &far);
        assert!(matches!(cfs_probe(&model, &prefix, t, &bad, 0.05, 10, &RngStream::new(2, 0)), Err(CoreError::Precondition(_))));
        // a ramp toward the boundary of O(δ) is still charged
        let region = DiversityRegion::new(0.3, 3).unwrap();
        let mut to = here.clone();
        to[0] *= 1.15;
        assert!(region.contains(&to));
        let ramp = linear_target(&grid, t, &here, &to);
        let r = cfs_probe(&model, &prefix, t, &ramp, 0.2, 4000, &RngStream::new(3, 0)).unwrap();
        assert!(r.estimate.excludes_zero(), "{r:?}");
        let stay = cfs_probe(&model, &prefix, t, &frozen, 0.2, 4000, &RngStream::new(3, 0)).unwrap();
        assert!(stay.hits > r.hits);
    }
}
