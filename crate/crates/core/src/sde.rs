//! Euler–Maruyama simulation of `d log S = γ dt + σ dW` and the built-in
//! market models.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{domain, precondition, CoreError, CoreResult};
use crate::grid::{GridPath, MarketPath, TimeGrid};
use crate::math;
use crate::region::DiversityRegion;
use crate::rng::RngStream;

/// Uniform ellipticity bounds `eps_lo·|ξ|² ≤ |σᵀξ|² ≤ m_hi·|ξ|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolBounds {
    pub eps_lo: f64,
    pub m_hi: f64,
}

impl VolBounds {
    pub fn new(eps_lo: f64, m_hi: f64) -> CoreResult<Self> {
        if !(eps_lo >= 0.0 && m_hi > 0.0 && eps_lo <= m_hi && m_hi.is_finite()) {
            return Err(domain("volatility bounds need 0 <= eps_lo <= m_hi < inf"));
        }
        Ok(Self { eps_lo, m_hi })
    }

    /// Extreme eigenvalues of `σσᵀ` for a row-major `n × d` matrix.
    pub fn from_matrix(matrix: &[f64], n: usize, d: usize) -> CoreResult<Self> {
        if n == 0 || d == 0 || matrix.len() != n * d {
            return Err(domain("volatility matrix must be n x d"));
        }
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..d).map(|k| matrix[i * d + k] * matrix[j * d + k]).sum();
            }
        }
        let ev = crate::linalg::symmetric_eigenvalues(&a, n);
        let top = ev[n - 1];
        let lo = ev[0].max(0.0);
        // eigenvalues carry rounding of order ε·|a|
        let pad = 1e-14 * top;
        Self::new((lo - pad).max(0.0), (top + pad).max(f64::MIN_POSITIVE))
    }
}

pub type VolFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum VolKind {
    /// Row-major `n × d` matrix.
    Constant(Vec<f64>),
    /// Diagonal `σ_ii` with `d = n`.
    Diagonal(Vec<f64>),
    /// `(t, state, out)` writes the row-major `n × d` matrix into `out`.
    Custom(VolFn),
}

impl fmt::Debug for VolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolKind::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            VolKind::Diagonal(d) => f.debug_tuple("Diagonal").field(d).finish(),
            VolKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Volatility `σ(t, state)` with dimensions and ellipticity bounds.
#[derive(Debug, Clone)]
pub struct VolatilitySpec {
    n: usize,
    d: usize,
    kind: VolKind,
    bounds: VolBounds,
}

const BOUND_CHECK_SAMPLES: usize = 1000;
const BOUND_CHECK_SEED: u64 = 0x0b0d_5eed;

impl VolatilitySpec {
    /// Constant `n × d` volatility, checked against `bounds` on 10³ random
    /// unit vectors.
    pub fn constant(n: usize, d: usize, matrix: Vec<f64>, bounds: VolBounds) -> CoreResult<Self> {
        if n == 0 || d == 0 || matrix.len() != n * d {
            return Err(domain("volatility matrix must be n x d"));
        }
        let spec = Self {
            n,
            d,
            kind: VolKind::Constant(matrix),
            bounds,
        };
        spec.check_bounds_at(0.0, &vec![0.0; n], &mut RngStream::new(BOUND_CHECK_SEED, 0), BOUND_CHECK_SAMPLES)?;
        Ok(spec)
    }

    pub fn diagonal(diag: Vec<f64>, bounds: VolBounds) -> CoreResult<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(domain("empty volatility diagonal"));
        }
        let spec = Self {
            n,
            d: n,
            kind: VolKind::Diagonal(diag),
            bounds,
        };
        spec.check_bounds_at(0.0, &vec![0.0; n], &mut RngStream::new(BOUND_CHECK_SEED, 0), BOUND_CHECK_SAMPLES)?;
        Ok(spec)
    }

    /// `scale · I_n`, with bounds `scale²`.
    pub fn scaled_identity(n: usize, scale: f64) -> CoreResult<Self> {
        let s2 = scale * scale;
        Self::diagonal(vec![scale; n], VolBounds::new(s2, s2.max(f64::MIN_POSITIVE))?)
    }

    /// State-dependent volatility; bounds are trusted and can be spot-checked
    /// with [`VolatilitySpec::check_bounds_at`].
    pub fn custom(n: usize, d: usize, f: VolFn, bounds: VolBounds) -> CoreResult<Self> {
        if n == 0 || d == 0 {
            return Err(domain("volatility dimensions must be positive"));
        }
        Ok(Self {
            n,
            d,
            kind: VolKind::Custom(f),
            bounds,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bounds(&self) -> VolBounds {
        self.bounds
    }

    pub fn kind(&self) -> &VolKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            VolKind::Constant(m) => m.iter().all(|&x| x == 0.0),
            VolKind::Diagonal(v) => v.iter().all(|&x| x == 0.0),
            VolKind::Custom(_) => false,
        }
    }

    /// Writes `σ(t, state)` (row-major `n × d`) into `out`.
    pub fn eval(&self, t: f64, state: &[f64], out: &mut [f64]) {
        match &self.kind {
            VolKind::Constant(m) => out.copy_from_slice(m),
            VolKind::Diagonal(v) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                for (i, s) in v.iter().enumerate() {
                    out[i * self.d + i] = *s;
                }
            }
            VolKind::Custom(f) => f(t, state, out),
        }
    }

    /// Verifies the ellipticity bounds at `(t, state)` on random unit `ξ`.
    pub fn check_bounds_at(&self, t: f64, state: &[f64], rng: &mut RngStream, samples: usize) -> CoreResult<()> {
        let mut sigma = vec![0.0; self.n * self.d];
        self.eval(t, state, &mut sigma);
        let mut xi = vec![0.0; self.n];
        let tol = 1e-12;
        for _ in 0..samples {
            rng.fill_normal(&mut xi);
            let len = math::norm(&xi);
            if len == 0.0 {
                continue;
            }
            xi.iter_mut().for_each(|x| *x /= len);
            let q: f64 = (0..self.d)
                .map(|nu| {
                    let c: f64 = (0..self.n).map(|i| sigma[i * self.d + nu] * xi[i]).sum();
                    c * c
                })
                .sum();
            if q < self.bounds.eps_lo * (1.0 - tol) - tol || q > self.bounds.m_hi * (1.0 + tol) + tol {
                return Err(CoreError::ModelContract(format!(
                    "|sigma^T xi|^2 = {q} outside [{}, {}]",
                    self.bounds.eps_lo, self.bounds.m_hi
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the Fernholz diverse drift.
#[derive(Debug, Clone, PartialEq)]
pub struct FernholzParams {
    g: Vec<f64>,
    delta: f64,
    m: f64,
}

impl FernholzParams {
    pub fn new(g: Vec<f64>, delta: f64, m: f64) -> CoreResult<Self> {
        let n = g.len();
        if n == 0 {
            return Err(domain("g must be non-empty"));
        }
        if g.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(domain("every g_i must be positive"));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(domain("M must be positive"));
        }
        let region = DiversityRegion::new(delta, n)?;
        if region.is_empty() {
            return Err(domain(format!("O(delta) is empty: 1 - delta = {} <= 1/n", 1.0 - delta)));
        }
        Ok(Self { g, delta, m })
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn region(&self) -> DiversityRegion {
        DiversityRegion::new(self.delta, self.n()).expect("validated in new")
    }
}

/// Index of the first maximal coordinate, i.e. the `i` with `x ∈ O_i`.
pub fn leading_index(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Fernholz drift: `g_i` off the leader, `M / (δ (log μ_(1) − log(1−δ)))`
/// for the leader.
pub fn fernholz_drift(params: &FernholzParams, mu: &[f64]) -> CoreResult<Vec<f64>> {
    if mu.len() != params.n() {
        return Err(domain("weight vector has wrong dimension"));
    }
    let lead = leading_index(mu);
    let top = mu[lead];
    let bound = 1.0 - params.delta;
    if !(top < bound) {
        return Err(CoreError::Singularity {
            max_weight: top,
            bound,
        });
    }
    let mut out = params.g.clone();
    out[lead] = params.m / (params.delta * (math::ln(top) - math::ln(bound)));
    Ok(out)
}

#[derive(Clone)]
pub enum DriftKind {
    Zero,
    Constant(Vec<f64>),
    /// Fernholz drift evaluated on current weights; after each step a state
    /// with `μ_(1) ≥ 1 − δ − guard` is rescaled back onto `μ_(1) = 1 − δ − guard`.
    Fernholz { params: FernholzParams, guard: f64 },
    /// `−½ a_ii`: makes the price a driftless stochastic exponential.
    ItoCorrection,
    /// `(t, state, out)`.
    Custom(DriftFn),
}

impl fmt::Debug for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftKind::Zero => f.write_str("Zero"),
            DriftKind::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            DriftKind::Fernholz { params, guard } => f
                .debug_struct("Fernholz")
                .field("params", params)
                .field("guard", guard)
                .finish(),
            DriftKind::ItoCorrection => f.write_str("ItoCorrection"),
            DriftKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Componentwise cap `|γ_i| ≤ clamp_bound`.
    pub clamp_bound: Option<f64>,
}

pub const DEFAULT_DRIFT_CAP: f64 = 1e3;
pub const DEFAULT_REFLECTION_GUARD: f64 = 1e-6;

impl DriftSpec {
    pub fn zero() -> Self {
        Self {
            kind: DriftKind::Zero,
            clamp_bound: None,
        }
    }

    pub fn constant(c: Vec<f64>) -> Self {
        Self {
            kind: DriftKind::Constant(c),
            clamp_bound: None,
        }
    }

    pub fn ito_correction() -> Self {
        Self {
            kind: DriftKind::ItoCorrection,
            clamp_bound: None,
        }
    }

    /// Fernholz drift with the default cap `10³` and guard `10⁻⁶`.
    pub fn fernholz(params: FernholzParams) -> Self {
        Self {
            kind: DriftKind::Fernholz {
                params,
                guard: DEFAULT_REFLECTION_GUARD,
            },
            clamp_bound: Some(DEFAULT_DRIFT_CAP),
        }
    }

    pub fn custom(f: DriftFn, clamp_bound: Option<f64>) -> Self {
        Self {
            kind: DriftKind::Custom(f),
            clamp_bound,
        }
    }

    fn eval(&self, t: f64, log_state: &[f64], sigma: &[f64], d: usize, out: &mut [f64]) {
        match &self.kind {
            DriftKind::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            DriftKind::Constant(c) => out.copy_from_slice(c),
            DriftKind::Fernholz { params, .. } => {
                let mut prices: Vec<f64> = log_state.iter().map(|&x| math::exp(x)).collect();
                let total: f64 = prices.iter().sum();
                prices.iter_mut().for_each(|p| *p /= total);
                let lead = leading_index(&prices);
                let top = prices[lead];
                let bound = 1.0 - params.delta;
                out.copy_from_slice(&params.g);
                out[lead] = if top < bound {
                    params.m / (params.delta * (math::ln(top) - math::ln(bound)))
                } else {
                    f64::NEG_INFINITY
                };
            }
            DriftKind::ItoCorrection => {
                for (i, o) in out.iter_mut().enumerate() {
                    let a_ii: f64 = sigma[i * d..(i + 1) * d].iter().map(|s| s * s).sum();
                    *o = -0.5 * a_ii;
                }
            }
            DriftKind::Custom(f) => f(t, log_state, out),
        }
        if let Some(cap) = self.clamp_bound {
            out.iter_mut().for_each(|x| *x = x.clamp(-cap, cap));
        }
    }

    fn reflection(&self) -> Option<(f64, f64)> {
        match &self.kind {
            DriftKind::Fernholz { params, guard } => Some((1.0 - params.delta - guard, *guard)),
            _ => None,
        }
    }
}

/// Diagnostics collected while stepping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    /// Post-step states pushed back onto `μ_(1) = 1 − δ − guard`.
    pub reflections: usize,
}

/// A simulated stretch of a price path starting at an arbitrary time.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub n: usize,
    /// `times[0]` is the start time, later entries are grid times.
    pub times: Vec<f64>,
    /// Row-major prices, one row per time.
    pub prices: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.prices[i * self.n..(i + 1) * self.n]
    }
}

/// Times of a continuation from `t0`: `t0` followed by the grid times after it.
pub fn continuation_times(grid: &TimeGrid, t0: f64) -> Vec<f64> {
    let mut times = vec![t0];
    let first = grid.next_index_after(t0);
    let tiny = 1e-12 * grid.dt();
    for k in first..=grid.steps() {
        let t = grid.t(k);
        if t - t0 > tiny {
            times.push(t);
        }
    }
    times
}

/// A Markov price model that can be restarted from any `(t, S)`.
pub trait MarketModel {
    fn n_assets(&self) -> usize;

    /// Simulates from price `s0` at time `t0` through the grid times after `t0`.
    fn continuation(&self, grid: &TimeGrid, t0: f64, s0: &[f64], rng: &mut RngStream) -> CoreResult<Segment>;

    /// Full path from `t = 0`.
    fn sample_path(&self, grid: &TimeGrid, s0: &[f64], rng: &mut RngStream) -> CoreResult<MarketPath> {
        let seg = self.continuation(grid, 0.0, s0, rng)?;
        MarketPath::new(*grid, self.n_assets(), seg.prices)
    }
}

/// Euler–Maruyama log-price diffusion.
#[derive(Debug, Clone)]
pub struct Diffusion {
    pub drift: DriftSpec,
    pub vol: VolatilitySpec,
}

impl Diffusion {
    pub fn new(drift: DriftSpec, vol: VolatilitySpec) -> CoreResult<Self> {
        let n = vol.n();
        let ok = match &drift.kind {
            DriftKind::Constant(c) => c.len() == n,
            DriftKind::Fernholz { params, guard } => params.n() == n && *guard > 0.0,
            _ => true,
        };
        if !ok {
            return Err(domain("drift and volatility dimensions differ"));
        }
        Ok(Self { drift, vol })
    }

    fn step_log(
        &self,
        times: &[f64],
        log0: &[f64],
        rng: &mut RngStream,
        stats: &mut StepStats,
    ) -> CoreResult<Vec<f64>> {
        let n = self.vol.n();
        let d = self.vol.d();
        let mut out = Vec::with_capacity(times.len() * n);
        out.extend_from_slice(log0);
        let mut state = log0.to_vec();
        let mut sigma = vec![0.0; n * d];
        let mut gamma = vec![0.0; n];
        let mut dw = vec![0.0; d];
        let zero_vol = self.vol.is_zero();
        let reflect = self.drift.reflection();
        for k in 1..times.len() {
            let t = times[k - 1];
            let dt = times[k] - t;
            self.vol.eval(t, &state, &mut sigma);
            self.drift.eval(t, &state, &sigma, d, &mut gamma);
            if !zero_vol {
                let sq = math::sqrt(dt);
                for w in dw.iter_mut() {
                    *w = sq * rng.normal();
                }
            }
            for i in 0..n {
                let mut x = state[i] + gamma[i] * dt;
                if !zero_vol {
                    x += sigma[i * d..(i + 1) * d].iter().zip(&dw).map(|(s, w)| s * w).sum::<f64>();
                }
                state[i] = x;
            }
            if let Some((target, _)) = reflect {
                if reflect_log_state(&mut state, target) {
                    stats.reflections += 1;
                }
            }
            if state.iter().any(|x| !x.is_finite() || x.abs() > 700.0) {
                return Err(CoreError::Diverged { step: k });
            }
            out.extend_from_slice(&state);
        }
        Ok(out)
    }

    /// Continuation together with step diagnostics.
    pub fn continuation_with_stats(
        &self,
        grid: &TimeGrid,
        t0: f64,
        s0: &[f64],
        rng: &mut RngStream,
    ) -> CoreResult<(Segment, StepStats)> {
        let n = self.vol.n();
        if s0.len() != n {
            return Err(domain("initial price has wrong dimension"));
        }
        if s0.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(precondition("initial prices must be strictly positive"));
        }
        if let DriftKind::Fernholz { params, .. } = &self.drift.kind {
            if !params.region().contains(s0) {
                return Err(precondition("Fernholz model must start inside O(delta)"));
            }
        }
        let times = continuation_times(grid, t0);
        let log0: Vec<f64> = s0.iter().map(|&x| math::ln(x)).collect();
        let mut stats = StepStats::default();
        let logs = self.step_log(&times, &log0, rng, &mut stats)?;
        let mut prices: Vec<f64> = logs.iter().map(|&x| math::exp(x)).collect();
        // keep the starting point bit-exact
        prices[..n].copy_from_slice(s0);
        Ok((Segment { n, times, prices }, stats))
    }
}

/// Rescales the leading coordinate so that its weight equals `target` when
/// it is at or above `target`. Returns whether a reflection happened.
fn reflect_log_state(log_state: &mut [f64], target: f64) -> bool {
    let prices: Vec<f64> = log_state.iter().map(|&x| math::exp(x)).collect();
    let total: f64 = prices.iter().sum();
    let lead = leading_index(&prices);
    if prices[lead] / total < target {
        return false;
    }
    let rest: f64 = prices.iter().enumerate().filter(|&(i, _)| i != lead).map(|(_, p)| p).sum();
    log_state[lead] = math::ln(target * rest / (1.0 - target));
    true
}

impl MarketModel for Diffusion {
    fn n_assets(&self) -> usize {
        self.vol.n()
    }

    fn continuation(&self, grid: &TimeGrid, t0: f64, s0: &[f64], rng: &mut RngStream) -> CoreResult<Segment> {
        self.continuation_with_stats(grid, t0, s0, rng).map(|(s, _)| s)
    }
}

/// Euler–Maruyama on the log scale from `t = 0`.
pub fn simulate(
    grid: &TimeGrid,
    s0: &[f64],
    drift: &DriftSpec,
    vol: &VolatilitySpec,
    rng: &mut RngStream,
) -> CoreResult<MarketPath> {
    simulate_with_stats(grid, s0, drift, vol, rng).map(|(p, _)| p)
}

pub fn simulate_with_stats(
    grid: &TimeGrid,
    s0: &[f64],
    drift: &DriftSpec,
    vol: &VolatilitySpec,
    rng: &mut RngStream,
) -> CoreResult<(MarketPath, StepStats)> {
    let model = Diffusion::new(drift.clone(), vol.clone())?;
    let (seg, stats) = model.continuation_with_stats(grid, 0.0, s0, rng)?;
    Ok((MarketPath::new(*grid, vol.n(), seg.prices)?, stats))
}

/// Euler–Maruyama for `dX = γ dt + σ dW` in `ℝⁿ` (no log transform).
pub fn simulate_additive(
    grid: &TimeGrid,
    x0: &[f64],
    drift: &DriftSpec,
    vol: &VolatilitySpec,
    rng: &mut RngStream,
) -> CoreResult<GridPath> {
    if x0.len() != vol.n() {
        return Err(domain("initial state has wrong dimension"));
    }
    if matches!(drift.kind, DriftKind::Fernholz { .. }) {
        return Err(domain("Fernholz drift is defined on the log scale only"));
    }
    let model = Diffusion::new(drift.clone(), vol.clone())?;
    let times: Vec<f64> = grid.times().collect();
    let mut stats = StepStats::default();
    let values = model.step_log(&times, x0, rng, &mut stats)?;
    GridPath::new(*grid, vol.n(), values)
}

/// `S₁ = exp W₁`, `S₂ = exp(W₁ + arctan W₂)` for a planar Brownian motion `W`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArctanMarket;

impl ArctanMarket {
    fn prices(w1: f64, w2: f64) -> [f64; 2] {
        [math::exp(w1), math::exp(w1 + math::atan(w2))]
    }
}

impl MarketModel for ArctanMarket {
    fn n_assets(&self) -> usize {
        2
    }

    fn continuation(&self, grid: &TimeGrid, t0: f64, s0: &[f64], rng: &mut RngStream) -> CoreResult<Segment> {
        if s0.len() != 2 || s0.iter().any(|&x| !(x > 0.0)) {
            return Err(precondition("arctan market needs two positive prices"));
        }
        let mut w1 = math::ln(s0[0]);
        let spread = math::ln(s0[1]) - w1;
        if !(spread.abs() < core::f64::consts::FRAC_PI_2) {
            return Err(precondition("log S2 - log S1 must lie in (-pi/2, pi/2)"));
        }
        let mut w2 = math::tan(spread);
        let times = continuation_times(grid, t0);
        let mut prices = Vec::with_capacity(2 * times.len());
        prices.extend_from_slice(s0);
        for k in 1..times.len() {
            let sq = math::sqrt(times[k] - times[k - 1]);
            w1 += sq * rng.normal();
            w2 += sq * rng.normal();
            prices.extend_from_slice(&Self::prices(w1, w2));
        }
        Ok(Segment { n: 2, times, prices })
    }
}

/// The arctan two-asset market started from `S(0) = (1, 1)`.
pub fn arctan_market(grid: &TimeGrid, rng: &mut RngStream) -> MarketPath {
    ArctanMarket
        .sample_path(grid, &[1.0, 1.0], rng)
        .expect("arctan market from (1, 1) is always valid")
}

const EXTENSION_STREAM: u64 = 0x4558_5445_4e44;

/// Number of whole steps of size `dt` in `extra`.
fn extension_steps(grid: &TimeGrid, extra: f64) -> CoreResult<usize> {
    if !(extra >= 0.0 && extra.is_finite()) {
        return Err(domain("extension length must be non-negative"));
    }
    let dt = grid.dt();
    let m = math::round(extra / dt);
    if (m * dt - extra).abs() > 1e-9 * dt * m.max(1.0) {
        return Err(domain("extension length must be a multiple of the step size"));
    }
    Ok(m as usize)
}

/// Extends `X` beyond its horizon by `c′·B_{t−T} + X_T` with an independent
/// Brownian motion `B`. `c′²` must lie within the volatility bounds.
pub fn extend_additive(
    path: &GridPath,
    extra: f64,
    c_prime: f64,
    bounds: VolBounds,
    rng: &RngStream,
) -> CoreResult<GridPath> {
    let c2 = c_prime * c_prime;
    if !(c_prime >= 0.0 && c2 >= bounds.eps_lo && c2 <= bounds.m_hi) {
        return Err(precondition(format!(
            "c' = {c_prime} violates the volatility bounds [{}, {}]",
            bounds.eps_lo, bounds.m_hi
        )));
    }
    let m = extension_steps(path.grid(), extra)?;
    if m == 0 {
        return Ok(path.clone());
    }
    let dim = path.dim();
    let sq = math::sqrt(path.grid().dt());
    let mut rng = rng.substream(EXTENSION_STREAM);
    let mut state = path.row(path.grid().steps()).to_vec();
    let mut extra_rows = Vec::with_capacity(m * dim);
    for _ in 0..m {
        for x in state.iter_mut() {
            *x += c_prime * sq * rng.normal();
        }
        extra_rows.extend_from_slice(&state);
    }
    path.append_rows(&extra_rows)
}

/// [`extend_additive`] applied on the log scale of a price path.
pub fn extend_path(
    path: &MarketPath,
    extra: f64,
    c_prime: f64,
    bounds: VolBounds,
    rng: &RngStream,
) -> CoreResult<MarketPath> {
    let logs = path.log_price();
    let extended = extend_additive(&logs, extra, c_prime, bounds, rng)?;
    if extended.grid().steps() == path.grid().steps() {
        return Ok(path.clone());
    }
    let mut values: Vec<f64> = extended.values().iter().map(|&x| math::exp(x)).collect();
    let head = path.as_grid_path().values().len();
    values[..head].copy_from_slice(path.as_grid_path().values());
    MarketPath::new(*extended.grid(), path.n_assets(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use approx::assert_relative_eq;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    #[test]
    fn fernholz_drift_reference_value() {
        let p = FernholzParams::new(vec![0.1, 0.05], 0.2, 1.0).unwrap();
        let g = fernholz_drift(&p, &[0.6, 0.4]).unwrap();
        let expected = 1.0 / (0.2 * (0.6f64.ln() - 0.8f64.ln()));
        assert_relative_eq!(g[0], expected, max_relative = 1e-12);
        assert!((g[0] + 17.381).abs() < 1e-3);
        assert_eq!(g[1], 0.05);
    }

    #[test]
    fn fernholz_ties_go_to_lowest_index() {
        let p = FernholzParams::new(vec![0.1, 0.2, 0.3], 0.3, 1.0).unwrap();
        let third = 1.0 / 3.0;
        let g = fernholz_drift(&p, &[third, third, third]).unwrap();
        assert!(g[0] < 0.0);
        assert_eq!(&g[1..], &[0.2, 0.3]);
        let g = fernholz_drift(&p, &[0.2, 0.4, 0.4]).unwrap();
        assert!(g[1] < 0.0);
        assert_eq!(g[2], 0.3);
    }

    #[test]
    fn fernholz_pole() {
        let p = FernholzParams::new(vec![0.1, 0.1], 0.2, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for top in [0.6, 0.7, 0.75, 0.79, 0.799, 0.7999] {
            let g = fernholz_drift(&p, &[top, 1.0 - top]).unwrap();
            assert!(g[0] < last);
            last = g[0];
        }
        assert!(last < -1e3);
        assert!(matches!(
            fernholz_drift(&p, &[0.8, 0.2]),
            Err(CoreError::Singularity { .. })
        ));
    }

    #[test]
    fn fernholz_params_validation() {
        assert!(FernholzParams::new(vec![0.1, -0.1], 0.2, 1.0).is_err());
        assert!(FernholzParams::new(vec![0.1, 0.1], 0.5, 1.0).is_err());
        assert!(FernholzParams::new(vec![0.1, 0.1], 0.2, 0.0).is_err());
    }

    #[test]
    fn zero_dynamics_constant_path() {
        let vol = VolatilitySpec::constant(2, 2, vec![0.0; 4], VolBounds::new(0.0, 1.0).unwrap()).unwrap();
        let p = simulate(&grid(1.0, 10), &[1.5, 2.5], &DriftSpec::zero(), &vol, &mut RngStream::new(1, 0)).unwrap();
        for row in p.rows() {
            assert_eq!(row, &[1.5, 2.5]);
        }
    }

    #[test]
    fn constant_drift_is_exact_exponential() {
        let vol = VolatilitySpec::constant(1, 1, vec![0.0], VolBounds::new(0.0, 1.0).unwrap()).unwrap();
        let g = grid(2.0, 8);
        let p = simulate(&g, &[3.0], &DriftSpec::constant(vec![0.3]), &vol, &mut RngStream::new(1, 0)).unwrap();
        for (k, x) in p.log_price().values().iter().enumerate() {
            assert_relative_eq!(*x, 3f64.ln() + 0.3 * g.t(k), max_relative = 1e-13);
        }
    }

    #[test]
    fn brownian_log_moments() {
        let g = grid(1.0, 4);
        let vol = VolatilitySpec::scaled_identity(1, 1.0).unwrap();
        let root = RngStream::new(2024, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let p = simulate(&g, &[1.0], &DriftSpec::zero(), &vol, &mut root.substream(i)).unwrap();
                p.row(4)[0].ln()
            })
            .collect();
        let m = stats::mean(&xs);
        assert!(m.abs() < 3.0 * (1.0 / n as f64).sqrt(), "mean {m}");
        let v = stats::variance(&xs);
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn halving_dt_keeps_terminal_law() {
        let vol = VolatilitySpec::scaled_identity(1, 1.0).unwrap();
        let sample = |steps: usize, seed: u64| -> Vec<f64> {
            let g = grid(1.0, steps);
            let root = RngStream::new(seed, 0);
            (0..10_000)
                .map(|i| simulate(&g, &[1.0], &DriftSpec::zero(), &vol, &mut root.substream(i)).unwrap().row(steps)[0].ln())
                .collect()
        };
        let r = stats::ks_two_sample(&sample(16, 1), &sample(32, 2));
        assert!(!r.rejects_at(0.01), "{r:?}");
    }

    #[test]
    fn paths_are_positive_and_reproducible() {
        let p = FernholzParams::new(vec![0.02; 3], 0.3, 0.04).unwrap();
        let vol = VolatilitySpec::scaled_identity(3, 0.2).unwrap();
        let drift = DriftSpec::fernholz(p);
        let g = grid(1.0, 256);
        let a = simulate(&g, &[1.0, 1.0, 1.0], &drift, &vol, &mut RngStream::new(5, 9)).unwrap();
        let b = simulate(&g, &[1.0, 1.0, 1.0], &drift, &vol, &mut RngStream::new(5, 9)).unwrap();
        assert!(a.as_grid_path().values().iter().all(|&x| x > 0.0));
        let bits = |p: &MarketPath| p.as_grid_path().values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn fernholz_reflection_keeps_weights_below_bound() {
        // a non-leader pushed hard overshoots the barrier in one step
        let p = FernholzParams::new(vec![0.01, 120.0], 0.3, 0.04).unwrap();
        let vol = VolatilitySpec::scaled_identity(2, 0.2).unwrap();
        let mut drift = DriftSpec::fernholz(p);
        drift.clamp_bound = Some(200.0);
        let g = grid(1.0, 64);
        let (path, stats) = simulate_with_stats(&g, &[1.0, 1.0], &drift, &vol, &mut RngStream::new(3, 0)).unwrap();
        assert!(stats.reflections > 0);
        for row in path.rows() {
            let top = row.iter().cloned().fold(0.0, f64::max) / row.iter().sum::<f64>();
            assert!(top < 0.7, "{top}");
        }
    }

    #[test]
    fn fernholz_drift_is_clamped() {
        let p = FernholzParams::new(vec![0.1, 0.1], 0.2, 1.0).unwrap();
        let spec = DriftSpec::fernholz(p);
        let mut out = [0.0; 2];
        let logs = [(0.7999999f64).ln(), (0.2000001f64).ln()];
        spec.eval(0.0, &logs, &[], 0, &mut out);
        assert_eq!(out[0], -DEFAULT_DRIFT_CAP);
    }

    #[test]
    fn divergence_reports_step() {
        let vol = VolatilitySpec::constant(1, 1, vec![0.0], VolBounds::new(0.0, 1.0).unwrap()).unwrap();
        let err = simulate(&grid(1.0, 10), &[1.0], &DriftSpec::constant(vec![3000.0]), &vol, &mut RngStream::new(1, 0)).unwrap_err();
        assert_eq!(err, CoreError::Diverged { step: 3 });
    }

    #[test]
    fn constant_vol_bounds_checked() {
        let m = vec![1.0, 0.0, 0.0, 0.1];
        assert!(VolatilitySpec::constant(2, 2, m.clone(), VolBounds::new(0.5, 1.0).unwrap()).is_err());
        assert!(VolatilitySpec::constant(2, 2, m, VolBounds::new(0.01, 1.0).unwrap()).is_ok());
    }

    #[test]
    fn arctan_market_bounds() {
        let g = grid(1.0, 500);
        let root = RngStream::new(8, 0);
        let cap = 1.0 / (1.0 + (-core::f64::consts::FRAC_PI_2).exp());
        for i in 0..50 {
            let p = arctan_market(&g, &mut root.substream(i));
            assert_eq!(p.row(0), &[1.0, 1.0]);
            for row in p.rows() {
                assert!((row[1].ln() - row[0].ln()).abs() < core::f64::consts::FRAC_PI_2);
                let top = row[0].max(row[1]) / (row[0] + row[1]);
                assert!(top < cap);
            }
        }
        assert!((cap - 0.82790).abs() < 1e-5);
    }

    #[test]
    fn continuation_from_fractional_time() {
        let g = grid(1.0, 4);
        let seg = ArctanMarket.continuation(&g, 0.3, &[1.0, 1.2], &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(seg.times, vec![0.3, 0.5, 0.75, 1.0]);
        assert_eq!(seg.point(0), &[1.0, 1.2]);
        let end = ArctanMarket.continuation(&g, 1.0, &[1.0, 1.2], &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(end.len(), 1);
    }

    #[test]
    fn extension() {
        let g = grid(1.0, 8);
        let p = arctan_market(&g, &mut RngStream::new(4, 0));
        let b = VolBounds::new(1.0, 1.0).unwrap();
        let rng = RngStream::new(4, 1);
        assert_eq!(extend_path(&p, 0.0, 1.0, b, &rng).unwrap(), p);
        assert!(matches!(extend_path(&p, 0.5, 0.0, b, &rng), Err(CoreError::Precondition(_))));
        assert!(extend_path(&p, 0.3, 1.0, b, &rng).is_err());
        let e = extend_path(&p, 0.5, 1.0, b, &rng).unwrap();
        assert_eq!(e.grid().steps(), 12);
        assert!((e.grid().horizon() - 1.5).abs() < 1e-15);
        assert_eq!(e.row(8), p.row(8));
        for k in 0..=8 {
            assert_eq!(e.row(k), p.row(k));
        }
        // the appended increments move both log prices by the same BM draw only
        // through independent coordinates
        assert_ne!(e.row(9), p.row(8));
    }
}
