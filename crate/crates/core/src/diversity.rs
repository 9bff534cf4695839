//! Market weights, diversity verdicts and portfolio value dynamics.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{domain, CoreError, CoreResult};
use crate::grid::{MarketPath, TimeGrid};
use crate::math;
use crate::stats::{self, Interval};

/// Market weights `μ_i = S_i / Σ_j S_j` on every grid row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPath {
    grid: TimeGrid,
    n: usize,
    weights: Vec<f64>,
}

impl WeightPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.n)
    }

    /// `μ_(1)(t_k)` for every `k`.
    pub fn max_weights(&self) -> Vec<f64> {
        self.rows().map(max_of).collect()
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn weights_of(prices: &[f64]) -> Vec<f64> {
    let total: f64 = prices.iter().sum();
    prices.iter().map(|p| p / total).collect()
}

pub fn market_weights(path: &MarketPath) -> WeightPath {
    let weights = path.rows().flat_map(weights_of).collect();
    WeightPath {
        grid: *path.grid(),
        n: path.n_assets(),
        weights,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityVerdict {
    pub diverse: bool,
    pub weak_diverse: bool,
    pub max_weight_sup: f64,
    /// Trapezoid time average of `μ_(1)`.
    pub weight_avg: f64,
    pub delta_tested: f64,
    /// Grid points with `μ_(1) ≥ 1 − δ`.
    pub violation_count: usize,
}

pub fn diversity_verdict(weights: &WeightPath, delta: f64) -> CoreResult<DiversityVerdict> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain("delta must lie in (0, 1)"));
    }
    let bound = 1.0 - delta;
    let tops = weights.max_weights();
    let sup = max_of(&tops);
    let steps = weights.grid.steps();
    let inner: f64 = tops[1..steps].iter().sum();
    let trapezoid = (0.5 * (tops[0] + tops[steps]) + inner) / steps as f64;
    // rounding must not lift the average above the sup
    let weight_avg = trapezoid.min(sup);
    Ok(DiversityVerdict {
        diverse: sup < bound,
        weak_diverse: weight_avg < bound,
        max_weight_sup: sup,
        weight_avg,
        delta_tested: delta,
        violation_count: tops.iter().filter(|&&m| m >= bound).count(),
    })
}

/// `(t_k, observed price rows 0..=k flattened, out)` writes `π(t_k)`.
pub type PortfolioFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Portfolio proportions, evaluated on the observed history only.
#[derive(Clone)]
pub enum PortfolioSpec {
    /// `π = μ`.
    Market,
    EqualWeight,
    Fixed(Vec<f64>),
    Custom(PortfolioFn),
}

impl fmt::Debug for PortfolioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortfolioSpec::Market => f.write_str("Market"),
            PortfolioSpec::EqualWeight => f.write_str("EqualWeight"),
            PortfolioSpec::Fixed(p) => f.debug_tuple("Fixed").field(p).finish(),
            PortfolioSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

const PROPORTION_TOL: f64 = 1e-12;

impl PortfolioSpec {
    fn eval(&self, t: f64, history: &[f64], n: usize, out: &mut [f64]) -> CoreResult<()> {
        match self {
            PortfolioSpec::Market => {
                let row = &history[history.len() - n..];
                let total: f64 = row.iter().sum();
                for (o, s) in out.iter_mut().zip(row) {
                    *o = s / total;
                }
                return Ok(());
            }
            PortfolioSpec::EqualWeight => {
                out.iter_mut().for_each(|x| *x = 1.0 / n as f64);
                return Ok(());
            }
            PortfolioSpec::Fixed(p) => {
                if p.len() != n {
                    return Err(domain("portfolio has wrong dimension"));
                }
                out.copy_from_slice(p);
            }
            PortfolioSpec::Custom(f) => f(t, history, out),
        }
        let total: f64 = out.iter().sum();
        if out.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > PROPORTION_TOL {
            return Err(CoreError::ModelContract(format!(
                "portfolio at t = {t} is not a long-only proportion vector (sum {total})"
            )));
        }
        Ok(())
    }
}

/// Value path under per-step compounding
/// `V_{k+1} = V_k (1 + Σ_i π_i(t_k) (S_i(t_{k+1}) − S_i(t_k)) / S_i(t_k))`.
pub fn portfolio_value(path: &MarketPath, pi: &PortfolioSpec, z0: f64) -> CoreResult<Vec<f64>> {
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(domain("initial wealth must be positive"));
    }
    let n = path.n_assets();
    let grid = path.grid();
    let history = path.as_grid_path().values();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    values.push(z0);
    let mut v = z0;
    let mut weights = vec![0.0; n];
    for k in 0..grid.steps() {
        pi.eval(grid.t(k), &history[..(k + 1) * n], n, &mut weights)?;
        let (now, next) = (path.row(k), path.row(k + 1));
        let ret: f64 = (0..n).map(|i| weights[i] * (next[i] - now[i]) / now[i]).sum();
        let factor = 1.0 + ret;
        if !(factor > 0.0) {
            return Err(CoreError::StepSize { step: k, factor });
        }
        v *= factor;
        values.push(v);
    }
    Ok(values)
}

/// Empirical comparison of two portfolios over an ensemble. This is
/// statistical evidence only and never establishes relative arbitrage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePerformance {
    pub paths: usize,
    /// `P(V^π(T) ≥ V^ρ(T))`.
    pub p_at_least: Interval,
    /// `P(V^π(T) > V^ρ(T))`.
    pub p_strictly: Interval,
    /// Mean of `log(V^π(T) / V^ρ(T))` with a normal 95% interval.
    pub mean_log_ratio: Interval,
}

impl RelativePerformance {
    pub const DISCLAIMER: &'static str =
        "empirical frequencies on finitely many simulated paths; not a proof of relative arbitrage";
}

pub fn relative_performance(
    paths: &[MarketPath],
    pi: &PortfolioSpec,
    rho: &PortfolioSpec,
    z0: f64,
) -> CoreResult<RelativePerformance> {
    if paths.is_empty() {
        return Err(domain("relative performance needs at least one path"));
    }
    let mut at_least = 0;
    let mut strictly = 0;
    let mut logs = Vec::with_capacity(paths.len());
    for p in paths {
        let a = *portfolio_value(p, pi, z0)?.last().expect("non-empty");
        let b = *portfolio_value(p, rho, z0)?.last().expect("non-empty");
        at_least += usize::from(a >= b);
        strictly += usize::from(a > b);
        logs.push(math::ln(a) - math::ln(b));
    }
    let m = stats::mean(&logs);
    let half = if logs.len() > 1 {
        stats::Z95 * stats::std_error(&logs)
    } else {
        f64::INFINITY
    };
    Ok(RelativePerformance {
        paths: paths.len(),
        p_at_least: stats::wilson(at_least, paths.len()),
        p_strictly: stats::wilson(strictly, paths.len()),
        mean_log_ratio: Interval {
            estimate: m,
            lo: m - half,
            hi: m + half,
        },
    })
}
