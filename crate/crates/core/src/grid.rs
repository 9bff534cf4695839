//! Time grids and discretized paths.

use alloc::vec::Vec;

use crate::error::{domain, CoreResult};
use crate::math;

/// Uniform grid `t_k = k·T/N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> CoreResult<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain("horizon must be positive and finite"));
        }
        if steps == 0 {
            return Err(domain("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Grid time `t_k`; `t_N` is the horizon exactly.
    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.t(k))
    }

    /// Index of the first grid point strictly after `t` (`N + 1` if none).
    pub fn next_index_after(&self, t: f64) -> usize {
        let raw = math::floor(t / self.dt()) as isize + 1;
        let mut k = raw.max(0) as usize;
        // guard against rounding in t/dt
        while k > 0 && k <= self.steps && self.t(k - 1) > t {
            k -= 1;
        }
        while k <= self.steps && self.t(k) <= t {
            k += 1;
        }
        k
    }
}

/// Real-valued path on a grid, stored row-major (`values[k*dim + i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> CoreResult<Self> {
        if dim == 0 {
            return Err(domain("path dimension must be positive"));
        }
        if values.len() != (grid.steps() + 1) * dim {
            return Err(domain("path length does not match grid"));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Appends `extra` rows on the same step size, returning a longer path.
    pub(crate) fn append_rows(&self, extra: &[f64]) -> CoreResult<GridPath> {
        let added = extra.len() / self.dim;
        let steps = self.grid.steps() + added;
        let horizon = self.grid.horizon() + added as f64 * self.grid.dt();
        let grid = TimeGrid::new(horizon, steps)?;
        let mut values = self.values.clone();
        values.extend_from_slice(extra);
        GridPath::new(grid, self.dim, values)
    }
}

/// Strictly positive price path `S_i(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath(GridPath);

impl MarketPath {
    pub fn new(grid: TimeGrid, n_assets: usize, prices: Vec<f64>) -> CoreResult<Self> {
        let path = GridPath::new(grid, n_assets, prices)?;
        if let Some(bad) = path.values.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(domain(alloc::format!(
                "price at flat index {bad} is not strictly positive and finite"
            )));
        }
        Ok(Self(path))
    }

    pub fn grid(&self) -> &TimeGrid {
        self.0.grid()
    }

    pub fn n_assets(&self) -> usize {
        self.0.dim()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        self.0.row(k)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.0.rows()
    }

    pub fn as_grid_path(&self) -> &GridPath {
        &self.0
    }

    /// Componentwise natural log.
    pub fn log_price(&self) -> GridPath {
        let values = self.0.values.iter().map(|&x| math::ln(x)).collect();
        GridPath {
            grid: self.0.grid,
            dim: self.0.dim,
            values,
        }
    }

    /// Componentwise exponential of a log-price path.
    pub fn price_from_log(logs: &GridPath) -> CoreResult<MarketPath> {
        let values = logs.values.iter().map(|&x| math::exp(x)).collect();
        MarketPath::new(logs.grid, logs.dim, values)
    }
}
