use alloc::vec::Vec;

use crate::error::{domain, CoreResult};
use crate::grid::{MarketPath, TimeGrid};
use crate::region::{dist_to_complement, DiversityRegion};

/// Pointwise tube radius `min(η/(1+η)·min_i x_i, ½·dist(x, Oᶜ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonRule {
    eta: f64,
    region: DiversityRegion,
}

impl EpsilonRule {
    pub fn new(eta: f64, region: DiversityRegion) -> CoreResult<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(domain("eta must be positive"));
        }
        Ok(Self { eta, region })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn region(&self) -> &DiversityRegion {
        &self.region
    }

    pub fn base(&self, x: &[f64]) -> f64 {
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        self.eta / (1.0 + self.eta) * lo
    }

    /// Base radius clamped to half the distance to `Oᶜ`; errors outside `O`.
    pub fn clamped(&self, x: &[f64]) -> CoreResult<f64> {
        let d = dist_to_complement(x, &self.region)?;
        if d == 0.0 {
            return Err(domain("price left O(delta)"));
        }
        Ok(self.base(x).min(0.5 * d))
    }

    /// Lipschitz constant of the base rule in the path.
    pub fn base_lipschitz(&self) -> f64 {
        self.eta
    }

    /// Lipschitz constant after clamping.
    pub fn lipschitz(&self) -> f64 {
        self.eta.max(0.5)
    }
}

/// The tube radius along a path, with each transform kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonProcess {
    grid: TimeGrid,
    base: Vec<f64>,
    clamped: Vec<f64>,
    values: Vec<f64>,
}

pub fn build_epsilon(path: &MarketPath, eta: f64, region: &DiversityRegion) -> CoreResult<EpsilonProcess> {
    let rule = EpsilonRule::new(eta, *region)?;
    if region.n() != path.n_assets() {
        return Err(domain("region dimension differs from the path"));
    }
    let base: Vec<f64> = path.rows().map(|r| rule.base(r)).collect();
    let clamped = path.rows().map(|r| rule.clamped(r)).collect::<CoreResult<Vec<f64>>>()?;
    let values = running_min(&clamped);
    Ok(EpsilonProcess {
        grid: *path.grid(),
        base,
        clamped,
        values,
    })
}

pub(crate) fn running_min(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut m = f64::INFINITY;
    for &x in xs {
        m = m.min(x);
        out.push(m);
    }
    out
}

impl EpsilonProcess {
    /// A prescribed positive nonincreasing radius, used as all three stages.
    pub fn from_values(grid: TimeGrid, values: Vec<f64>) -> CoreResult<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(domain("one radius per grid point required"));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(domain("radii must be positive"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(domain("radii must be nonincreasing"));
        }
        Ok(Self {
            grid,
            base: values.clone(),
            clamped: values.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `η/(1+η)·min_i S_i(t_k)`.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Base radius after the boundary clamp.
    pub fn clamped(&self) -> &[f64] {
        &self.clamped
    }

    /// Final radius: running minimum of the clamped values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Linear interpolation at fractional grid position `pos = t/dt`.
    pub fn at_position(&self, pos: f64) -> f64 {
        let last = self.grid.steps();
        if pos >= last as f64 {
            return self.values[last];
        }
        let k = pos as usize;
        let s = pos - k as f64;
        self.values[k] + s * (self.values[k + 1] - self.values[k])
    }
}
