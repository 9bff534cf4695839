//! Experiment configuration: TOML schema and the fail-fast precondition sweep.

use std::path::Path;

use divcps_core::bessel::min_dimension;
use divcps_core::sde::VolBounds;
use divcps_core::DiversityRegion;
use serde::Deserialize;

use crate::error::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Diversity,
    Conditioned,
    Cps,
    Bessel,
    CfsProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Fernholz,
    Arctan,
    Conditioned,
    CustomConstantVol,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    pub n: Option<usize>,
    /// Diversity parameter of `O(δ)`.
    pub delta: Option<f64>,
    /// Fernholz drift rates.
    pub g: Option<Vec<f64>>,
    /// Fernholz singular-term scale.
    pub m: Option<f64>,
    /// Scalar volatility, `σ = sigma·I`.
    pub sigma: Option<f64>,
    /// Rows of a constant `n × d` volatility matrix.
    pub sigma_matrix: Option<Vec<Vec<f64>>>,
    /// Constant log drift for `custom-constant-vol`.
    pub gamma: Option<Vec<f64>>,
    pub s0: Option<Vec<f64>>,
    pub max_attempts: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Certificate,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Certificate]
}

fn default_csv_paths() -> usize {
    10
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Paths whose full series go to results.csv.
    #[serde(default = "default_csv_paths")]
    pub csv_paths: usize,
    /// Grid stride of those series.
    #[serde(default = "one")]
    pub csv_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
            csv_paths: default_csv_paths(),
            csv_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CpsMode {
    #[default]
    Tree,
    Paths,
    Nodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stopping {
    #[default]
    Interpolated,
    GridIndex,
}

fn half() -> f64 {
    0.5
}

fn fifty() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpsConfig {
    #[serde(default)]
    pub mode: CpsMode,
    pub eta: f64,
    #[serde(default)]
    pub depth: usize,
    #[serde(default)]
    pub branching: usize,
    #[serde(default = "half")]
    pub retirement_mass_floor: f64,
    #[serde(default)]
    pub budget_n: i32,
    #[serde(default = "fifty")]
    pub max_redraws: usize,
    #[serde(default)]
    pub stopping: Stopping,
    /// Random-node mode: child counts and dimensions.
    pub min_children: Option<usize>,
    pub max_children: Option<usize>,
    pub min_dim: Option<usize>,
    pub max_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BesselMode {
    #[default]
    Coupling,
    Marginals,
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Milstein,
    FullTruncationEuler,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselConfig {
    #[serde(default)]
    pub mode: BesselMode,
    pub delta_b: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    /// Comparison tolerance; defaults to `1e-6 + 10·dt`.
    pub tolerance: Option<f64>,
    pub eps: Option<f64>,
    pub record_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    #[default]
    Frozen,
    Ramp,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfsConfig {
    pub t_index: usize,
    pub eta_tube: f64,
    #[serde(default)]
    pub target: TargetKind,
    /// Ramp endpoints: number of random targets.
    pub targets: Option<usize>,
    /// Log-scale spread of the random ramp endpoints.
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityConfig {
    /// Tested diversity level; defaults to the model's `delta`.
    pub delta: Option<f64>,
    /// Compare the equal-weight portfolio with the market portfolio.
    #[serde(default)]
    pub compare_equal_weight: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub cps: Option<CpsConfig>,
    pub bessel: Option<BesselConfig>,
    pub cfs: Option<CfsConfig>,
    pub diversity: Option<DiversityConfig>,
}

/// Default arctan diversity parameter: `1 − δ` above `1/(1 + e^{−π/2})`.
pub const ARCTAN_DELTA: f64 = 0.15;

/// Largest weight the arctan market can reach.
pub fn arctan_weight_bound() -> f64 {
    1.0 / (1.0 + (-std::f64::consts::FRAC_PI_2).exp())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Validation(vec![format!("config: {}", e.message())]))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn n_assets(&self) -> usize {
        match self.model.kind {
            ModelKind::Arctan => 2,
            _ => self
                .model
                .n
                .or_else(|| self.model.s0.as_ref().map(Vec::len))
                .or_else(|| self.model.sigma_matrix.as_ref().map(Vec::len))
                .unwrap_or(0),
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self.model.kind {
            ModelKind::Arctan => Some(self.model.delta.unwrap_or(ARCTAN_DELTA)),
            _ => self.model.delta,
        }
    }

    pub fn s0(&self) -> Vec<f64> {
        match &self.model.s0 {
            Some(s) => s.clone(),
            None => vec![1.0; self.n_assets()],
        }
    }

    /// Row-major `n × d` volatility, its `d` and bounds.
    pub fn sigma(&self) -> Option<(Vec<f64>, usize)> {
        let n = self.n_assets();
        if let Some(rows) = &self.model.sigma_matrix {
            let d = rows.first().map_or(0, Vec::len);
            return Some((rows.iter().flatten().copied().collect(), d));
        }
        self.model.sigma.map(|s| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = s;
            }
            (m, n)
        })
    }

    pub fn vol_bounds(&self) -> Option<VolBounds> {
        if let Some(s) = self.model.sigma {
            return VolBounds::new(s * s, (s * s).max(f64::MIN_POSITIVE)).ok();
        }
        let (m, d) = self.sigma()?;
        VolBounds::from_matrix(&m, self.n_assets(), d).ok()
    }

    /// Every violated precondition; empty when the config is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = self.grid;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            v.push("grid: horizon must be positive".into());
        }
        if g.steps == 0 {
            v.push("grid: steps must be at least 1".into());
        }
        if self.monte_carlo.paths == 0 {
            v.push("monte_carlo: paths must be at least 1".into());
        }
        if self.output.csv_stride == 0 {
            v.push("output: csv_stride must be at least 1".into());
        }
        self.validate_model(&mut v);
        match self.kind {
            Kind::Simulate => {}
            Kind::Diversity => self.validate_diversity(&mut v),
            Kind::Conditioned => {
                if self.model.kind != ModelKind::Conditioned {
                    v.push("conditioned: model.type must be conditioned".into());
                }
            }
            Kind::Cps => self.validate_cps(&mut v),
            Kind::Bessel => self.validate_bessel(&mut v),
            Kind::CfsProbe => self.validate_cfs(&mut v),
        }
        v
    }

    fn region(&self, v: &mut Vec<String>) -> Option<DiversityRegion> {
        let n = self.n_assets();
        let delta = self.delta()?;
        if !(delta > 0.0 && delta < 1.0) {
            v.push(format!("model: delta = {delta} must lie in (0, 1)"));
            return None;
        }
        if n < 2 || 1.0 - delta <= 1.0 / n as f64 {
            v.push(format!("model: O(delta) empty: 1 - delta = {} <= 1/n = {}", 1.0 - delta, 1.0 / n.max(1) as f64));
            return None;
        }
        DiversityRegion::new(delta, n).ok()
    }

    fn validate_sigma(&self, v: &mut Vec<String>) {
        let n = self.n_assets();
        match (&self.model.sigma, &self.model.sigma_matrix) {
            (Some(_), Some(_)) => v.push("model: give sigma or sigma_matrix, not both".into()),
            (None, None) => v.push("model: sigma or sigma_matrix is required".into()),
            (Some(s), None) if !(s.is_finite() && *s >= 0.0) => v.push("model: sigma must be non-negative".into()),
            (None, Some(rows)) => {
                let d = rows.first().map_or(0, Vec::len);
                if rows.len() != n || d == 0 || rows.iter().any(|r| r.len() != d) {
                    v.push(format!("model: sigma_matrix must be {n} rows of equal positive length"));
                } else if rows.iter().flatten().any(|x| !x.is_finite()) {
                    v.push("model: sigma_matrix entries must be finite".into());
                }
            }
            _ => {}
        }
    }

    fn validate_model(&self, v: &mut Vec<String>) {
        let m = &self.model;
        let n = self.n_assets();
        if n == 0 {
            v.push("model: n is required".into());
            return;
        }
        if m.n.is_some_and(|k| k != n) || (m.kind == ModelKind::Arctan && m.n.is_some_and(|k| k != 2)) {
            v.push("model: arctan market has n = 2".into());
        }
        let s0 = self.s0();
        if s0.len() != n {
            v.push(format!("model: s0 must have {n} entries"));
        } else if s0.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            v.push("model: s0 must be positive".into());
        }
        match m.kind {
            ModelKind::Fernholz => {
                self.validate_sigma(v);
                match &m.g {
                    Some(g) if g.len() != n => v.push(format!("model: g must have {n} entries")),
                    Some(g) if g.iter().any(|&x| !(x >= 0.0 && x.is_finite())) => {
                        v.push("model: g must be non-negative".into())
                    }
                    None => v.push("model: g is required for fernholz".into()),
                    _ => {}
                }
                if !m.m.is_some_and(|x| x > 0.0 && x.is_finite()) {
                    v.push("model: m must be positive".into());
                }
                if m.delta.is_none() {
                    v.push("model: delta is required for fernholz".into());
                }
                self.check_start_in_region(v);
            }
            ModelKind::Conditioned => {
                self.validate_sigma(v);
                if m.delta.is_none() {
                    v.push("model: delta is required for conditioned".into());
                }
                if m.max_attempts == Some(0) {
                    v.push("model: max_attempts must be positive".into());
                }
                self.check_start_in_region(v);
            }
            ModelKind::Arctan => {
                if m.sigma.is_some() || m.sigma_matrix.is_some() || m.g.is_some() {
                    v.push("model: arctan market takes no sigma or g".into());
                }
                if s0.len() == 2 && s0.iter().all(|&x| x > 0.0) && (s0[1].ln() - s0[0].ln()).abs() >= std::f64::consts::FRAC_PI_2 {
                    v.push("model: arctan needs |log s0[1] - log s0[0]| < pi/2".into());
                }
                if let Some(r) = self.region(v) {
                    if r.weight_bound() <= arctan_weight_bound() && self.kind == Kind::Cps {
                        v.push(format!(
                            "model: arctan paths can leave O(delta): 1 - delta must exceed {:.5}",
                            arctan_weight_bound()
                        ));
                    }
                }
                self.check_start_in_region(v);
            }
            ModelKind::CustomConstantVol => {
                self.validate_sigma(v);
                if m.gamma.as_ref().is_some_and(|g| g.len() != n) {
                    v.push(format!("model: gamma must have {n} entries"));
                }
                if m.delta.is_some() {
                    self.check_start_in_region(v);
                }
            }
        }
    }

    fn check_start_in_region(&self, v: &mut Vec<String>) {
        let mut scratch = Vec::new();
        if let Some(r) = self.region(&mut scratch) {
            let s0 = self.s0();
            if s0.len() == r.n() && !r.contains(&s0) {
                v.push("model: s0 lies outside O(delta)".into());
            }
        }
        for e in scratch {
            if !v.contains(&e) {
                v.push(e);
            }
        }
    }

    fn validate_diversity(&self, v: &mut Vec<String>) {
        let d = self.diversity.as_ref().and_then(|d| d.delta).or(self.delta());
        match d {
            Some(d) if d > 0.0 && d < 1.0 => {}
            Some(d) => v.push(format!("diversity: delta = {d} must lie in (0, 1)")),
            None => v.push("diversity: delta is required".into()),
        }
    }

    fn validate_cps(&self, v: &mut Vec<String>) {
        let Some(c) = &self.cps else {
            v.push("cps: section [cps] is required".into());
            return;
        };
        if !(c.eta > 0.0 && c.eta.is_finite()) {
            v.push("cps: eta must be positive".into());
        }
        if !(c.retirement_mass_floor > 0.0 && c.retirement_mass_floor < 1.0) {
            v.push("cps: retirement_mass_floor must lie in (0, 1)".into());
        }
        match c.mode {
            CpsMode::Tree => {
                if c.branching < 2 {
                    v.push("cps: branching must be at least 2".into());
                }
                if self.monte_carlo.paths != 1 {
                    v.push("cps: tree mode builds one tree, set monte_carlo.paths = 1".into());
                }
                if self.model.kind == ModelKind::CustomConstantVol {
                    v.push("cps: trees need a positive market model (fernholz, arctan or conditioned)".into());
                }
                if self.delta().is_none() {
                    v.push("cps: model.delta is required".into());
                }
            }
            CpsMode::Paths => {
                if self.delta().is_none() {
                    v.push("cps: model.delta is required".into());
                }
                if self.model.kind == ModelKind::CustomConstantVol {
                    v.push("cps: paths mode needs a positive market model (fernholz, arctan or conditioned)".into());
                }
            }
            CpsMode::Nodes => {
                let (lo, hi) = (c.min_children.unwrap_or(2), c.max_children.unwrap_or(16));
                let (dlo, dhi) = (c.min_dim.unwrap_or(1), c.max_dim.unwrap_or(3));
                if lo < 2 || hi < lo {
                    v.push("cps: need 2 <= min_children <= max_children".into());
                }
                if dlo < 1 || dhi < dlo {
                    v.push("cps: need 1 <= min_dim <= max_dim".into());
                }
                if hi < dhi + 1 {
                    v.push("cps: max_children must exceed max_dim for the hull condition".into());
                }
            }
        }
    }

    fn validate_bessel(&self, v: &mut Vec<String>) {
        let Some(b) = &self.bessel else {
            v.push("bessel: section [bessel] is required".into());
            return;
        };
        if b.delta_b.is_some_and(|x| !(x >= 0.0 && x.is_finite())) {
            v.push("bessel: delta_B must be non-negative".into());
        }
        match b.mode {
            BesselMode::Coupling => {
                if self.model.kind != ModelKind::CustomConstantVol {
                    v.push("bessel: coupling needs model.type = custom-constant-vol".into());
                }
                match (b.delta_b, self.vol_bounds()) {
                    (None, _) => v.push("bessel: delta_b is required".into()),
                    (Some(db), Some(bounds)) => match min_dimension(self.n_assets(), bounds) {
                        Ok(need) if db < need * (1.0 - 1e-12) => {
                            // drop eigenvalue rounding from the reported constant
                            let shown = (need * 1e9).round() / 1e9;
                            v.push(format!("bessel: delta_B < dC/c = {shown}"))
                        }
                        Ok(_) => {}
                        Err(_) => v.push("bessel: volatility must be uniformly elliptic (c > 0)".into()),
                    },
                    (Some(_), None) => {}
                }
            }
            BesselMode::Marginals => {
                if b.delta_b.is_none() {
                    v.push("bessel: delta_b is required".into());
                }
                if let Some(ts) = &b.record_times {
                    if ts.iter().any(|&t| !(t > 0.0 && t <= self.grid.horizon)) {
                        v.push("bessel: record_times must lie in (0, T]".into());
                    }
                }
            }
            BesselMode::Support => {
                if self.model.kind != ModelKind::CustomConstantVol {
                    v.push("bessel: support needs model.type = custom-constant-vol".into());
                }
                if !b.eps.is_some_and(|e| e > 0.0) {
                    v.push("bessel: eps must be positive".into());
                }
            }
        }
    }

    fn validate_cfs(&self, v: &mut Vec<String>) {
        let Some(c) = &self.cfs else {
            v.push("cfs: section [cfs] is required".into());
            return;
        };
        if c.t_index > self.grid.steps {
            v.push("cfs: t_index beyond the grid".into());
        }
        if !(c.eta_tube > 0.0) {
            v.push("cfs: eta_tube must be positive".into());
        }
        if c.target == TargetKind::Ramp && c.targets == Some(0) {
            v.push("cfs: targets must be positive".into());
        }
        if c.target == TargetKind::Ramp && self.delta().is_none() {
            v.push("cfs: ramp targets need model.delta".into());
        }
    }
}
