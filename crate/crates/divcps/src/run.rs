//! Dispatch from a validated config to the core kernels.

mod bessel;
mod cps;

use std::path::{Path, PathBuf};

use divcps_core::conditioned::{sample_conditioned_counted, ConditionedSampler, GRID_CHECK_NOTE};
use divcps_core::diversity::{diversity_verdict, market_weights, portfolio_value, PortfolioSpec, RelativePerformance};
use divcps_core::sde::{ArctanMarket, Diffusion, DriftSpec, FernholzParams, MarketModel, VolBounds, VolatilitySpec};
use divcps_core::stats::{self, wilson, Interval};
use divcps_core::{bessel::linear_target, CoreError, DiversityRegion, MarketPath, RngStream, TimeGrid};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{arctan_weight_bound, ExperimentConfig, Kind, ModelKind, TargetKind};
use crate::error::{exit, RunError};
use crate::output::{self, Outcome, Row, SCHEMA_VERSION};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DIVCPS_THREADS";

/// Stream ids under the run seed. Path `k` of the main ensemble uses
/// `RngStream::new(seed, PATHS).substream(k)`.
pub(crate) mod streams {
    pub const PATHS: u64 = 0;
    pub const PREFIX: u64 = 1;
    pub const PROBE: u64 = 2;
    pub const TARGETS: u64 = 3;
}

pub(crate) enum Model {
    Diffusion(Diffusion),
    Arctan(ArctanMarket),
    Conditioned(ConditionedSampler),
}

impl Model {
    pub fn as_dyn(&self) -> &(dyn MarketModel + Sync) {
        match self {
            Model::Diffusion(m) => m,
            Model::Arctan(m) => m,
            Model::Conditioned(m) => m,
        }
    }
}

pub(crate) fn vol_spec(cfg: &ExperimentConfig) -> Result<VolatilitySpec, RunError> {
    let n = cfg.n_assets();
    if let Some(s) = cfg.model.sigma {
        return Ok(VolatilitySpec::scaled_identity(n, s)?);
    }
    let (m, d) = cfg.sigma().ok_or_else(|| RunError::Validation(vec!["model: sigma is required".into()]))?;
    let bounds = VolBounds::from_matrix(&m, n, d)?;
    Ok(VolatilitySpec::constant(n, d, m, bounds)?)
}

pub(crate) fn region(cfg: &ExperimentConfig) -> Result<DiversityRegion, RunError> {
    let delta = cfg.delta().ok_or_else(|| RunError::Validation(vec!["model: delta is required".into()]))?;
    Ok(DiversityRegion::new(delta, cfg.n_assets())?)
}

pub(crate) fn build_model(cfg: &ExperimentConfig) -> Result<Model, RunError> {
    let m = &cfg.model;
    Ok(match m.kind {
        ModelKind::Arctan => Model::Arctan(ArctanMarket),
        ModelKind::Fernholz => {
            let params = FernholzParams::new(
                m.g.clone().unwrap_or_default(),
                m.delta.unwrap_or(f64::NAN),
                m.m.unwrap_or(f64::NAN),
            )?;
            Model::Diffusion(Diffusion::new(DriftSpec::fernholz(params), vol_spec(cfg)?)?)
        }
        ModelKind::CustomConstantVol => {
            let drift = match &m.gamma {
                Some(g) => DriftSpec::constant(g.clone()),
                None => DriftSpec::zero(),
            };
            Model::Diffusion(Diffusion::new(drift, vol_spec(cfg)?)?)
        }
        ModelKind::Conditioned => Model::Conditioned(ConditionedSampler::new(
            vol_spec(cfg)?,
            region(cfg)?,
            m.max_attempts.unwrap_or(100_000),
        )?),
    })
}

pub(crate) fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, RunError> {
    Ok(TimeGrid::new(cfg.grid.horizon, cfg.grid.steps)?)
}

pub(crate) fn interval_json(i: Interval) -> Value {
    json!({ "estimate": i.estimate, "lo": i.lo, "hi": i.hi })
}

/// Runs `f` for paths `0..n` in parallel, each on its own substream, and
/// returns results in path order; the first failing path (by index) wins.
pub(crate) fn par_paths<T, F>(n: usize, root: &RngStream, f: F) -> Result<Vec<T>, RunError>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T, CoreError> + Sync + Send,
{
    let all: Vec<Result<T, CoreError>> = (0..n)
        .into_par_iter()
        .map(|k| f(k, &mut root.substream(k as u64)))
        .collect();
    all.into_iter().collect::<Result<Vec<T>, CoreError>>().map_err(RunError::from)
}

/// Price series of one path at the configured stride.
pub(crate) fn price_rows(cfg: &ExperimentConfig, k: usize, path: &MarketPath) -> Vec<Row> {
    if k >= cfg.output.csv_paths {
        return Vec::new();
    }
    let g = path.grid();
    let mut rows = Vec::new();
    for j in (0..=g.steps()).step_by(cfg.output.csv_stride) {
        for (i, &s) in path.row(j).iter().enumerate() {
            rows.push(Row::new(k, g.t(j), format!("S{}", i + 1), s));
        }
    }
    rows
}

pub(crate) fn series_rows(cfg: &ExperimentConfig, k: usize, grid: &TimeGrid, name: &str, values: &[f64]) -> Vec<Row> {
    if k >= cfg.output.csv_paths {
        return Vec::new();
    }
    (0..values.len())
        .step_by(cfg.output.csv_stride)
        .map(|j| Row::new(k, grid.t(j), name, values[j]))
        .collect()
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

/// Validates and runs `cfg` with `seed`, keeping all artifacts in memory.
pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(RunError::Validation(violations));
    }
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Io(e.to_string()))?;
    pool.install(|| match cfg.kind {
        Kind::Simulate => simulate(cfg, seed),
        Kind::Diversity => diversity(cfg, seed),
        Kind::Conditioned => conditioned(cfg, seed),
        Kind::Cps => cps::run(cfg, seed),
        Kind::Bessel => bessel::run(cfg, seed),
        Kind::CfsProbe => cfs_probe(cfg, seed),
    })
}

/// The full summary.json document.
pub fn summary(cfg: &ExperimentConfig, seed: u64, outcome: &Outcome) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "kind": kind_name(cfg.kind),
        "model": model_name(cfg.model.kind),
        "seed": seed,
        "n_assets": cfg.n_assets(),
        "horizon": cfg.grid.horizon,
        "steps": cfg.grid.steps,
        "paths": cfg.monte_carlo.paths,
        "results": outcome.results.clone(),
    })
}

pub fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Simulate => "simulate",
        Kind::Diversity => "diversity",
        Kind::Conditioned => "conditioned",
        Kind::Cps => "cps",
        Kind::Bessel => "bessel",
        Kind::CfsProbe => "cfs-probe",
    }
}

pub fn model_name(k: ModelKind) -> &'static str {
    match k {
        ModelKind::Fernholz => "fernholz",
        ModelKind::Arctan => "arctan",
        ModelKind::Conditioned => "conditioned",
        ModelKind::CustomConstantVol => "custom-constant-vol",
    }
}

/// What a finished `run` left behind.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Executes `cfg` and writes its artifacts into `out` (default: the
/// configured directory, else the working directory). A failed certificate
/// still writes everything and reports exit code 4.
pub fn run(cfg: &ExperimentConfig, seed: Option<u64>, out: Option<&Path>) -> Result<RunReport, RunError> {
    let seed = seed.unwrap_or(cfg.monte_carlo.seed);
    let outcome = execute(cfg, seed)?;
    let summary = summary(cfg, seed, &outcome);
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let files = output::write_atomically(&dir, &output::artifacts(&outcome, &summary, &cfg.output.formats)?)?;
    let exit_code = if outcome.certified == Some(false) { exit::CERTIFICATE } else { exit::OK };
    Ok(RunReport {
        exit_code,
        files,
        summary,
    })
}

fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let model = build_model(cfg)?;
    let grid = grid(cfg)?;
    let s0 = cfg.s0();
    let n = cfg.n_assets();
    let per_path = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let path = model.as_dyn().sample_path(&grid, &s0, rng)?;
        let values = path.as_grid_path().values();
        Ok((
            price_rows(cfg, k, &path),
            path.row(grid.steps()).to_vec(),
            min_of(values.iter().copied()),
            max_of(values.iter().copied()),
        ))
    })?;
    let mut rows = Vec::new();
    let mut terminal = vec![Vec::new(); n];
    for (r, last, _, _) in &per_path {
        rows.extend(r.iter().cloned());
        for (i, v) in last.iter().enumerate() {
            terminal[i].push(*v);
        }
    }
    let results = json!({
        "terminal_mean": terminal.iter().map(|t| stats::mean(t)).collect::<Vec<_>>(),
        "terminal_std_error": terminal.iter().map(|t| stats::std_error(t)).collect::<Vec<_>>(),
        "min_price": min_of(per_path.iter().map(|p| p.2)),
        "max_price": max_of(per_path.iter().map(|p| p.3)),
    });
    Ok(Outcome {
        rows,
        results,
        certificate: None,
        certified: None,
    })
}

fn diversity(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let model = build_model(cfg)?;
    let grid = grid(cfg)?;
    let s0 = cfg.s0();
    let delta = cfg.diversity.as_ref().and_then(|d| d.delta).or(cfg.delta()).unwrap_or(f64::NAN);
    let compare = cfg.diversity.as_ref().is_some_and(|d| d.compare_equal_weight);
    let per_path = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let path = model.as_dyn().sample_path(&grid, &s0, rng)?;
        let w = market_weights(&path);
        let v = diversity_verdict(&w, delta)?;
        let mut rows = series_rows(cfg, k, &grid, "mu_max", &w.max_weights());
        rows.push(Row::new(k, grid.horizon(), "sup_mu_max", v.max_weight_sup));
        rows.push(Row::new(k, grid.horizon(), "violations", v.violation_count as f64));
        let log_ratio = if compare {
            let a = portfolio_value(&path, &PortfolioSpec::EqualWeight, 1.0)?;
            let b = portfolio_value(&path, &PortfolioSpec::Market, 1.0)?;
            Some((a[a.len() - 1] / b[b.len() - 1]).ln())
        } else {
            None
        };
        Ok((rows, v, log_ratio))
    })?;
    let paths = per_path.len();
    let points = paths * (grid.steps() + 1);
    let violations: usize = per_path.iter().map(|p| p.1.violation_count).sum();
    let mut results = json!({
        "delta_tested": delta,
        "weight_bound": 1.0 - delta,
        "grid_points": points,
        "violation_points": violations,
        "violation_fraction": violations as f64 / points as f64,
        "paths_with_violation": per_path.iter().filter(|p| !p.1.diverse).count(),
        "sup_mu_max": max_of(per_path.iter().map(|p| p.1.max_weight_sup)),
        "mean_weight_avg": per_path.iter().map(|p| p.1.weight_avg).sum::<f64>() / paths as f64,
        "weakly_diverse_paths": per_path.iter().filter(|p| p.1.weak_diverse).count(),
    });
    if cfg.model.kind == ModelKind::Arctan {
        results["arctan_bound"] = json!(arctan_weight_bound());
    }
    if compare {
        let logs: Vec<f64> = per_path.iter().filter_map(|p| p.2).collect();
        let at_least = logs.iter().filter(|&&l| l >= 0.0).count();
        let strictly = logs.iter().filter(|&&l| l > 0.0).count();
        let (m, se) = (stats::mean(&logs), stats::std_error(&logs));
        results["relative_performance"] = json!({
            "portfolio": "equal-weight",
            "benchmark": "market",
            "p_at_least": interval_json(wilson(at_least, logs.len())),
            "p_strictly": interval_json(wilson(strictly, logs.len())),
            "mean_log_ratio": interval_json(Interval { estimate: m, lo: m - stats::Z95 * se, hi: m + stats::Z95 * se }),
            "disclaimer": RelativePerformance::DISCLAIMER,
        });
    }
    Ok(Outcome {
        rows: per_path.into_iter().flat_map(|p| p.0).collect(),
        results,
        certificate: None,
        certified: None,
    })
}

fn conditioned(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let Model::Conditioned(sampler) = build_model(cfg)? else {
        return Err(RunError::Validation(vec!["conditioned: model.type must be conditioned".into()]));
    };
    let grid = grid(cfg)?;
    let s0 = cfg.s0();
    let region = *sampler.region();
    let per_path = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let (path, rejected) = sample_conditioned_counted(&sampler, &grid, &s0, rng)?;
        let outside = path.rows().filter(|r| !region.contains(r)).count();
        let mu_t = max_of(divcps_core::diversity::weights_of(path.row(grid.steps())));
        let mut rows = price_rows(cfg, k, &path);
        rows.push(Row::new(k, grid.horizon(), "mu_max_T", mu_t));
        rows.push(Row::new(k, grid.horizon(), "rejections", rejected as f64));
        Ok((rows, rejected, outside, mu_t))
    })?;
    let accepted = per_path.len();
    let rejected: usize = per_path.iter().map(|p| p.1).sum();
    let mu: Vec<f64> = per_path.iter().map(|p| p.3).collect();
    let results = json!({
        "accepted": accepted,
        "rejected": rejected,
        "acceptance_rate": interval_json(wilson(accepted, accepted + rejected)),
        "region_violations": per_path.iter().map(|p| p.2).sum::<usize>(),
        "mu_max_T_mean": stats::mean(&mu),
        "mu_max_T_std_error": stats::std_error(&mu),
        "note": GRID_CHECK_NOTE,
    });
    Ok(Outcome {
        rows: per_path.into_iter().flat_map(|p| p.0).collect(),
        results,
        certificate: None,
        certified: None,
    })
}

/// Ramp endpoint near `start`, inside `O(δ)` when a region is configured.
fn ramp_end(start: &[f64], spread: f64, region: Option<&DiversityRegion>, rng: &mut RngStream) -> Result<Vec<f64>, RunError> {
    for _ in 0..1000 {
        let end: Vec<f64> = start.iter().map(|s| s * (spread * rng.normal()).exp()).collect();
        if region.is_none_or(|r| r.contains(&end)) {
            return Ok(end);
        }
    }
    Err(CoreError::Precondition("no ramp endpoint inside O(delta) found".into()).into())
}

fn cfs_probe(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let c = cfg.cfs.as_ref().ok_or_else(|| RunError::Validation(vec!["cfs: section [cfs] is required".into()]))?;
    let model = build_model(cfg)?;
    let grid = grid(cfg)?;
    let prefix = model.as_dyn().sample_path(&grid, &cfg.s0(), &mut RngStream::new(seed, streams::PREFIX))?;
    let start = prefix.row(c.t_index).to_vec();
    let region = cfg.delta().map(|_| region(cfg)).transpose()?;
    let n_targets = match c.target {
        TargetKind::Frozen => 1,
        TargetKind::Ramp => c.targets.unwrap_or(1),
    };
    let ends_root = RngStream::new(seed, streams::TARGETS);
    let targets = (0..n_targets)
        .map(|j| match c.target {
            TargetKind::Frozen => Ok(start.clone()),
            TargetKind::Ramp => ramp_end(&start, c.spread.unwrap_or(0.1), region.as_ref(), &mut ends_root.substream(j as u64)),
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let probe_root = RngStream::new(seed, streams::PROBE);
    let reports = targets
        .par_iter()
        .enumerate()
        .map(|(j, end)| {
            let target = linear_target(&grid, c.t_index, &start, end);
            divcps_core::bessel::cfs_probe(
                model.as_dyn(),
                &prefix,
                c.t_index,
                &target,
                c.eta_tube,
                cfg.monte_carlo.paths,
                &probe_root.substream(j as u64),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, CoreError>>()?;
    let mut rows = price_rows(cfg, 0, &prefix);
    for (j, (r, end)) in reports.iter().zip(&targets).enumerate() {
        rows.push(Row::new(j, grid.horizon(), "hits", r.hits as f64));
        rows.push(Row::new(j, grid.horizon(), "estimate", r.estimate.estimate));
        for (i, e) in end.iter().enumerate() {
            rows.push(Row::new(j, grid.horizon(), format!("target{}", i + 1), *e));
        }
    }
    let results = json!({
        "t_index": c.t_index,
        "eta_tube": c.eta_tube,
        "targets": reports.iter().enumerate().map(|(j, r)| json!({
            "index": j,
            "hits": r.hits,
            "estimate": interval_json(r.estimate),
            "positive": r.estimate.excludes_zero(),
        })).collect::<Vec<_>>(),
        "min_estimate": min_of(reports.iter().map(|r| r.estimate.estimate)),
        "all_positive": reports.iter().all(|r| r.estimate.excludes_zero()),
    });
    Ok(Outcome {
        rows,
        results,
        certificate: None,
        certified: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
kind = "simulate"
[model]
type = "custom-constant-vol"
n = 2
sigma = 0.0
gamma = [0.0, 0.0]
s0 = [1.0, 2.0]
[grid]
horizon = 1.0
steps = 8
[monte_carlo]
paths = 3
seed = 5
[output]
csv_paths = 3
"#,
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_give_constant_series() {
        let out = execute(&constant_config(), 5).unwrap();
        assert_eq!(out.rows.len(), 3 * 9 * 2);
        for r in &out.rows {
            let want = if r.series == "S1" { 1.0 } else { 2.0 };
            assert_eq!(r.value, want);
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let mut cfg = constant_config();
        cfg.model.sigma = Some(0.3);
        let a = output::csv_bytes(&execute(&cfg, 9).unwrap().rows).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&cfg, 9)).unwrap();
        assert_eq!(a, output::csv_bytes(&b.rows).unwrap());
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let mut cfg = constant_config();
        cfg.grid.steps = 0;
        assert!(matches!(execute(&cfg, 0), Err(RunError::Validation(_))));
    }
}
