//! `kind = "bessel"`: radial comparison with BESQ, BESQ marginals and the
//! small-ball support probability.

use divcps_core::bessel::{
    besq_simulate, coupled_comparison, default_tolerance, radial_decompose, support_probability, BesqParams,
    BesqScheme,
};
use divcps_core::sde::{simulate_additive, DriftSpec};
use divcps_core::stats::{self, ks_one_sample, normal_cdf};
use divcps_core::RngStream;
use serde_json::json;

use super::{grid, interval_json, max_of, par_paths, series_rows, streams, vol_spec};
use crate::config::{BesselConfig, BesselMode, ExperimentConfig, Scheme};
use crate::error::RunError;
use crate::output::{Outcome, Row};

pub(super) fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let b = cfg.bessel.as_ref().ok_or_else(|| RunError::Validation(vec!["bessel: section [bessel] is required".into()]))?;
    match b.mode {
        BesselMode::Coupling => coupling(cfg, b, seed),
        BesselMode::Marginals => marginals(cfg, b, seed),
        BesselMode::Support => support(cfg, b, seed),
    }
}

fn scheme(s: Scheme) -> BesqScheme {
    match s {
        Scheme::Milstein => BesqScheme::Milstein,
        Scheme::FullTruncationEuler => BesqScheme::FullTruncationEuler,
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Milstein => "milstein",
        Scheme::FullTruncationEuler => "full-truncation-euler",
    }
}

fn coupling(cfg: &ExperimentConfig, b: &BesselConfig, seed: u64) -> Result<Outcome, RunError> {
    let grid = grid(cfg)?;
    let vol = vol_spec(cfg)?;
    let d = vol.n();
    let params = BesqParams::for_domination(b.delta_b.unwrap_or(f64::NAN), d, vol.bounds())?;
    let tol = b.tolerance.unwrap_or_else(|| default_tolerance(&grid));
    let sch = scheme(b.scheme);
    let x0 = vec![0.0; d];
    let per_path = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let x = simulate_additive(&grid, &x0, &DriftSpec::zero(), &vol, rng)?;
        let dec = radial_decompose(&x, &vol)?;
        let rep = coupled_comparison(&dec, &params, sch, tol);
        let mut rows = series_rows(cfg, k, &grid, "R", dec.r());
        rows.extend(series_rows(cfg, k, &grid, "Z", &rep.z));
        rows.extend(series_rows(cfg, k, &grid, "clock", dec.qvar()));
        rows.push(Row::new(k, grid.horizon(), "max_excess", rep.max_excess));
        rows.push(Row::new(k, grid.horizon(), "max_abs_diff", rep.max_abs_diff));
        Ok((rows, rep.points, rep.dominated, rep.max_excess, rep.max_abs_diff, rep.max_b))
    })?;
    let points: usize = per_path.iter().map(|p| p.1).sum();
    let dominated: usize = per_path.iter().map(|p| p.2).sum();
    let sqrt_dt_bound = 10.0 * grid.dt().sqrt();
    let max_abs = max_of(per_path.iter().map(|p| p.4));
    let results = json!({
        "delta_b": params.delta_b(),
        "scheme": scheme_name(b.scheme),
        "tolerance": tol,
        "points": points,
        "dominated_points": dominated,
        "dominated_fraction": dominated as f64 / points as f64,
        "max_excess": max_of(per_path.iter().map(|p| p.3)),
        "max_abs_diff": max_abs,
        "sqrt_dt_bound": sqrt_dt_bound,
        "within_sqrt_dt_bound": max_abs <= sqrt_dt_bound,
        "max_b": max_of(per_path.iter().map(|p| p.5)),
    });
    Ok(Outcome {
        rows: per_path.into_iter().flat_map(|p| p.0).collect(),
        results,
        certificate: None,
        certified: None,
    })
}

fn marginals(cfg: &ExperimentConfig, b: &BesselConfig, seed: u64) -> Result<Outcome, RunError> {
    let grid = grid(cfg)?;
    let params = BesqParams::new(b.delta_b.unwrap_or(f64::NAN))?;
    let times = b.record_times.clone().unwrap_or_else(|| vec![grid.horizon()]);
    let idx: Vec<usize> = times.iter().map(|t| ((t / grid.dt()).round() as usize).min(grid.steps())).collect();
    let sch = scheme(b.scheme);
    let per_path = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let z = besq_simulate(&params, &grid, sch, rng);
        let vals: Vec<f64> = idx.iter().map(|&j| z.values()[j]).collect();
        let mut rows = series_rows(cfg, k, &grid, "Z_path", z.values());
        rows.extend(idx.iter().zip(&vals).map(|(&j, &v)| Row::new(k, grid.t(j), "Z", v)));
        Ok((rows, vals))
    })?;
    let delta_b = params.delta_b();
    let mut marg = Vec::new();
    for (m, &j) in idx.iter().enumerate() {
        let xs: Vec<f64> = per_path.iter().map(|p| p.1[m]).collect();
        let (mean, se) = (stats::mean(&xs), stats::std_error(&xs));
        let t = grid.t(j);
        let expected = delta_b * t;
        marg.push(json!({
            "t": t,
            "mean": mean,
            "std_error": se,
            "expected": expected,
            "z_score": (mean - expected) / se,
            "within_3se": (mean - expected).abs() <= 3.0 * se,
        }));
    }
    let mut results = json!({
        "delta_b": delta_b,
        "scheme": scheme_name(b.scheme),
        "marginals": marg,
    });
    if delta_b == 1.0 {
        // BESQ(1) from 0 is W², so Z_t / t is chi-square with one degree
        let last = idx.len() - 1;
        let t = grid.t(idx[last]);
        let xs: Vec<f64> = per_path.iter().map(|p| p.1[last]).collect();
        let ks = ks_one_sample(&xs, |z| if z <= 0.0 { 0.0 } else { 2.0 * normal_cdf((z / t).sqrt()) - 1.0 });
        results["ks_squared_gaussian"] = json!({ "t": t, "statistic": ks.statistic, "p_value": ks.p_value });
    }
    Ok(Outcome {
        rows: per_path.into_iter().flat_map(|p| p.0).collect(),
        results,
        certificate: None,
        certified: None,
    })
}

fn support(cfg: &ExperimentConfig, b: &BesselConfig, seed: u64) -> Result<Outcome, RunError> {
    let grid = grid(cfg)?;
    let vol = vol_spec(cfg)?;
    let eps = b.eps.unwrap_or(f64::NAN);
    let rep = support_probability(&vol, &grid, eps, cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS))?;
    let t = grid.horizon();
    let rows = vec![
        Row::new(0, t, "grid_estimate", rep.grid.estimate),
        Row::new(0, t, "bridge_estimate", rep.bridge.estimate),
        Row::new(0, t, "besq_bound_estimate", rep.besq_bound.estimate),
    ];
    let results = json!({
        "eps": eps,
        "grid": interval_json(rep.grid),
        "bridge": interval_json(rep.bridge),
        "besq_bound": interval_json(rep.besq_bound),
        "positive": rep.grid.excludes_zero(),
    });
    Ok(Outcome {
        rows,
        results,
        certificate: None,
        certified: None,
    })
}
