//! `kind = "cps"`: scenario trees with certificates, per-path tube and
//! radius checks, and batches of random tilt nodes.

use divcps_core::cps::{
    build_epsilon, build_scenario_tree, cps_certificate, martingale_tilt, retirement_walk_with, shadow_price, tilt_node,
    tube_slack, CertificateStatus, EpsilonProcess, EpsilonRule, StoppingRule, TiltParams, TiltProblem, TreeParams,
};
use divcps_core::lp::origin_in_interior;
use divcps_core::{dist_to_complement, CoreError, MarketPath, RngStream};
use serde_json::json;

use super::{build_model, grid, max_of, min_of, par_paths, region, series_rows, streams};
use crate::config::{CpsConfig, CpsMode, ExperimentConfig, Stopping};
use crate::error::RunError;
use crate::output::{Outcome, Row};

pub(super) fn run(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, RunError> {
    let c = cfg.cps.as_ref().ok_or_else(|| RunError::Validation(vec!["cps: section [cps] is required".into()]))?;
    match c.mode {
        CpsMode::Tree => tree(cfg, c, seed),
        CpsMode::Paths => paths(cfg, c, seed),
        CpsMode::Nodes => nodes(cfg, c, seed),
    }
}

fn stopping(s: Stopping) -> StoppingRule {
    match s {
        Stopping::Interpolated => StoppingRule::Interpolated,
        Stopping::GridIndex => StoppingRule::GridIndex,
    }
}

fn tree(cfg: &ExperimentConfig, c: &CpsConfig, seed: u64) -> Result<Outcome, RunError> {
    let model = build_model(cfg)?;
    let grid = grid(cfg)?;
    let mut params = TreeParams::new(c.depth, c.branching, c.eta, region(cfg)?);
    params.stopping = stopping(c.stopping);
    params.max_redraws = c.max_redraws;
    let tree = build_scenario_tree(model.as_dyn(), &grid, &cfg.s0(), &params, &RngStream::new(seed, streams::PATHS))?;
    let tilted = martingale_tilt(tree, c.retirement_mass_floor, c.budget_n)?;
    let shadow = shadow_price(&tilted)?;
    let cert = cps_certificate(&tilted, &shadow, c.eta)?;
    let t = tilted.tree();

    let mut rows = Vec::new();
    for r in &cert.nodes {
        for (i, (x, s)) in r.pivot.iter().zip(&r.shadow).enumerate() {
            rows.push(Row::new(r.id, r.time, format!("X{}", i + 1), *x));
            rows.push(Row::new(r.id, r.time, format!("St{}", i + 1), *s));
        }
        rows.push(Row::new(r.id, r.time, "ratio_lo", r.ratio_lo));
        rows.push(Row::new(r.id, r.time, "ratio_hi", r.ratio_hi));
        rows.push(Row::new(r.id, r.time, "tube_slack", r.tube_slack));
        rows.push(Row::new(r.id, r.time, "mart_residual", r.mart_residual));
    }
    let (status, failed_node, reason) = match &cert.status {
        CertificateStatus::Certified => ("certified", None, None),
        CertificateStatus::Failed { node, reason } => ("failed", Some(*node), Some(reason.clone())),
    };
    let leaves: Vec<_> = t.nodes().iter().filter(|n| n.is_leaf()).collect();
    let results = json!({
        "certificate": {
            "status": status,
            "failed_node": failed_node,
            "reason": reason,
            "version": divcps_core::cps::certificate::CERTIFICATE_VERSION,
        },
        "eta": c.eta,
        "delta": cert.delta,
        "depth": c.depth,
        "branching": c.branching,
        "nodes": t.len(),
        "leaves": leaves.len(),
        "retired_leaves": leaves.iter().filter(|n| n.retired).count(),
        "total_redraws": t.total_redraws(),
        "relaxed_nodes": tilted.relaxed_nodes(),
        "max_mart_residual": cert.max_mart_residual,
        "max_shadow_error": shadow.max_error(),
        "max_tube_slack": cert.max_tube_slack,
        "min_ratio": cert.min_ratio,
        "max_ratio": cert.max_ratio,
        "ratio_bounds": [1.0 / (1.0 + c.eta), 1.0 + c.eta],
    });
    let certified = cert.status.is_certified();
    Ok(Outcome {
        rows,
        results,
        certificate: Some(cert.to_text()),
        certified: Some(certified),
    })
}

/// Violation counts for the radius conditions along one path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct EpsChecks {
    pub monotone: usize,
    pub dist: usize,
    pub base_lipschitz: usize,
    pub clamped_lipschitz: usize,
}

/// Pairs `j < k` with `|f_k − f_j| > L·max_{j≤m≤k} |S_m − S_j|`.
fn lipschitz_violations(path: &MarketPath, f: &[f64], lip: f64) -> usize {
    let steps = path.grid().steps();
    let mut bad = 0;
    for j in 0..=steps {
        let sj = path.row(j);
        let mut reach = 0.0f64;
        for k in j + 1..=steps {
            let d: f64 = path.row(k).iter().zip(sj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            reach = reach.max(d);
            let gap = (f[k] - f[j]).abs();
            if gap > lip * reach * (1.0 + 1e-12) + 1e-15 {
                bad += 1;
            }
        }
    }
    bad
}

pub(crate) fn eps_checks(path: &MarketPath, e: &EpsilonProcess, rule: &EpsilonRule) -> Result<EpsChecks, CoreError> {
    let v = e.values();
    let mut dist = 0;
    for (k, row) in path.rows().enumerate() {
        if !(v[k] < dist_to_complement(row, rule.region())?) {
            dist += 1;
        }
    }
    Ok(EpsChecks {
        monotone: v.windows(2).filter(|w| w[1] > w[0]).count(),
        dist,
        base_lipschitz: lipschitz_violations(path, e.base(), rule.base_lipschitz()),
        clamped_lipschitz: lipschitz_violations(path, e.clamped(), rule.lipschitz()),
    })
}

fn paths(cfg: &ExperimentConfig, c: &CpsConfig, seed: u64) -> Result<Outcome, RunError> {
    let model = build_model(cfg)?;
    let grid = grid(cfg)?;
    let region = region(cfg)?;
    let rule = EpsilonRule::new(c.eta, region)?;
    let s0 = cfg.s0();
    let rule_kind = stopping(c.stopping);
    let per_path = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let path = model.as_dyn().sample_path(&grid, &s0, rng)?;
        let e = build_epsilon(&path, c.eta, &region)?;
        let walk = retirement_walk_with(&path, &e, rule_kind)?;
        let tube = tube_slack(&path, &e, &walk);
        let checks = eps_checks(&path, &e, &rule)?;
        let mut rows = series_rows(cfg, k, &grid, "eps", e.values());
        rows.push(Row::new(k, grid.horizon(), "tube_slack", tube.max_slack));
        rows.push(Row::new(k, grid.horizon(), "pivots", walk.len() as f64));
        Ok((rows, tube, checks, walk.len()))
    })?;
    let total = |f: fn(&EpsChecks) -> usize| per_path.iter().map(|p| f(&p.2)).sum::<usize>();
    let results = json!({
        "eta": c.eta,
        "delta": region.delta(),
        "stopping": match c.stopping { Stopping::Interpolated => "interpolated", Stopping::GridIndex => "grid-index" },
        "tube": {
            "max_slack": max_of(per_path.iter().map(|p| p.1.max_slack)),
            "violating_paths": per_path.iter().filter(|p| p.1.max_slack > 0.0).count(),
            "points_checked": per_path.iter().map(|p| p.1.points_checked).sum::<usize>(),
        },
        "epsilon": {
            "monotone_violations": total(|e| e.monotone),
            "dist_violations": total(|e| e.dist),
            "base_lipschitz_violations": total(|e| e.base_lipschitz),
            "clamped_lipschitz_violations": total(|e| e.clamped_lipschitz),
            "base_lipschitz": rule.base_lipschitz(),
            "clamped_lipschitz": rule.lipschitz(),
        },
        "mean_pivots": per_path.iter().map(|p| p.3 as f64).sum::<f64>() / per_path.len() as f64,
    });
    Ok(Outcome {
        rows: per_path.into_iter().flat_map(|p| p.0).collect(),
        results,
        certificate: None,
        certified: None,
    })
}

/// One random node: `(dim, increments, p, retirement flags)`.
pub(crate) type RandomNode = (usize, Vec<f64>, Vec<f64>, Vec<bool>);

fn uniform_in(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + ((rng.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

/// Gaussian increments with some retired (zero) children, redrawn until the
/// moving increments have the origin in the interior of their hull.
pub(crate) fn random_node(c: &CpsConfig, rng: &mut RngStream) -> RandomNode {
    let (lo, hi) = (c.min_children.unwrap_or(2), c.max_children.unwrap_or(16));
    let (dlo, dhi) = (c.min_dim.unwrap_or(1), c.max_dim.unwrap_or(3));
    let dim = uniform_in(rng, dlo, dhi);
    let k = uniform_in(rng, lo.max(dim + 1), hi);
    let retired = (0..k - dim - 1).filter(|_| rng.uniform() < 0.25).count();
    loop {
        let moving = k - retired;
        let mut deltas: Vec<f64> = (0..moving * dim).map(|_| rng.normal()).collect();
        if origin_in_interior(&deltas, dim).interior {
            deltas.extend(std::iter::repeat_n(0.0, retired * dim));
            let flags = (0..k).map(|i| i >= moving).collect();
            return (dim, deltas, vec![1.0 / k as f64; k], flags);
        }
    }
}

fn nodes(cfg: &ExperimentConfig, c: &CpsConfig, seed: u64) -> Result<Outcome, RunError> {
    let params = TiltParams {
        retirement_mass_floor: c.retirement_mass_floor,
        budget_exponent: c.budget_n,
    };
    let per_node = par_paths(cfg.monte_carlo.paths, &RngStream::new(seed, streams::PATHS), |k, rng| {
        let (dim, deltas, p, flags) = random_node(c, rng);
        let sol = tilt_node(
            &TiltProblem {
                dim,
                deltas: &deltas,
                p: &p,
                retirement: &flags,
            },
            &params,
            k,
        )?;
        let mut mean = vec![0.0; dim];
        for (q, d) in sol.q.iter().zip(deltas.chunks_exact(dim)) {
            mean.iter_mut().zip(d).for_each(|(m, x)| *m += q * x);
        }
        let scale = max_of(deltas.chunks_exact(dim).map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt()));
        let residual = mean.iter().map(|m| m * m).sum::<f64>().sqrt() / scale;
        let min_q = min_of(sol.q.iter().copied());
        let sum_err = (sol.q.iter().sum::<f64>() - 1.0).abs();
        let t = 0.0;
        let rows = vec![
            Row::new(k, t, "dim", dim as f64),
            Row::new(k, t, "children", p.len() as f64),
            Row::new(k, t, "scaled_residual", residual),
            Row::new(k, t, "min_q", min_q),
            Row::new(k, t, "sum_q_error", sum_err),
        ];
        Ok((rows, residual, min_q, sum_err, sol.relaxation.is_some()))
    })?;
    let failures = per_node
        .iter()
        .filter(|n| !(n.1 <= 1e-10 && n.2 > 0.0 && n.3 <= 1e-12))
        .count();
    let results = json!({
        "nodes": per_node.len(),
        "failures": failures,
        "max_scaled_residual": max_of(per_node.iter().map(|n| n.1)),
        "min_q": min_of(per_node.iter().map(|n| n.2)),
        "max_sum_q_error": max_of(per_node.iter().map(|n| n.3)),
        "relaxed_nodes": per_node.iter().filter(|n| n.4).count(),
    });
    Ok(Outcome {
        rows: per_node.into_iter().flat_map(|n| n.0).collect(),
        results,
        certificate: None,
        certified: None,
    })
}
