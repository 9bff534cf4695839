//! Diverse market obtained by conditioning a positive local-martingale
//! pre-model on staying in `O(δ)`, realized by path-level rejection.

use alloc::vec::Vec;

use crate::error::{domain, precondition, CoreError, CoreResult};
use crate::grid::{MarketPath, TimeGrid};
use crate::math;
use crate::region::DiversityRegion;
use crate::rng::RngStream;
use crate::sde::{Diffusion, DriftSpec, MarketModel, Segment, VolatilitySpec};
use crate::stats::{self, Interval};

/// Conditioning is checked at grid points only; excursions out of `O`
/// between grid points go undetected.
pub const GRID_CHECK_NOTE: &str = "region membership checked at grid points only";

#[derive(Debug, Clone)]
pub struct ConditionedSampler {
    pre_model: Diffusion,
    region: DiversityRegion,
    max_attempts: usize,
}

impl ConditionedSampler {
    pub fn new(vol: VolatilitySpec, region: DiversityRegion, max_attempts: usize) -> CoreResult<Self> {
        if vol.n() != region.n() {
            return Err(domain("volatility and region dimensions differ"));
        }
        if max_attempts == 0 {
            return Err(domain("max_attempts must be positive"));
        }
        Ok(Self {
            pre_model: Diffusion::new(DriftSpec::ito_correction(), vol)?,
            region,
            max_attempts,
        })
    }

    pub fn pre_model(&self) -> &Diffusion {
        &self.pre_model
    }

    pub fn region(&self) -> &DiversityRegion {
        &self.region
    }

    pub fn max_attempts(&self) -> usize {
        self.max_attempts
    }

    fn stays_in_region(&self, seg: &Segment) -> bool {
        (0..seg.len()).all(|i| self.region.contains(seg.point(i)))
    }

    /// Rejection loop from `(t0, s0)`; attempt `a` uses substream `a` of a
    /// key drawn from `rng`, so the lowest accepted index is reproducible
    /// regardless of evaluation order.
    fn rejection(&self, grid: &TimeGrid, t0: f64, s0: &[f64], rng: &mut RngStream) -> CoreResult<(Segment, usize)> {
        if s0.len() != self.region.n() {
            return Err(domain("initial price has wrong dimension"));
        }
        if !self.region.contains(s0) {
            return Err(precondition("initial price must lie in O(delta)"));
        }
        let root = rng.fork();
        for a in 0..self.max_attempts {
            let seg = self.pre_model.continuation(grid, t0, s0, &mut root.substream(a as u64))?;
            if self.stays_in_region(&seg) {
                return Ok((seg, a));
            }
        }
        Err(CoreError::AcceptanceTooRare {
            attempts: self.max_attempts,
            accepted: 0,
            rate: 0.0,
        })
    }
}

impl MarketModel for ConditionedSampler {
    fn n_assets(&self) -> usize {
        self.region.n()
    }

    /// Continuation conditioned on staying in `O` over `[t0, T]`, which by
    /// the Markov property is the conditional law given the past.
    fn continuation(&self, grid: &TimeGrid, t0: f64, s0: &[f64], rng: &mut RngStream) -> CoreResult<Segment> {
        self.rejection(grid, t0, s0, rng).map(|(s, _)| s)
    }
}

/// An exact draw from the grid-conditioned law.
pub fn sample_conditioned(
    sampler: &ConditionedSampler,
    grid: &TimeGrid,
    s0: &[f64],
    rng: &mut RngStream,
) -> CoreResult<MarketPath> {
    sample_conditioned_counted(sampler, grid, s0, rng).map(|(p, _)| p)
}

/// Like [`sample_conditioned`], also returning the number of rejected attempts.
pub fn sample_conditioned_counted(
    sampler: &ConditionedSampler,
    grid: &TimeGrid,
    s0: &[f64],
    rng: &mut RngStream,
) -> CoreResult<(MarketPath, usize)> {
    let (seg, rejected) = sampler.rejection(grid, 0.0, s0, rng)?;
    Ok((MarketPath::new(*grid, sampler.n_assets(), seg.prices)?, rejected))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceReport {
    pub accepted: usize,
    pub trials: usize,
    /// Rate with a 95% Wilson interval.
    pub rate: Interval,
}

/// Fraction of unconditioned pre-model paths that stay in `O` at every grid point.
pub fn acceptance_rate(
    sampler: &ConditionedSampler,
    grid: &TimeGrid,
    s0: &[f64],
    n_trials: usize,
    rng: &mut RngStream,
) -> CoreResult<AcceptanceReport> {
    if n_trials == 0 {
        return Err(domain("n_trials must be positive"));
    }
    let root = rng.fork();
    let mut accepted = 0;
    for i in 0..n_trials {
        let seg = sampler.pre_model.continuation(grid, 0.0, s0, &mut root.substream(i as u64))?;
        accepted += usize::from(sampler.stays_in_region(&seg));
    }
    Ok(AcceptanceReport {
        accepted,
        trials: n_trials,
        rate: stats::wilson(accepted, n_trials),
    })
}

/// Open tube `{ sup_k |S(t_k) − center_k| < radius }`, tested on grid indices
/// from the conditioning time onward.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    /// Row-major `(N+1) × n` centre path.
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Tube {
    /// Tube around the constant path at `x`.
    pub fn constant(x: &[f64], grid: &TimeGrid, radius: f64) -> Self {
        let center = x.iter().copied().cycle().take(x.len() * (grid.steps() + 1)).collect();
        Self { center, radius }
    }

    fn contains_from(&self, seg: &Segment, k0: usize) -> bool {
        let n = seg.n;
        (0..seg.len()).all(|i| {
            let k = k0 + i;
            math::dist(seg.point(i), &self.center[k * n..(k + 1) * n]) < self.radius
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BayesOutcome {
    Consistent,
    Inconsistent,
    /// Too few matched or accepted paths for a verdict.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesReport {
    pub t_index: usize,
    /// Pre-model ratio `#(O ∩ tube) / #O` among prefix-matched paths.
    pub ratio_estimate: f64,
    pub ratio_sample: usize,
    /// Tube frequency of conditioned continuations from the observed prefix.
    pub conditioned_estimate: f64,
    pub conditioned_sample: usize,
    pub z_score: f64,
    pub outcome: BayesOutcome,
}

/// Minimum sample size behind each estimator for a verdict.
pub const BAYES_MIN_SAMPLE: usize = 30;
/// Fraction of pre-model paths kept as prefix neighbours.
pub const BAYES_MATCH_FRACTION: f64 = 0.02;

/// Empirical check of `P(G | F_t) = P₀(G ∩ {stay in O} | F_t) / P₀(stay in O | F_t)`.
///
/// An observed prefix up to `t_index` is drawn from the conditioned model.
/// Pre-model paths from `s0` are matched to it by the log-distance of their
/// prefix endpoints among those whose prefix stayed in `O` (the future law
/// depends on the prefix only through its endpoint).
pub fn bayes_ratio_check(
    sampler: &ConditionedSampler,
    grid: &TimeGrid,
    s0: &[f64],
    t_index: usize,
    tube: &Tube,
    n_paths: usize,
    rng: &mut RngStream,
) -> CoreResult<BayesReport> {
    if t_index > grid.steps() {
        return Err(domain("t_index beyond the grid"));
    }
    let n = sampler.n_assets();
    if tube.center.len() != n * (grid.steps() + 1) {
        return Err(domain("tube centre has wrong shape"));
    }
    let observed = sample_conditioned(sampler, grid, s0, rng)?;
    let anchor: Vec<f64> = observed.row(t_index).iter().map(|&x| math::ln(x)).collect();

    let root = rng.fork();
    let mut candidates: Vec<(f64, bool, bool)> = Vec::new();
    for i in 0..n_paths {
        let seg = sampler.pre_model.continuation(grid, 0.0, s0, &mut root.substream(i as u64))?;
        if !(0..=t_index).all(|k| sampler.region.contains(seg.point(k))) {
            continue;
        }
        let end: Vec<f64> = seg.point(t_index).iter().map(|&x| math::ln(x)).collect();
        let future = Segment {
            n,
            times: seg.times[t_index..].to_vec(),
            prices: seg.prices[t_index * n..].to_vec(),
        };
        let in_o = sampler.stays_in_region(&future);
        let in_tube = in_o && tube.contains_from(&future, t_index);
        candidates.push((math::dist(&end, &anchor), in_o, in_tube));
    }
    let m = if t_index == 0 {
        candidates.len()
    } else {
        (math::ceil(BAYES_MATCH_FRACTION * n_paths as f64) as usize).min(candidates.len())
    };
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let matched = &candidates[..m];
    let in_o = matched.iter().filter(|c| c.1).count();
    let in_both = matched.iter().filter(|c| c.2).count();

    let b_count = in_o.max(BAYES_MIN_SAMPLE);
    let t0 = grid.t(t_index);
    let start = observed.row(t_index).to_vec();
    let mut hits = 0;
    for _ in 0..b_count {
        let seg = sampler.continuation(grid, t0, &start, rng)?;
        hits += usize::from(tube.contains_from(&seg, t_index));
    }

    let pa = if in_o > 0 { in_both as f64 / in_o as f64 } else { f64::NAN };
    let pb = hits as f64 / b_count as f64;
    let var = if in_o > 0 {
        pa * (1.0 - pa) / in_o as f64 + pb * (1.0 - pb) / b_count as f64
    } else {
        f64::NAN
    };
    let z = if var > 0.0 {
        (pa - pb).abs() / math::sqrt(var)
    } else if pa == pb {
        0.0
    } else {
        f64::INFINITY
    };
    let outcome = if in_o < BAYES_MIN_SAMPLE {
        BayesOutcome::Inconclusive
    } else if z < 3.0 {
        BayesOutcome::Consistent
    } else {
        BayesOutcome::Inconsistent
    };
    Ok(BayesReport {
        t_index,
        ratio_estimate: pa,
        ratio_sample: in_o,
        conditioned_estimate: pb,
        conditioned_sample: b_count,
        z_score: z,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::VolBounds;

    fn sampler(scale: f64, delta: f64, attempts: usize) -> ConditionedSampler {
        let vol = if scale == 0.0 {
            VolatilitySpec::constant(2, 2, vec![0.0; 4], VolBounds::new(0.0, 1.0).unwrap()).unwrap()
        } else {
            VolatilitySpec::scaled_identity(2, scale).unwrap()
        };
        ConditionedSampler::new(vol, DiversityRegion::new(delta, 2).unwrap(), attempts).unwrap()
    }

    #[test]
    fn zero_vol_accepts_first_attempt() {
        let s = sampler(0.0, 0.2, 5);
        let g = TimeGrid::new(1.0, 16).unwrap();
        let (p, rejected) = sample_conditioned_counted(&s, &g, &[1.0, 1.2], &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(rejected, 0);
        assert!(p.rows().all(|r| r == [1.0, 1.2]));
        let r = acceptance_rate(&s, &g, &[1.0, 1.2], 10, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(r.rate.estimate, 1.0);
    }

    #[test]
    fn start_outside_region() {
        let s = sampler(0.2, 0.2, 5);
        let g = TimeGrid::new(1.0, 16).unwrap();
        assert!(matches!(
            sample_conditioned(&s, &g, &[1.0, 9.0], &mut RngStream::new(1, 0)),
            Err(CoreError::Precondition(_))
        ));
    }

    #[test]
    fn empty_region_rate_zero() {
        let s = sampler(0.2, 0.5, 5);
        let g = TimeGrid::new(1.0, 16).unwrap();
        let r = acceptance_rate(&s, &g, &[1.0, 1.0], 50, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(r.accepted, 0);
    }

    #[test]
    fn too_rare_is_reported() {
        let s = sampler(3.0, 0.45, 3);
        let g = TimeGrid::new(1.0, 64).unwrap();
        let e = sample_conditioned(&s, &g, &[1.0, 1.0], &mut RngStream::new(1, 0)).unwrap_err();
        assert!(matches!(e, CoreError::AcceptanceTooRare { attempts: 3, .. }));
    }

    #[test]
    fn accepted_paths_stay_in_region_and_calls_differ() {
        let s = sampler(0.2, 0.2, 10_000);
        let g = TimeGrid::new(1.0, 64).unwrap();
        let mut rng = RngStream::new(9, 0);
        let a = sample_conditioned(&s, &g, &[1.0, 1.0], &mut rng).unwrap();
        let b = sample_conditioned(&s, &g, &[1.0, 1.0], &mut rng).unwrap();
        assert_ne!(a, b);
        for p in [&a, &b] {
            assert!(p.rows().all(|r| s.region().contains(r)));
        }
    }

    #[test]
    fn acceptance_decreases_with_vol() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let rates: Vec<f64> = [0.4, 0.7, 1.0]
            .iter()
            .map(|&v| {
                acceptance_rate(&sampler(v, 0.2, 1), &g, &[1.0, 1.0], 2000, &mut RngStream::new(4, 0))
                    .unwrap()
                    .rate
                    .estimate
            })
            .collect();
        assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
        assert!(rates[1] > 0.0 && rates[1] < 1.0);
    }

    #[test]
    fn bayes_trivial_cases() {
        let s = sampler(0.2, 0.2, 100_000);
        let g = TimeGrid::new(1.0, 32).unwrap();
        let wide = Tube::constant(&[1.0, 1.0], &g, f64::INFINITY);
        let r = bayes_ratio_check(&s, &g, &[1.0, 1.0], 16, &wide, 2000, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(r.ratio_estimate, 1.0);
        assert_eq!(r.conditioned_estimate, 1.0);
        assert_eq!(r.z_score, 0.0);

        let tube = Tube::constant(&[1.0, 1.0], &g, 0.25);
        let r = bayes_ratio_check(&s, &g, &[1.0, 1.0], 0, &tube, 3000, &mut RngStream::new(2, 1)).unwrap();
        assert_eq!(r.outcome, BayesOutcome::Consistent, "{r:?}");
    }
}
