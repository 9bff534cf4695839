//! Finite scenario trees of the random walk with retirement, their
//! martingale re-weighting and the resulting shadow prices.
//!
//! Every node holds a pivot `X` at a stopping time. Its children are
//! independent continuations of the model from `(τ, X)`, each followed
//! until it leaves the `ε/2` ball around `X` or reaches the horizon.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cps::epsilon::EpsilonRule;
use crate::cps::tilt::{tilt_node, TiltParams, TiltProblem, TiltSolution};
use crate::cps::walk::{Polyline, StoppingRule};
use crate::error::{domain, CoreError, CoreResult};
use crate::grid::TimeGrid;
use crate::lp;
use crate::math;
use crate::region::DiversityRegion;
use crate::rng::RngStream;
use crate::sde::MarketModel;

/// Tolerance for `|S̃ − X| / max(1, |X|_∞)` at internal nodes.
pub const MART_TOL: f64 = 1e-10;

/// What the price did along the edge into a node, relative to that node's
/// pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReport {
    /// `max (|S_t − X_child| − ε_t)` over the edge.
    pub tube_slack: f64,
    /// Coordinatewise minimum of `S` along the edge.
    pub price_min: Vec<f64>,
    pub price_max: Vec<f64>,
    pub points: usize,
}

/// One exit of the walk from a pivot.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Edge {
    pub time: f64,
    pub pivot: Vec<f64>,
    pub eps: f64,
    pub retired: bool,
    pub report: EdgeReport,
}

/// Runs a continuation from `(t0, pivot)` until the first exit from the
/// `ε/2` ball, with `ε` the running minimum of `eps0` and the clamped rule.
#[allow(clippy::too_many_arguments)]
pub(crate) fn walk_edge(
    model: &dyn MarketModel,
    grid: &TimeGrid,
    t0: f64,
    pivot: &[f64],
    eps0: f64,
    rule: &EpsilonRule,
    stopping: StoppingRule,
    rng: &mut RngStream,
) -> CoreResult<Edge> {
    let n = pivot.len();
    let seg = model.continuation(grid, t0, pivot, rng)?;
    let mut eps = Vec::with_capacity(seg.len());
    eps.push(eps0.min(rule.clamped(pivot)?));
    let mut left_region = false;
    for k in 1..seg.len() {
        let prev = eps[k - 1];
        match rule.clamped(seg.point(k)) {
            Ok(v) => eps.push(prev.min(v)),
            Err(_) => {
                // outside O the exit must already have happened on this step
                eps.push(prev);
                left_region = true;
                break;
            }
        }
    }
    let knots = eps.len();
    let line = Polyline {
        n,
        times: &seg.times[..knots],
        points: &seg.prices[..knots * n],
        eps: &eps,
    };
    let last = seg.len() - 1;
    let exit = match stopping {
        StoppingRule::Interpolated => line.first_exit(pivot, 0, 0.0),
        StoppingRule::GridIndex => (1..knots)
            .find(|&k| math::dist(line.point(k), pivot) > 0.5 * eps[k])
            .map(|k| (k - 1, 1.0)),
    };
    let exit = exit.filter(|&(k, s)| (k as f64 + s) < last as f64);
    let (end_seg, end_frac, child, child_eps, retired) = match exit {
        Some((k, s)) => {
            let (k, s) = if s >= 1.0 { (k + 1, 0.0) } else { (k, s) };
            (k, s, line.at(k, s), line.eps_at(k, s), false)
        }
        None if left_region => return Err(domain("continuation left O(delta) without leaving the tube")),
        None => (last, 0.0, pivot.to_vec(), eps[last], true),
    };
    let mut report = EdgeReport {
        tube_slack: f64::NEG_INFINITY,
        price_min: vec![f64::INFINITY; n],
        price_max: vec![f64::NEG_INFINITY; n],
        points: 0,
    };
    let mut visit = |x: &[f64], e: f64| {
        report.tube_slack = report.tube_slack.max(math::dist(x, &child) - e);
        for i in 0..n {
            report.price_min[i] = report.price_min[i].min(x[i]);
            report.price_max[i] = report.price_max[i].max(x[i]);
        }
        report.points += 1;
    };
    for k in 0..=end_seg {
        visit(line.point(k), eps[k]);
    }
    if end_frac > 0.0 {
        visit(&line.at(end_seg, end_frac), line.eps_at(end_seg, end_frac));
    }
    Ok(Edge {
        time: if retired { grid.horizon() } else { line.time_at(end_seg, end_frac) },
        pivot: child,
        eps: child_eps,
        retired,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub depth: usize,
    pub branching: usize,
    pub eta: f64,
    pub region: DiversityRegion,
    pub stopping: StoppingRule,
    /// Fresh child draws allowed per node when the hull condition fails.
    pub max_redraws: usize,
}

impl TreeParams {
    pub fn new(depth: usize, branching: usize, eta: f64, region: DiversityRegion) -> Self {
        Self {
            depth,
            branching,
            eta,
            region,
            stopping: StoppingRule::Interpolated,
            max_redraws: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub time: f64,
    pub pivot: Vec<f64>,
    /// Tube radius at the node.
    pub eps: f64,
    /// The node was reached by retirement (`τ = T`, `Δ = 0`).
    pub retired: bool,
    /// `X − X_parent`; zero at the root.
    pub delta: Vec<f64>,
    /// `None` at the root.
    pub edge: Option<EdgeReport>,
    pub children: Vec<usize>,
    /// Child sets discarded because their increments failed the hull test.
    pub redraws: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    n: usize,
    params: TreeParams,
    grid: TimeGrid,
    nodes: Vec<TreeNode>,
}

impl ScenarioTree {
    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Nodes in breadth-first order; children always follow their parent.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Uniform original child weights.
    pub fn child_weights(&self, id: usize) -> Vec<f64> {
        let k = self.nodes[id].children.len();
        vec![1.0 / k as f64; k]
    }

    pub fn max_tube_slack(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| n.edge.as_ref())
            .map(|e| e.tube_slack)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn total_redraws(&self) -> usize {
        self.nodes.iter().map(|n| n.redraws).sum()
    }
}

/// Grows a tree of the given depth from `s0` at time 0. Node `i` draws its
/// children from `rng.substream(i)`, redraw `r` from `.substream(r)` of that.
pub fn build_scenario_tree(
    model: &dyn MarketModel,
    grid: &TimeGrid,
    s0: &[f64],
    params: &TreeParams,
    rng: &RngStream,
) -> CoreResult<ScenarioTree> {
    let n = model.n_assets();
    if s0.len() != n || params.region.n() != n {
        return Err(domain("initial price, model and region dimensions differ"));
    }
    if params.branching < 2 {
        return Err(domain("branching must be at least 2"));
    }
    let rule = EpsilonRule::new(params.eta, params.region)?;
    let root_eps = rule.clamped(s0)?;
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        depth: 0,
        time: 0.0,
        pivot: s0.to_vec(),
        eps: root_eps,
        retired: false,
        delta: vec![0.0; n],
        edge: None,
        children: Vec::new(),
        redraws: 0,
    }];
    let mut next = 0;
    while next < nodes.len() {
        let id = next;
        next += 1;
        if nodes[id].retired || nodes[id].depth >= params.depth {
            continue;
        }
        let stream = rng.substream(id as u64);
        let mut redraws = 0;
        let edges = loop {
            let attempt = stream.substream(redraws as u64);
            let node = &nodes[id];
            let edges = (0..params.branching)
                .map(|k| {
                    let mut r = attempt.substream(k as u64);
                    walk_edge(model, grid, node.time, &node.pivot, node.eps, &rule, params.stopping, &mut r)
                })
                .collect::<CoreResult<Vec<Edge>>>()?;
            let deltas: Vec<f64> = edges
                .iter()
                .flat_map(|e| e.pivot.iter().zip(&node.pivot).map(|(a, b)| a - b))
                .collect();
            if deltas.iter().all(|&d| d == 0.0) || lp::origin_in_interior(&deltas, n).interior {
                break edges;
            }
            redraws += 1;
            if redraws > params.max_redraws {
                return Err(CoreError::NoTilt {
                    node: id,
                    reason: format!("increment hull excludes the origin after {} redraws", params.max_redraws),
                });
            }
        };
        let depth = nodes[id].depth + 1;
        for e in edges {
            let child = nodes.len();
            let delta = e.pivot.iter().zip(&nodes[id].pivot).map(|(a, b)| a - b).collect();
            nodes.push(TreeNode {
                id: child,
                parent: Some(id),
                depth,
                time: e.time,
                pivot: e.pivot,
                eps: e.eps,
                retired: e.retired,
                delta,
                edge: Some(e.report),
                children: Vec::new(),
                redraws: 0,
            });
            nodes[id].children.push(child);
        }
        nodes[id].redraws = redraws;
    }
    Ok(ScenarioTree {
        n,
        params: *params,
        grid: *grid,
        nodes,
    })
}

/// A scenario tree with martingale weights at every internal node.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedTree {
    tree: ScenarioTree,
    tilts: Vec<Option<TiltSolution>>,
    retirement_mass_floor: f64,
    budget_n: i32,
}

impl TiltedTree {
    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    /// `None` at leaves.
    pub fn tilt(&self, id: usize) -> Option<&TiltSolution> {
        self.tilts[id].as_ref()
    }

    pub fn retirement_mass_floor(&self) -> f64 {
        self.retirement_mass_floor
    }

    pub fn budget_n(&self) -> i32 {
        self.budget_n
    }

    pub fn max_scaled_residual(&self) -> f64 {
        self.tilts.iter().flatten().map(|t| t.scaled_residual).fold(0.0, f64::max)
    }

    pub fn relaxed_nodes(&self) -> usize {
        self.tilts.iter().flatten().filter(|t| t.relaxation.is_some()).count()
    }
}

/// Tilts every internal node; the budget exponent at depth `d` is
/// `budget_n + d`.
pub fn martingale_tilt(tree: ScenarioTree, retirement_mass_floor: f64, budget_n: i32) -> CoreResult<TiltedTree> {
    let n = tree.n;
    let mut tilts = Vec::with_capacity(tree.len());
    for node in tree.nodes() {
        if node.is_leaf() {
            tilts.push(None);
            continue;
        }
        let deltas: Vec<f64> = node.children.iter().flat_map(|&c| tree.node(c).delta.iter().copied()).collect();
        let retirement: Vec<bool> = node.children.iter().map(|&c| tree.node(c).retired).collect();
        let p = tree.child_weights(node.id);
        let problem = TiltProblem {
            dim: n,
            deltas: &deltas,
            p: &p,
            retirement: &retirement,
        };
        let params = TiltParams {
            retirement_mass_floor,
            budget_exponent: budget_n + node.depth as i32,
        };
        tilts.push(Some(tilt_node(&problem, &params, node.id)?));
    }
    Ok(TiltedTree {
        tree,
        tilts,
        retirement_mass_floor,
        budget_n,
    })
}

/// Shadow prices `S̃ = E_Q[X_leaf | node]` by backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowPrices {
    n: usize,
    values: Vec<f64>,
    /// `|S̃ − X|_∞ / max(1, |X|_∞)` per node.
    errors: Vec<f64>,
}

impl ShadowPrices {
    pub fn value(&self, id: usize) -> &[f64] {
        &self.values[id * self.n..(id + 1) * self.n]
    }

    pub fn error(&self, id: usize) -> f64 {
        self.errors[id]
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Backward induction over the tilted tree. Internal values must reproduce
/// the pivots within [`MART_TOL`].
pub fn shadow_price(tilted: &TiltedTree) -> CoreResult<ShadowPrices> {
    let tree = &tilted.tree;
    let n = tree.n;
    let mut values = vec![0.0; tree.len() * n];
    let mut errors = vec![0.0; tree.len()];
    for node in tree.nodes().iter().rev() {
        let id = node.id;
        let mut v = vec![0.0; n];
        match &tilted.tilts[id] {
            None => v.copy_from_slice(&node.pivot),
            Some(t) => {
                for (&c, &q) in node.children.iter().zip(&t.q) {
                    for i in 0..n {
                        v[i] += q * values[c * n + i];
                    }
                }
            }
        }
        let diff: Vec<f64> = v.iter().zip(&node.pivot).map(|(a, b)| a - b).collect();
        let err = sup_norm(&diff) / sup_norm(&node.pivot).max(1.0);
        if err > MART_TOL {
            return Err(CoreError::NumericalTilt { node: id, residual: err });
        }
        errors[id] = err;
        values[id * n..(id + 1) * n].copy_from_slice(&v);
    }
    Ok(ShadowPrices { n, values, errors })
}
