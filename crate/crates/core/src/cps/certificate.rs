//! Node-by-node verification of an ε-consistent price system on a tilted
//! scenario tree, and its plain-text form.
//!
//! On the edge into a node the shadow price is the node's `S̃` (the tree
//! reveals the branch immediately), so the ratio bounds there are checked
//! against the extreme prices seen along that edge.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

use crate::cps::tree::{ShadowPrices, TiltedTree, MART_TOL};
use crate::error::{domain, CoreResult};
use crate::math;

pub const CERTIFICATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateStatus {
    Certified,
    Failed { node: usize, reason: String },
}

impl CertificateStatus {
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::Certified)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub time: f64,
    pub retired: bool,
    pub pivot: Vec<f64>,
    pub shadow: Vec<f64>,
    /// Original child weights; empty at leaves.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `|Σ q Δ| / max |Δ|`; zero at leaves.
    pub mart_residual: f64,
    /// `|S̃ − X|_∞ / max(1, |X|_∞)`.
    pub shadow_error: f64,
    /// Upper bound on `max (|S_t − S̃_t| − ε_t)` along the incoming edge.
    pub tube_slack: f64,
    /// Extremes of `S̃_i / S_i` along the incoming edge.
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    pub in_region: bool,
    pub relaxed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub eta: f64,
    pub delta: f64,
    pub n_assets: usize,
    pub status: CertificateStatus,
    pub max_mart_residual: f64,
    pub max_tube_slack: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub nodes: Vec<NodeRecord>,
}

/// Checks ratio bounds `1/(1+η) ≤ S̃_i/S_i ≤ 1+η`, `S̃ ∈ O(δ)`, the tube and
/// the martingale conditions at every node. The first offending node (in
/// breadth-first order) is reported.
pub fn cps_certificate(tilted: &TiltedTree, shadow: &ShadowPrices, eta: f64) -> CoreResult<Certificate> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(domain("eta must be positive"));
    }
    let tree = tilted.tree();
    let region = tree.params().region;
    let (lo_bound, hi_bound) = (1.0 / (1.0 + eta), 1.0 + eta);
    let mut nodes = Vec::with_capacity(tree.len());
    let mut status = CertificateStatus::Certified;
    for node in tree.nodes() {
        let id = node.id;
        let s = shadow.value(id).to_vec();
        let (mut ratio_lo, mut ratio_hi) = (1.0f64, 1.0f64);
        let mut tube_slack = f64::NEG_INFINITY;
        if let Some(edge) = &node.edge {
            for i in 0..s.len() {
                ratio_lo = ratio_lo.min(s[i] / edge.price_max[i]);
                ratio_hi = ratio_hi.max(s[i] / edge.price_min[i]);
            }
            let gap = math::dist(&s, &node.pivot);
            tube_slack = edge.tube_slack + gap;
        }
        let tilt = tilted.tilt(id);
        let record = NodeRecord {
            id,
            parent: node.parent,
            depth: node.depth,
            time: node.time,
            retired: node.retired,
            pivot: node.pivot.clone(),
            in_region: region.contains(&s),
            shadow: s,
            p: if tilt.is_some() { tree.child_weights(id) } else { Vec::new() },
            q: tilt.map(|t| t.q.clone()).unwrap_or_default(),
            mart_residual: tilt.map_or(0.0, |t| t.scaled_residual),
            shadow_error: shadow.error(id),
            tube_slack,
            ratio_lo,
            ratio_hi,
            relaxed: tilt.is_some_and(|t| t.relaxation.is_some()),
        };
        if status.is_certified() {
            if let Some(reason) = violation(&record, lo_bound, hi_bound) {
                status = CertificateStatus::Failed { node: id, reason };
            }
        }
        nodes.push(record);
    }
    let fold = |f: fn(&NodeRecord) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        nodes.iter().map(f).fold(init, pick)
    };
    Ok(Certificate {
        eta,
        delta: region.delta(),
        n_assets: tree.n_assets(),
        status,
        max_mart_residual: fold(|r| r.mart_residual, 0.0, f64::max),
        max_tube_slack: fold(|r| r.tube_slack, f64::NEG_INFINITY, f64::max),
        min_ratio: fold(|r| r.ratio_lo, f64::INFINITY, f64::min),
        max_ratio: fold(|r| r.ratio_hi, f64::NEG_INFINITY, f64::max),
        nodes,
    })
}

fn violation(r: &NodeRecord, lo: f64, hi: f64) -> Option<String> {
    if !r.q.is_empty() {
        if r.q.iter().any(|&q| !(q > 0.0)) {
            return Some("non-positive tilted weight".to_string());
        }
        let sum: f64 = r.q.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Some(format!("tilted weights sum to {sum:?}"));
        }
        if !(r.mart_residual <= MART_TOL) {
            return Some(format!("martingale residual {:?}", r.mart_residual));
        }
    }
    if !(r.shadow_error <= MART_TOL) {
        return Some(format!("shadow price misses the pivot by {:?}", r.shadow_error));
    }
    if !(r.tube_slack <= 0.0) && r.parent.is_some() {
        return Some(format!("tube slack {:?}", r.tube_slack));
    }
    if !(r.ratio_lo >= lo && r.ratio_hi <= hi) {
        return Some(format!("ratio range [{:?}, {:?}] outside [{lo:?}, {hi:?}]", r.ratio_lo, r.ratio_hi));
    }
    if !r.in_region {
        return Some("shadow price outside O(delta)".to_string());
    }
    None
}

fn join(xs: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:?}");
    }
    s
}

impl Certificate {
    /// Key-value text with one `[node i]` section per node. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "certificate_version = {CERTIFICATE_VERSION}");
        let _ = writeln!(s, "eta = {:?}", self.eta);
        let _ = writeln!(s, "delta = {:?}", self.delta);
        let _ = writeln!(s, "n_assets = {}", self.n_assets);
        match &self.status {
            CertificateStatus::Certified => {
                let _ = writeln!(s, "status = certified");
            }
            CertificateStatus::Failed { node, reason } => {
                let _ = writeln!(s, "status = failed");
                let _ = writeln!(s, "failed_node = {node}");
                let _ = writeln!(s, "failed_reason = {}", reason.replace('\n', " "));
            }
        }
        let _ = writeln!(s, "max_mart_residual = {:?}", self.max_mart_residual);
        let _ = writeln!(s, "max_tube_slack = {:?}", self.max_tube_slack);
        let _ = writeln!(s, "min_ratio = {:?}", self.min_ratio);
        let _ = writeln!(s, "max_ratio = {:?}", self.max_ratio);
        let _ = writeln!(s, "nodes = {}", self.nodes.len());
        for r in &self.nodes {
            let _ = writeln!(s, "\n[node {}]", r.id);
            match r.parent {
                Some(p) => {
                    let _ = writeln!(s, "parent = {p}");
                }
                None => {
                    let _ = writeln!(s, "parent = none");
                }
            }
            let _ = writeln!(s, "depth = {}", r.depth);
            let _ = writeln!(s, "time = {:?}", r.time);
            let _ = writeln!(s, "retired = {}", r.retired);
            let _ = writeln!(s, "pivot = {}", join(&r.pivot));
            let _ = writeln!(s, "shadow = {}", join(&r.shadow));
            let _ = writeln!(s, "p = {}", join(&r.p));
            let _ = writeln!(s, "q = {}", join(&r.q));
            let _ = writeln!(s, "mart_residual = {:?}", r.mart_residual);
            let _ = writeln!(s, "shadow_error = {:?}", r.shadow_error);
            let _ = writeln!(s, "tube_slack = {:?}", r.tube_slack);
            let _ = writeln!(s, "ratio_lo = {:?}", r.ratio_lo);
            let _ = writeln!(s, "ratio_hi = {:?}", r.ratio_hi);
            let _ = writeln!(s, "in_region = {}", r.in_region);
            let _ = writeln!(s, "relaxed = {}", r.relaxed);
        }
        s
    }

    pub fn parse(text: &str) -> CoreResult<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
        let mut header = Fields::default();
        while let Some(line) = lines.peek() {
            if line.starts_with('[') {
                break;
            }
            header.push(lines.next().unwrap_or_default())?;
        }
        let version: u32 = header.get("certificate_version")?;
        if version != CERTIFICATE_VERSION {
            return Err(domain(format!("unsupported certificate version {version}")));
        }
        let status = match header.raw("status")? {
            "certified" => CertificateStatus::Certified,
            "failed" => CertificateStatus::Failed {
                node: header.get("failed_node")?,
                reason: header.raw("failed_reason")?.to_string(),
            },
            other => return Err(domain(format!("unknown status {other}"))),
        };
        let count: usize = header.get("nodes")?;
        let mut nodes = Vec::with_capacity(count);
        while let Some(line) = lines.next() {
            let id = line
                .strip_prefix("[node ")
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| domain(format!("expected a node header, found {line}")))?;
            let id: usize = id.parse().map_err(|_| domain(format!("bad node id {id}")))?;
            let mut f = Fields::default();
            while let Some(line) = lines.peek() {
                if line.starts_with('[') {
                    break;
                }
                f.push(lines.next().unwrap_or_default())?;
            }
            nodes.push(NodeRecord {
                id,
                parent: match f.raw("parent")? {
                    "none" => None,
                    p => Some(p.parse().map_err(|_| domain(format!("bad parent {p}")))?),
                },
                depth: f.get("depth")?,
                time: f.get("time")?,
                retired: f.get("retired")?,
                pivot: f.list("pivot")?,
                shadow: f.list("shadow")?,
                p: f.list("p")?,
                q: f.list("q")?,
                mart_residual: f.get("mart_residual")?,
                shadow_error: f.get("shadow_error")?,
                tube_slack: f.get("tube_slack")?,
                ratio_lo: f.get("ratio_lo")?,
                ratio_hi: f.get("ratio_hi")?,
                in_region: f.get("in_region")?,
                relaxed: f.get("relaxed")?,
            });
        }
        if nodes.len() != count {
            return Err(domain(format!("expected {count} nodes, found {}", nodes.len())));
        }
        Ok(Self {
            eta: header.get("eta")?,
            delta: header.get("delta")?,
            n_assets: header.get("n_assets")?,
            status,
            max_mart_residual: header.get("max_mart_residual")?,
            max_tube_slack: header.get("max_tube_slack")?,
            min_ratio: header.get("min_ratio")?,
            max_ratio: header.get("max_ratio")?,
            nodes,
        })
    }
}

#[derive(Default)]
struct Fields<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Fields<'a> {
    fn push(&mut self, line: &'a str) -> CoreResult<()> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| domain(format!("expected key = value, found {line}")))?;
        self.0.push((k.trim(), v.trim()));
        Ok(())
    }

    fn raw(&self, key: &str) -> CoreResult<&'a str> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| domain(format!("missing field {key}")))
    }

    fn get<T: FromStr>(&self, key: &str) -> CoreResult<T> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| domain(format!("bad value for {key}: {v}")))
    }

    fn list(&self, key: &str) -> CoreResult<Vec<f64>> {
        self.raw(key)?
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| domain(format!("bad number in {key}: {x}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cps::tree::{build_scenario_tree, martingale_tilt, shadow_price, TreeParams};
    use crate::grid::TimeGrid;
    use crate::region::DiversityRegion;
    use crate::rng::RngStream;
    use crate::sde::ArctanMarket;
    use proptest::prelude::*;

    fn certificate(seed: u64) -> Certificate {
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let region = DiversityRegion::new(0.15, 2).unwrap();
        let params = TreeParams::new(2, 5, 0.01, region);
        let tree = build_scenario_tree(&ArctanMarket, &grid, &[1.0, 1.0], &params, &RngStream::new(seed, 0)).unwrap();
        let tilted = martingale_tilt(tree, 0.5, 0).unwrap();
        let sp = shadow_price(&tilted).unwrap();
        cps_certificate(&tilted, &sp, 0.01).unwrap()
    }

    #[test]
    fn arctan_tree_is_certified() {
        let c = certificate(3);
        assert_eq!(c.status, CertificateStatus::Certified);
        assert!(c.min_ratio >= 1.0 / 1.01 && c.max_ratio <= 1.01);
        assert!(c.max_tube_slack <= 0.0);
        assert_eq!(c.nodes.len(), 31);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let c = certificate(5);
        let text = c.to_text();
        let back = Certificate::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
        for (a, b) in back.nodes.iter().zip(&c.nodes) {
            for (x, y) in a.shadow.iter().zip(&b.shadow) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn tighter_eta_fails_with_a_node() {
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let region = DiversityRegion::new(0.15, 2).unwrap();
        let params = TreeParams::new(2, 5, 0.01, region);
        let tree = build_scenario_tree(&ArctanMarket, &grid, &[1.0, 1.0], &params, &RngStream::new(3, 0)).unwrap();
        let tilted = martingale_tilt(tree, 0.5, 0).unwrap();
        let sp = shadow_price(&tilted).unwrap();
        let c = cps_certificate(&tilted, &sp, 1e-5).unwrap();
        match &c.status {
            CertificateStatus::Failed { node, reason } => {
                assert!(*node > 0);
                assert!(reason.contains("ratio"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        let back = Certificate::parse(&c.to_text()).unwrap();
        assert_eq!(back.status, c.status);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(Certificate::parse("").is_err());
        assert!(Certificate::parse("certificate_version = 2\n").is_err());
        let text = certificate(5).to_text().replace("nodes = 31", "nodes = 30");
        assert!(Certificate::parse(&text).is_err());
    }

    proptest! {
        // |s̃ − s| ≤ η/(1+η)·min s in sup norm gives both ratio bounds
        #[test]
        fn tube_radius_implies_ratio_bounds(
            s in proptest::collection::vec(0.01f64..100.0, 1..5),
            u in proptest::collection::vec(-1.0f64..1.0, 5),
            eta in 1e-4f64..1.0,
        ) {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let r = eta / (1.0 + eta) * lo;
            for (i, &si) in s.iter().enumerate() {
                let st = si + r * u[i];
                let ratio = st / si;
                prop_assert!(ratio >= 1.0 / (1.0 + eta) * (1.0 - 1e-12));
                prop_assert!(ratio <= (1.0 + eta) * (1.0 + 1e-12));
            }
        }
    }
}
