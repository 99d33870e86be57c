//! Oracle-driven descent.
//!
//! Starting at the root, each round forms the candidate boxes of the current
//! node (children of its neighbors), scans the singleton candidates exactly,
//! and asks the oracle about the centers of the rest with
//! `r = max T2` and `c·r = max T1`. A returned center moves the descent one
//! level down; `No` ends it. When no non-singleton candidate remains the
//! scanned singletons already contain the nearest neighbor.
//!
//! Ending on `No` (or on the far-root test) returns the nearest point among
//! the candidate centers and their children's centers. The child of the
//! nearest neighbor's box is far enough from the query for every one of its
//! points to be a (1 + ε)-approximation, and its center is among those
//! scanned.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Metric, PointSet};
use crate::oracle::{Candidate, NearOracle, OracleAnswer, OracleQuery};
use crate::split_tree::{NodeId, SplitTree, Thresholds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    FarRoot,
    OracleNo,
    LeafScan,
}

impl Terminal {
    pub fn name(self) -> &'static str {
        match self {
            Terminal::FarRoot => "far-root",
            Terminal::OracleNo => "oracle-no",
            Terminal::LeafScan => "leaf-scan",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResult {
    /// Index of the answer among the tree's distinct points.
    pub answer: u32,
    /// Ids of every input point at the answer's location.
    pub answer_ids: Vec<u64>,
    pub answer_distance: f64,
    pub oracle_invocations: usize,
    pub descent_path: Vec<NodeId>,
    pub terminal: Terminal,
}

/// Children of every neighbor of `node`; a leaf neighbor contributes itself.
pub fn candidate_boxes(tree: &SplitTree, node: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    for &m in &tree.nbr().get(node).members {
        let member = tree.node(m);
        if member.is_leaf() {
            out.push(m);
        } else {
            out.extend_from_slice(&member.children);
        }
    }
    out
}

/// Oracle range and factor for a candidate list: `r = max T2`,
/// `c = max T1 / r`.
pub fn oracle_params(thresholds: &[Thresholds]) -> Result<(f64, f64)> {
    if thresholds.is_empty() {
        return Err(Error::InvalidOracleQuery("no candidates".into()));
    }
    let r = thresholds.iter().map(|t| t.t2).fold(0.0, f64::max);
    let reach = thresholds.iter().map(|t| t.t1).fold(0.0, f64::max);
    if !(r > 0.0) {
        return Err(Error::Invariant("oracle range is zero".into()));
    }
    let c = reach / r;
    if !(c > 1.0) {
        return Err(Error::Invariant(format!(
            "oracle factor {c} is not above 1"
        )));
    }
    Ok((r, c))
}

/// Exact nearest neighbor by linear scan; smallest id on ties.
pub fn brute_force_nn(points: &PointSet, q: &[f64], metric: Metric) -> Result<(u32, f64)> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if q.len() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            found: q.len(),
        });
    }
    let mut best = Nearest::default();
    for idx in points.indices() {
        best.offer(idx, points.id(idx), metric.dist(points.coords(idx), q));
    }
    Ok((best.idx, best.dist))
}

#[derive(Clone, Copy, Debug)]
struct Nearest {
    idx: u32,
    id: u64,
    dist: f64,
}

impl Default for Nearest {
    fn default() -> Self {
        Nearest {
            idx: u32::MAX,
            id: u64::MAX,
            dist: f64::INFINITY,
        }
    }
}

impl Nearest {
    #[inline]
    fn offer(&mut self, idx: u32, id: u64, dist: f64) {
        if dist < self.dist || (dist == self.dist && id < self.id) {
            *self = Nearest { idx, id, dist };
        }
    }
}

/// Which containment fact an audit step checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    /// The nearest neighbor is among the points of the current neighbor set.
    LoopHead,
    /// The nearest neighbor is inside the neighbor set of the box the
    /// descent just moved to.
    AfterDescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuditStep {
    pub kind: AuditKind,
    pub node: NodeId,
    pub holds: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Audit {
    pub nn_distance: f64,
    pub steps: Vec<AuditStep>,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.holds)
    }

    fn check(&mut self, tree: &SplitTree, q: &[f64], node: NodeId, kind: AuditKind) {
        let metric = tree.metric();
        let holds = tree.nbr().get(node).members.iter().any(|&m| {
            tree.node_points(m)
                .iter()
                .any(|&p| metric.dist(tree.points().coords(p), q) == self.nn_distance)
        });
        self.steps.push(AuditStep { kind, node, holds });
    }
}

/// Approximate nearest neighbor of `q`.
pub fn query<O: NearOracle + ?Sized>(
    tree: &SplitTree,
    q: &[f64],
    oracle: &O,
) -> Result<QueryResult> {
    descend(tree, q, oracle, None)
}

/// [`query`] with the containment audit enabled. The exact nearest
/// neighbor is found by brute force first.
pub fn query_audited<O: NearOracle + ?Sized>(
    tree: &SplitTree,
    q: &[f64],
    oracle: &O,
) -> Result<(QueryResult, Audit)> {
    let (_, nn_distance) = brute_force_nn(tree.points(), q, tree.metric())?;
    let mut audit = Audit {
        nn_distance,
        steps: Vec::new(),
    };
    let result = descend(tree, q, oracle, Some(&mut audit))?;
    Ok((result, audit))
}

fn descend<O: NearOracle + ?Sized>(
    tree: &SplitTree,
    q: &[f64],
    oracle: &O,
    mut audit: Option<&mut Audit>,
) -> Result<QueryResult> {
    if q.len() != tree.dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.dim(),
            found: q.len(),
        });
    }
    let points = tree.points();
    let metric = tree.metric();
    let epsilon = tree.epsilon();
    let mut best = Nearest::default();
    let offer = |best: &mut Nearest, node: NodeId| {
        let c = tree.node(node).center;
        best.offer(c, points.id(c), metric.dist(points.coords(c), q));
    };
    let finish = |best: Nearest, invocations: usize, path: Vec<NodeId>, terminal| QueryResult {
        answer: best.idx,
        answer_ids: tree.original_ids(best.idx).to_vec(),
        answer_distance: best.dist,
        oracle_invocations: invocations,
        descent_path: path,
        terminal,
    };

    let root = tree.root();
    if root.is_singleton() {
        offer(&mut best, 0);
        return Ok(finish(best, 0, vec![0], Terminal::LeafScan));
    }
    if metric.dist(points.coords(root.center), q) >= root.thresholds(epsilon).t2 {
        offer(&mut best, 0);
        for &c in &root.children {
            offer(&mut best, c);
        }
        return Ok(finish(best, 0, vec![0], Terminal::FarRoot));
    }

    let mut current: NodeId = 0;
    let mut path = vec![0];
    let mut invocations = 0;
    loop {
        if let Some(a) = audit.as_deref_mut() {
            a.check(tree, q, current, AuditKind::LoopHead);
        }
        let mut open: Vec<NodeId> = Vec::new();
        for b in candidate_boxes(tree, current) {
            if tree.node(b).is_singleton() {
                offer(&mut best, b);
            } else {
                open.push(b);
            }
        }
        if open.is_empty() {
            return Ok(finish(best, invocations, path, Terminal::LeafScan));
        }

        let limits: Vec<Thresholds> = open
            .iter()
            .map(|&b| tree.node(b).thresholds(epsilon))
            .collect();
        let (r, c) = oracle_params(&limits)?;
        let request = OracleQuery {
            candidates: open
                .iter()
                .map(|&b| {
                    let center = tree.node(b).center;
                    Candidate {
                        id: center as u64,
                        coords: points.coords(center),
                    }
                })
                .collect(),
            query: q,
            r,
            c,
            metric,
        };
        invocations += 1;
        match oracle.answer(&request) {
            OracleAnswer::No => {
                for &b in &open {
                    offer(&mut best, b);
                    for &child in &tree.node(b).children {
                        offer(&mut best, child);
                    }
                }
                return Ok(finish(best, invocations, path, Terminal::OracleNo));
            }
            OracleAnswer::Point(id) => {
                let next = open
                    .iter()
                    .copied()
                    .find(|&b| tree.node(b).center as u64 == id)
                    .ok_or_else(|| {
                        Error::Invariant(format!("oracle returned non-candidate point {id}"))
                    })?;
                current = next;
                path.push(next);
                if let Some(a) = audit.as_deref_mut() {
                    a.check(tree, q, current, AuditKind::AfterDescent);
                }
            }
        }
    }
}
