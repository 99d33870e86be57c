//! Box split tree construction.
//!
//! The tree is grown with a two-level heap discipline: every growing leaf
//! owns a primary max-heap of pending sub-boxes keyed by side length, and a
//! secondary heap holds the top of each primary heap. Each iteration splits
//! the globally longest pending box. Once the longest box left in an owner's
//! heap is short enough relative to the owner, every box in that heap becomes
//! a child node and starts a heap of its own.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, CubicalBox, Metric, PointSet};
use crate::nbr::NbrIndex;

pub type NodeId = u32;

/// Enclosing-ball radius of a box (Est).
///
/// For two or more points this is the exact diameter. A singleton takes the
/// smallest maximum distance to any of its neighbor boxes.
pub fn est(ids: &[u32], nbr_view: &[&[u32]], points: &PointSet, metric: Metric) -> Result<f64> {
    match ids.len() {
        0 => Err(Error::EmptyPointSet),
        1 => nbr_view
            .iter()
            .map(|other| geometry::dmax_between(ids, other, points, metric))
            .try_fold(None::<f64>, |acc, d| {
                let d = d?;
                Ok::<_, Error>(Some(acc.map_or(d, |a: f64| a.min(d))))
            })?
            .ok_or_else(|| Error::Invariant("singleton box without neighbors".into())),
        _ => geometry::diameter(ids, points, metric),
    }
}

/// The far thresholds `T1 = (1 + 2/ε)·est` and `T2 = est + (1 + 2/ε)·rmax`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub t1: f64,
    pub t2: f64,
}

pub fn thresholds(est: f64, rmax: f64, epsilon: f64) -> Result<Thresholds> {
    check_epsilon(epsilon)?;
    let scale = 1.0 + 2.0 / epsilon;
    Ok(Thresholds {
        t1: scale * est,
        t2: est + scale * rmax,
    })
}

/// Side-length test guaranteeing `rmax < 2/(2+ε) · est` for the owner:
/// `top_len < 2/((2+ε)·d) · parent_len`.
pub fn is_split_fine(parent_len: f64, top_len: f64, epsilon: f64, dim: usize) -> bool {
    top_len < 2.0 / ((2.0 + epsilon) * dim as f64) * parent_len
}

/// Upper bound on `rmax / est` at every internal node.
#[inline]
pub fn fineness_ratio(epsilon: f64) -> f64 {
    2.0 / (2.0 + epsilon)
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Depth, root = 0.
    pub level: u32,
    /// Minimal cubical box: `[anchor_i, anchor_i + len]`.
    pub anchor: Vec<f64>,
    pub len: f64,
    /// Coordinate-wise maximum of the contained points.
    pub upper: Vec<f64>,
    /// Designated point inside the box (smallest index).
    pub center: u32,
    /// Enclosing-ball radius: exact diameter, 0 for a singleton.
    pub est: f64,
    /// Largest `est` over the children, 0 for a leaf.
    pub rmax: f64,
    /// Contained points, as a range of [`SplitTree::order`].
    pub start: u32,
    pub end: u32,
}

impl TreeNode {
    #[inline]
    pub fn size(&self) -> usize {
        (self.end - self.start) as usize
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    #[inline]
    pub fn is_singleton(&self) -> bool {
        self.size() == 1
    }

    pub fn thresholds(&self, epsilon: f64) -> Thresholds {
        let scale = 1.0 + 2.0 / epsilon;
        Thresholds {
            t1: scale * self.est,
            t2: self.est + scale * self.rmax,
        }
    }

    /// Smallest metric distance from `x` to the bounding box of the node.
    pub fn min_dist(&self, x: &[f64], metric: Metric) -> f64 {
        metric.norm(
            x.iter()
                .zip(self.anchor.iter().zip(&self.upper))
                .map(|(&xi, (&lo, &hi))| (lo - xi).max(xi - hi).max(0.0)),
        )
    }
}

/// Record of one iteration of the build loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitEvent {
    /// Growing leaf whose primary heap held the split box.
    pub owner: NodeId,
    pub split_len: f64,
    pub split_size: usize,
    /// `(len, size)` of every non-empty cell produced by the split.
    pub succ: Vec<(f64, usize)>,
    /// Longest box left in the owner's heap after the split.
    pub top_len: f64,
    /// Whether the owner's heap was materialized as child nodes.
    pub flag: bool,
    pub children: Vec<NodeId>,
    /// Longest pending box anywhere just before the pop.
    pub pending_max_len: f64,
}

#[derive(Clone, Debug)]
pub struct SplitTree {
    pub(crate) points: PointSet,
    pub(crate) duplicates: Vec<Vec<u64>>,
    pub(crate) metric: Metric,
    pub(crate) epsilon: f64,
    pub(crate) nodes: Vec<TreeNode>,
    pub(crate) order: Vec<u32>,
    pub(crate) position: Vec<u32>,
    pub(crate) nbr: NbrIndex,
}

#[derive(Debug)]
struct Pending {
    ids: Vec<u32>,
    anchor: Vec<f64>,
    len: f64,
}

#[derive(Clone, Copy, Debug)]
struct HeapKey {
    len: f64,
    seq: u64,
    slot: usize,
    owner: NodeId,
}

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    // longest first, earliest created first among equal lengths
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .total_cmp(&other.len)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Builder<'a> {
    points: &'a PointSet,
    metric: Metric,
    epsilon: f64,
    nodes: Vec<TreeNode>,
    node_ids: Vec<Vec<u32>>,
    primary: Vec<BinaryHeap<HeapKey>>,
    secondary: BinaryHeap<HeapKey>,
    slab: Vec<Option<Pending>>,
    seq: u64,
}

impl<'a> Builder<'a> {
    fn stash(&mut self, pending: Pending, owner: NodeId) -> HeapKey {
        let key = HeapKey {
            len: pending.len,
            seq: self.seq,
            slot: self.slab.len(),
            owner,
        };
        self.seq += 1;
        self.slab.push(Some(pending));
        key
    }

    fn radius(&self, ids: &[u32]) -> Result<f64> {
        if ids.len() == 1 {
            Ok(0.0)
        } else {
            geometry::diameter(ids, self.points, self.metric)
        }
    }

    fn add_node(&mut self, parent: Option<NodeId>, pending: Pending, est: f64) -> NodeId {
        let id = self.nodes.len() as NodeId;
        let level = parent.map_or(0, |p| self.nodes[p as usize].level + 1);
        let (_, upper) = geometry::bounds(&pending.ids, self.points);
        let center = *pending.ids.iter().min().expect("non-empty box");
        let len = pending.len;
        self.nodes.push(TreeNode {
            id,
            parent,
            children: Vec::new(),
            level,
            anchor: pending.anchor.clone(),
            len,
            upper,
            center,
            est,
            rmax: 0.0,
            start: 0,
            end: 0,
        });
        self.primary.push(BinaryHeap::new());
        if pending.ids.len() > 1 {
            let ids = pending.ids.clone();
            let key = self.stash(pending, id);
            self.primary[id as usize].push(key);
            self.secondary.push(key);
            self.node_ids.push(ids);
        } else {
            self.node_ids.push(pending.ids);
        }
        if let Some(p) = parent {
            self.nodes[p as usize].children.push(id);
        }
        id
    }

    fn pending_max_len(&self) -> f64 {
        self.primary
            .iter()
            .filter_map(|h| h.peek())
            .map(|k| k.len)
            .fold(0.0, f64::max)
    }

    fn step(&mut self, log: Option<&mut Vec<SplitEvent>>) -> Result<bool> {
        let pending_max_len = if log.is_some() {
            self.pending_max_len()
        } else {
            0.0
        };
        let Some(top) = self.secondary.pop() else {
            return Ok(false);
        };
        let owner = top.owner;
        let popped = self.primary[owner as usize]
            .pop()
            .ok_or_else(|| Error::Invariant("secondary heap entry without primary".into()))?;
        if popped.slot != top.slot {
            return Err(Error::Invariant("secondary heap out of sync".into()));
        }
        let pending = self.slab[popped.slot]
            .take()
            .ok_or_else(|| Error::Invariant("pending box consumed twice".into()))?;

        let cube = CubicalBox {
            anchor: pending.anchor,
            len: pending.len,
            point_ids: pending.ids,
        };
        let succ = geometry::split_step(&cube, self.points)?;
        let succ_summary: Vec<(f64, usize)> =
            succ.iter().map(|b| (b.len, b.point_ids.len())).collect();
        for b in succ {
            let key = self.stash(
                Pending {
                    ids: b.point_ids,
                    anchor: b.anchor,
                    len: b.len,
                },
                owner,
            );
            self.primary[owner as usize].push(key);
        }

        let heap_top = *self.primary[owner as usize]
            .peek()
            .expect("split produced at least two boxes");
        let owner_node = &self.nodes[owner as usize];
        let (owner_len, owner_est) = (owner_node.len, owner_node.est);
        let dim = self.points.dim();

        let mut flag = false;
        let mut children = Vec::new();
        if is_split_fine(owner_len, heap_top.len, self.epsilon, dim) {
            let mut members: Vec<HeapKey> =
                std::mem::take(&mut self.primary[owner as usize]).into_vec();
            members.sort_by_key(|k| k.seq);
            let mut radii = Vec::with_capacity(members.len());
            for k in &members {
                let ids = &self.slab[k.slot].as_ref().expect("live pending box").ids;
                radii.push(self.radius(ids)?);
            }
            let rmax = radii.iter().copied().fold(0.0, f64::max);
            // the side-length test implies this in exact arithmetic
            if rmax < fineness_ratio(self.epsilon) * owner_est {
                flag = true;
                for (k, est) in members.iter().zip(radii) {
                    let pending = self.slab[k.slot].take().expect("live pending box");
                    children.push(self.add_node(Some(owner), pending, est));
                }
                self.nodes[owner as usize].rmax = rmax;
            } else {
                self.primary[owner as usize] = members.into_iter().collect();
            }
        }
        if !flag {
            self.secondary.push(heap_top);
        }

        if let Some(log) = log {
            log.push(SplitEvent {
                owner,
                split_len: cube.len,
                split_size: cube.point_ids.len(),
                succ: succ_summary,
                top_len: heap_top.len,
                flag,
                children,
                pending_max_len,
            });
        }
        Ok(true)
    }
}

impl SplitTree {
    /// Builds the fully split tree and its neighbor sets.
    ///
    /// Points with identical coordinates are merged; the ids of all merged
    /// originals are kept and reported by [`SplitTree::original_ids`].
    pub fn build(points: &PointSet, epsilon: f64, metric: Metric) -> Result<SplitTree> {
        Self::build_inner(points, epsilon, metric, None)
    }

    /// Like [`SplitTree::build`], also returning one [`SplitEvent`] per
    /// iteration of the build loop.
    pub fn build_with_log(
        points: &PointSet,
        epsilon: f64,
        metric: Metric,
    ) -> Result<(SplitTree, Vec<SplitEvent>)> {
        let mut log = Vec::new();
        let tree = Self::build_inner(points, epsilon, metric, Some(&mut log))?;
        Ok((tree, log))
    }

    fn build_inner(
        points: &PointSet,
        epsilon: f64,
        metric: Metric,
        mut log: Option<&mut Vec<SplitEvent>>,
    ) -> Result<SplitTree> {
        check_epsilon(epsilon)?;
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let (distinct, duplicates) = points.dedup();

        let mut builder = Builder {
            points: &distinct,
            metric,
            epsilon,
            nodes: Vec::new(),
            node_ids: Vec::new(),
            primary: Vec::new(),
            secondary: BinaryHeap::new(),
            slab: Vec::new(),
            seq: 0,
        };
        let root = geometry::mcb(&distinct)?;
        let root_est = builder.radius(&root.point_ids)?;
        builder.add_node(
            None,
            Pending {
                ids: root.point_ids,
                anchor: root.anchor,
                len: root.len,
            },
            root_est,
        );
        while builder.step(log.as_deref_mut())? {}

        let Builder {
            nodes, node_ids, ..
        } = builder;
        let mut tree = SplitTree {
            points: distinct,
            duplicates,
            metric,
            epsilon,
            nodes,
            order: Vec::new(),
            position: Vec::new(),
            nbr: NbrIndex::default(),
        };
        tree.assign_ranges(&node_ids)?;
        tree.nbr = NbrIndex::build(&tree);
        Ok(tree)
    }

    /// Lays the points out in depth-first order so that every node owns a
    /// contiguous range.
    fn assign_ranges(&mut self, node_ids: &[Vec<u32>]) -> Result<()> {
        let n = self.points.len();
        self.order = Vec::with_capacity(n);
        let mut stack: Vec<(NodeId, bool)> = vec![(0, false)];
        while let Some((id, done)) = stack.pop() {
            let node = &mut self.nodes[id as usize];
            if done {
                node.end = self.order.len() as u32;
                continue;
            }
            node.start = self.order.len() as u32;
            if node.children.is_empty() {
                let ids = &node_ids[id as usize];
                if ids.len() != 1 {
                    return Err(Error::Invariant(format!(
                        "leaf {id} holds {} points",
                        ids.len()
                    )));
                }
                self.order.push(ids[0]);
                node.end = node.start + 1;
                continue;
            }
            stack.push((id, true));
            for &c in node.children.iter().rev() {
                stack.push((c, false));
            }
        }
        if self.order.len() != n {
            return Err(Error::Invariant("leaves do not cover the point set".into()));
        }
        self.position = vec![u32::MAX; n];
        for (pos, &p) in self.order.iter().enumerate() {
            self.position[p as usize] = pos as u32;
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        points: PointSet,
        duplicates: Vec<Vec<u64>>,
        metric: Metric,
        epsilon: f64,
        nodes: Vec<TreeNode>,
        order: Vec<u32>,
        nbr: NbrIndex,
    ) -> Result<SplitTree> {
        let n = points.len();
        if order.len() != n || duplicates.len() != n {
            return Err(Error::Format("point order does not match point table".into()));
        }
        let mut position = vec![u32::MAX; n];
        for (pos, &p) in order.iter().enumerate() {
            let slot = position
                .get_mut(p as usize)
                .ok_or_else(|| Error::Format(format!("point {p} out of range")))?;
            if *slot != u32::MAX {
                return Err(Error::Format(format!("point {p} listed twice")));
            }
            *slot = pos as u32;
        }
        let tree = SplitTree {
            points,
            duplicates,
            metric,
            epsilon,
            nodes,
            order,
            position,
            nbr,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Distinct points the tree is built on.
    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Ids of every input point located at distinct point `idx`.
    pub fn original_ids(&self, idx: u32) -> &[u64] {
        &self.duplicates[idx as usize]
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicates.iter().map(|g| g.len() - 1).sum()
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id as usize]
    }

    /// All nodes in ascending id order.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn height(&self) -> u32 {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn nbr(&self) -> &NbrIndex {
        &self.nbr
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Points inside a node.
    pub fn node_points(&self, id: NodeId) -> &[u32] {
        let n = &self.nodes[id as usize];
        &self.order[n.start as usize..n.end as usize]
    }

    /// Whether node `id` contains point `idx`.
    #[inline]
    pub fn node_contains(&self, id: NodeId, idx: u32) -> bool {
        let pos = self.position[idx as usize];
        let n = &self.nodes[id as usize];
        n.start <= pos && pos < n.end
    }

    pub fn cubical_box(&self, id: NodeId) -> CubicalBox {
        let n = &self.nodes[id as usize];
        CubicalBox {
            anchor: n.anchor.clone(),
            len: n.len,
            point_ids: self.node_points(id).to_vec(),
        }
    }

    /// Structural consistency: child ranges tile the parent range in order,
    /// levels increase by one, fan-out is at least two, leaves are
    /// singletons and every center lies in its node.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invariant(msg));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let root = &self.nodes[0];
        if root.parent.is_some() || root.level != 0 {
            return bad("node 0 is not a root".into());
        }
        if root.start != 0 || root.end as usize != self.points.len() {
            return bad("root does not hold every point".into());
        }
        let mut seen_as_child = vec![false; self.nodes.len()];
        for node in &self.nodes {
            if node.id as usize >= self.nodes.len() || self.nodes[node.id as usize].id != node.id
            {
                return bad(format!("node id {} out of place", node.id));
            }
            if node.start >= node.end || node.end as usize > self.order.len() {
                return bad(format!("node {} has an empty or invalid range", node.id));
            }
            if !self.node_contains(node.id, node.center) {
                return bad(format!("center of node {} lies outside it", node.id));
            }
            if node.anchor.len() != self.dim() || node.upper.len() != self.dim() {
                return bad(format!("node {} has wrong dimension", node.id));
            }
            if node.children.is_empty() {
                if node.size() != 1 {
                    return bad(format!("leaf {} holds {} points", node.id, node.size()));
                }
                continue;
            }
            if node.children.len() < 2 {
                return bad(format!("node {} has a single child", node.id));
            }
            let mut cursor = node.start;
            for &c in &node.children {
                let Some(child) = self.nodes.get(c as usize) else {
                    return bad(format!("node {} lists missing child {c}", node.id));
                };
                if std::mem::replace(&mut seen_as_child[c as usize], true) {
                    return bad(format!("node {c} has two parents"));
                }
                if child.parent != Some(node.id) || Some(child.level) != node.level.checked_add(1) {
                    return bad(format!("child {c} does not point back to {}", node.id));
                }
                if child.start != cursor {
                    return bad(format!("children of node {} do not tile it", node.id));
                }
                cursor = child.end;
            }
            if cursor != node.end {
                return bad(format!("children of node {} do not cover it", node.id));
            }
        }
        if seen_as_child.iter().skip(1).any(|s| !s) {
            return bad("tree has unreachable nodes".into());
        }
        self.nbr.validate(self)
    }
}
