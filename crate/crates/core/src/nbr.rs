//! Neighbor sets.
//!
//! Every non-singleton node `b` at depth `k` gets a set `Nbr(b)` of boxes
//! from the depth-`k` cut of the tree (nodes at depth `k` plus singleton
//! leaves above it). The sets are filled top-down, one level at a time:
//!
//! * `Nbr(root) = {root}`.
//! * For a node `x` at depth `k`, its candidate boxes are the children of
//!   its neighbors (a singleton neighbor stands for itself) and
//!   `rmax(Nbr(x))` is the largest enclosing radius among them.
//! * A child `b` at depth `k + 1` may be reached from any `x` whose
//!   neighbors include `parent(b)`. Let `ρ(b)` be the largest
//!   `rmax(Nbr(x))` over those `x`. Then `Nbr(b)` holds every box of the
//!   depth-`k + 1` cut whose center is within `(3 + 4/ε)·ρ(b)` of `c_b`.
//!
//! With that radius, whenever a descent from `x` moves to a candidate whose
//! center is within `(1 + 2/ε)·rmax(Nbr(x))` of the query, the nearest
//! neighbor's box is still inside the new neighbor set.
//!
//! Singleton nodes are never descended into; their set is just themselves.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::split_tree::{NodeId, SplitTree, TreeNode};

/// Relative slack on the inclusion radius, absorbing rounding in the
/// triangle inequalities the containment argument relies on.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NbrSet {
    pub owner: NodeId,
    /// Sorted node ids, always including `owner`.
    pub members: Vec<NodeId>,
    /// Largest `rmax` over the members.
    pub rmax: f64,
    /// Center-distance radius the members were selected with.
    pub radius: f64,
}

impl NbrSet {
    fn solo(node: &TreeNode) -> NbrSet {
        NbrSet {
            owner: node.id,
            members: vec![node.id],
            rmax: node.rmax,
            radius: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

/// Max-aggregate of member `rmax` values; 0 for no members or all
/// singletons.
pub fn rmax_of<I: IntoIterator<Item = f64>>(member_rmax: I) -> f64 {
    member_rmax.into_iter().fold(0.0, f64::max)
}

/// Packing bound `2^d · (2d⌈(3 + 4/ε)d⌉ + 3)^d` on the size of a neighbor
/// set. Returned as `f64` since it overflows integers quickly.
pub fn size_bound(dim: usize, epsilon: f64) -> f64 {
    let d = dim as f64;
    let reach = ((3.0 + 4.0 / epsilon) * d).ceil();
    2f64.powi(dim as i32) * (2.0 * d * reach + 3.0).powi(dim as i32)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NbrIndex {
    sets: Vec<NbrSet>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NbrStats {
    pub max_size: usize,
    pub mean_size: f64,
    /// Number of non-singleton nodes the statistics range over.
    pub owners: usize,
}

impl NbrIndex {
    pub fn build(tree: &SplitTree) -> NbrIndex {
        let nodes = tree.nodes();
        let mut sets: Vec<NbrSet> = nodes.iter().map(NbrSet::solo).collect();
        if nodes[0].is_singleton() {
            return NbrIndex { sets };
        }
        let scale = (3.0 + 4.0 / tree.epsilon()) * (1.0 + RADIUS_SLACK);

        let mut by_level: Vec<Vec<NodeId>> = vec![Vec::new(); tree.height() as usize + 1];
        for n in nodes.iter().filter(|n| !n.is_singleton()) {
            by_level[n.level as usize].push(n.id);
        }

        let mut reach = vec![0.0f64; nodes.len()];
        for level in 0..by_level.len().saturating_sub(1) {
            for &x in &by_level[level] {
                let collection_rmax = sets[x as usize].rmax;
                for &m in &sets[x as usize].members {
                    if !nodes[m as usize].is_singleton() {
                        let r = &mut reach[m as usize];
                        *r = r.max(collection_rmax);
                    }
                }
            }
            let next = (level + 1) as u32;
            for &b in &by_level[level + 1] {
                let node = &nodes[b as usize];
                let parent = node.parent.expect("non-root node has a parent");
                let radius = scale * reach[parent as usize];
                let members = radius_search(tree, tree.points().coords(node.center), radius, next);
                sets[b as usize] = NbrSet {
                    owner: b,
                    members,
                    rmax: 0.0,
                    radius,
                };
            }
            // make membership symmetric among the non-singleton boxes
            let mut back: Vec<(NodeId, NodeId)> = Vec::new();
            for &b in &by_level[level + 1] {
                for &m in &sets[b as usize].members {
                    if m != b && !nodes[m as usize].is_singleton() {
                        back.push((m, b));
                    }
                }
            }
            for (m, b) in back {
                sets[m as usize].members.push(b);
            }
            for &b in &by_level[level + 1] {
                let set = &mut sets[b as usize];
                set.members.sort_unstable();
                set.members.dedup();
                set.rmax = rmax_of(set.members.iter().map(|&m| nodes[m as usize].rmax));
            }
        }
        NbrIndex { sets }
    }

    pub(crate) fn from_sets(sets: Vec<NbrSet>) -> NbrIndex {
        NbrIndex { sets }
    }

    pub fn get(&self, id: NodeId) -> &NbrSet {
        &self.sets[id as usize]
    }

    pub fn sets(&self) -> &[NbrSet] {
        &self.sets
    }

    pub fn stats(&self, tree: &SplitTree) -> NbrStats {
        let sizes: Vec<usize> = self
            .sets
            .iter()
            .filter(|s| !tree.node(s.owner).is_singleton())
            .map(NbrSet::len)
            .collect();
        if sizes.is_empty() {
            return NbrStats {
                max_size: 1,
                mean_size: 1.0,
                owners: 0,
            };
        }
        NbrStats {
            max_size: sizes.iter().copied().max().unwrap_or(0),
            mean_size: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
            owners: sizes.len(),
        }
    }

    /// Membership checks: the owner is a member; every member exists and is
    /// at the owner's depth or is a singleton leaf above it; a singleton's
    /// members are singletons.
    pub fn validate(&self, tree: &SplitTree) -> Result<()> {
        let nodes = tree.nodes();
        if self.sets.len() != nodes.len() {
            return Err(Error::Invariant(
                "neighbor sets do not match node count".into(),
            ));
        }
        for (i, set) in self.sets.iter().enumerate() {
            let owner = &nodes[i];
            if set.owner != owner.id || !set.contains(owner.id) {
                return Err(Error::Invariant(format!(
                    "node {i} is missing from its own neighbor set"
                )));
            }
            if set.members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invariant(format!(
                    "neighbor set of node {i} is not sorted"
                )));
            }
            for &m in &set.members {
                let Some(member) = nodes.get(m as usize) else {
                    return Err(Error::Invariant(format!(
                        "neighbor set of node {i} lists missing node {m}"
                    )));
                };
                let same_level = member.level == owner.level;
                let carried = member.is_leaf() && member.level <= owner.level;
                if !(same_level || carried) {
                    return Err(Error::Invariant(format!(
                        "node {m} in the neighbor set of {i} is at another level"
                    )));
                }
                if owner.is_singleton() && !member.is_singleton() {
                    return Err(Error::Invariant(format!(
                        "singleton {i} has a non-singleton neighbor {m}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether membership is symmetric among non-singleton boxes.
    pub fn is_symmetric(&self, tree: &SplitTree) -> bool {
        self.sets.iter().all(|s| {
            s.members.iter().all(|&m| {
                tree.node(m).is_singleton() || tree.node(s.owner).is_singleton() || {
                    self.sets[m as usize].contains(s.owner)
                }
            })
        })
    }
}

/// Boxes of the depth-`level` cut whose centers lie within `radius` of `x`.
fn radius_search(tree: &SplitTree, x: &[f64], radius: f64, level: u32) -> Vec<NodeId> {
    let metric = tree.metric();
    let mut out = Vec::new();
    let mut stack = vec![0 as NodeId];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        if node.min_dist(x, metric) > radius {
            continue;
        }
        if node.level == level || node.is_leaf() {
            if metric.dist(x, tree.points().coords(node.center)) <= radius {
                out.push(id);
            }
        } else {
            stack.extend_from_slice(&node.children);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Metric, PointSet};

    fn tree(rows: &[&[f64]], eps: f64) -> SplitTree {
        SplitTree::build(&PointSet::from_rows(rows).unwrap(), eps, Metric::L2).unwrap()
    }

    #[test]
    fn rmax_of_examples() {
        assert_eq!(rmax_of([0.0, 0.0, 0.0]), 0.0);
        assert_eq!(rmax_of([1.5, 0.0, 2.0]), 2.0);
        assert_eq!(rmax_of([3.0]), 3.0);
    }

    #[test]
    fn root_neighbors_are_itself() {
        let t = tree(&[&[0.0, 0.0], &[0.0, 2.0], &[2.0, 0.0], &[2.0, 2.0]], 1.0);
        assert_eq!(t.nbr().get(0).members, vec![0]);
    }

    #[test]
    fn siblings_see_each_other_without_pruning() {
        // two tight pairs 1 apart; rmax(root) = 0.1 and ε = 0.1 give a
        // radius of 4.3
        let t = tree(&[&[0.0], &[0.1], &[1.0], &[1.1]], 0.1);
        let kids = t.root().children.clone();
        assert_eq!(kids.len(), 2);
        for &k in &kids {
            assert_eq!(t.nbr().get(k).members, kids);
        }
        assert!(t.nbr().is_symmetric(&t));
    }

    #[test]
    fn siblings_pruned_when_radius_is_small() {
        // same pairs with ε = 4: radius 4 · 0.1 does not reach the sibling
        let t = tree(&[&[0.0], &[0.1], &[1.0], &[1.1]], 4.0);
        for &k in &t.root().children {
            assert_eq!(t.nbr().get(k).members, vec![k]);
        }
    }

    #[test]
    fn far_box_is_pruned() {
        // 1-D {0, 1, 100} plus a tight cluster so that deeper levels have
        // small radii; the far singleton must drop out of deep neighbor sets
        let t = tree(
            &[&[0.0], &[1.0], &[100.0], &[0.2], &[0.4], &[0.45]],
            2.0,
        );
        let far = t
            .nodes()
            .iter()
            .find(|n| n.is_leaf() && t.node_points(n.id) == [2])
            .unwrap()
            .id;
        let deep: Vec<_> = t
            .nodes()
            .iter()
            .filter(|n| !n.is_singleton() && n.level >= 1)
            .collect();
        assert!(!deep.is_empty());
        for n in deep {
            let set = t.nbr().get(n.id);
            assert!(set.radius < 100.0);
            assert!(!set.contains(far));
        }
    }

    #[test]
    fn size_bound_value() {
        // d = 2, ε = 2: 4 · (4·10 + 3)^2
        assert_eq!(size_bound(2, 2.0), 7396.0);
    }

    #[test]
    fn validate_accepts_built_tree() {
        let t = tree(
            &[&[0.0, 0.0], &[5.0, 1.0], &[2.0, 2.0], &[2.1, 2.1], &[9.0, 9.0]],
            0.5,
        );
        t.nbr().validate(&t).unwrap();
    }
}
