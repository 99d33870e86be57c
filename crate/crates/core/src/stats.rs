//! Build and query statistics with stable JSON keys.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::nbr::size_bound;
use crate::query::QueryResult;
use crate::split_tree::SplitTree;

/// `⌈log₂ n⌉`, with 0 for `n ≤ 1`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildStats {
    /// Input rows, duplicates included.
    pub input_points: usize,
    /// Distinct points the tree holds.
    pub points: usize,
    pub duplicates: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub metric: &'static str,
    pub node_count: usize,
    pub node_bound: usize,
    pub leaf_count: usize,
    pub height: u32,
    pub ceil_log2_n: u32,
    pub nbr_max: usize,
    pub nbr_mean: f64,
    pub nbr_size_bound: f64,
    pub build_seconds: f64,
}

impl BuildStats {
    pub fn of(tree: &SplitTree, build_seconds: f64) -> BuildStats {
        let nbr = tree.nbr().stats(tree);
        let n = tree.points().len();
        BuildStats {
            input_points: n + tree.duplicate_count(),
            points: n,
            duplicates: tree.duplicate_count(),
            dim: tree.dim(),
            epsilon: tree.epsilon(),
            metric: tree.metric().name(),
            node_count: tree.node_count(),
            node_bound: 2 * n,
            leaf_count: tree.leaf_count(),
            height: tree.height(),
            ceil_log2_n: ceil_log2(n),
            nbr_max: nbr.max_size,
            nbr_mean: nbr.mean_size,
            nbr_size_bound: size_bound(tree.dim(), tree.epsilon()),
            build_seconds,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QueryStats {
    pub queries: usize,
    pub invocations: Vec<usize>,
    pub path_lengths: Vec<usize>,
    pub mean_invocations: f64,
    pub max_invocations: usize,
    pub terminals: BTreeMap<&'static str, usize>,
    pub query_seconds: f64,
}

impl QueryStats {
    pub fn of<'a, I>(results: I, query_seconds: f64) -> QueryStats
    where
        I: IntoIterator<Item = &'a QueryResult>,
    {
        let mut s = QueryStats {
            query_seconds,
            ..QueryStats::default()
        };
        for r in results {
            s.invocations.push(r.oracle_invocations);
            s.path_lengths.push(r.descent_path.len());
            *s.terminals.entry(r.terminal.name()).or_default() += 1;
        }
        s.queries = s.invocations.len();
        s.max_invocations = s.invocations.iter().copied().max().unwrap_or(0);
        if s.queries > 0 {
            s.mean_invocations = s.invocations.iter().sum::<usize>() as f64 / s.queries as f64;
        }
        s
    }
}
