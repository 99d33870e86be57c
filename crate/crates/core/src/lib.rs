//! Approximate nearest neighbor search by reduction to an approximate near
//! neighbor decision oracle.
//!
//! A [`SplitTree`] is built over the points once. A query then descends the
//! tree, asking a [`NearOracle`] at most once per level whether some
//! candidate box center is near, and returns a point within `(1 + ε)` of the
//! nearest distance.
//!
//! ```
//! use annred::{query, ExactOracle, Metric, PointSet, SplitTree};
//!
//! let points = PointSet::from_rows(&[[0.0, 0.0], [4.0, 0.0], [4.0, 3.0]]).unwrap();
//! let tree = SplitTree::build(&points, 0.5, Metric::L2).unwrap();
//! let hit = query(&tree, &[3.5, 2.5], &ExactOracle).unwrap();
//! assert_eq!(hit.answer_ids, vec![2]);
//! ```

// NaN must fail the range checks written as `!(x > 0.0)`
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geometry;
pub mod nbr;
pub mod oracle;
pub mod query;
pub mod split_tree;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{distance, mcb, split_step, CubicalBox, Metric, Point, PointSet};
pub use nbr::{NbrIndex, NbrSet};
pub use oracle::{
    AdversarialOracle, Candidate, ExactOracle, NearOracle, OracleAnswer, OracleKind, OracleQuery,
};
pub use query::{brute_force_nn, query, query_audited, QueryResult, Terminal};
pub use split_tree::{NodeId, SplitTree, TreeNode};
