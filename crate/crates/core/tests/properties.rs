use proptest::prelude::*;

use annred::cli::index_file;
use annred::geometry::{diameter, mcb_of, pairwise_diameter};
use annred::split_tree::fineness_ratio;
use annred::{
    mcb, query, split_step, AdversarialOracle, Candidate, ExactOracle, Metric, OracleAnswer,
    OracleKind, OracleQuery, PointSet, SplitTree,
};

// Reference distances, written out independently of the library.
fn ref_dist(a: &[f64], b: &[f64], m: Metric) -> f64 {
    let gaps = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match m {
        Metric::L1 => gaps.sum(),
        Metric::L2 => gaps.map(|g| g * g).sum::<f64>().sqrt(),
        Metric::LInf => gaps.fold(0.0, f64::max),
    }
}

fn ref_nearest(rows: &[Vec<f64>], q: &[f64], m: Metric) -> f64 {
    rows.iter()
        .map(|r| ref_dist(r, q, m))
        .fold(f64::INFINITY, f64::min)
}

fn metric() -> impl Strategy<Value = Metric> {
    prop::sample::select(Metric::ALL.to_vec())
}

/// Rows on a coarse lattice so duplicates and ties show up.
fn rows(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4).prop_flat_map(move |d| {
        prop::collection::vec(
            prop::collection::vec((-20i32..20).prop_map(|v| v as f64 * 0.5), d),
            1..max_n,
        )
    })
}

fn real_rows(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4).prop_flat_map(move |d| {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, d), 1..max_n)
    })
}

fn epsilon() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_matches_reference_and_triangle(
        a in prop::collection::vec(-1e3f64..1e3, 3),
        b in prop::collection::vec(-1e3f64..1e3, 3),
        c in prop::collection::vec(-1e3f64..1e3, 3),
        m in metric(),
    ) {
        let ab = m.dist(&a, &b);
        prop_assert!((ab - ref_dist(&a, &b, m)).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(ab, m.dist(&b, &a));
        prop_assert!(ab <= m.dist(&a, &c) + m.dist(&c, &b) + 1e-9);
        prop_assert_eq!(m.dist(&a, &a), 0.0);
    }

    #[test]
    fn mcb_is_minimal(rows in real_rows(40)) {
        let set = PointSet::from_rows(&rows).unwrap();
        let cube = mcb(&set).unwrap();
        let d = set.dim();
        let mut extent: f64 = 0.0;
        for i in 0..d {
            let lo = rows.iter().map(|r| r[i]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(cube.anchor[i], lo + 0.0);
            extent = extent.max(hi - lo);
        }
        prop_assert_eq!(cube.len, extent);
        for r in &rows {
            prop_assert!(cube.contains(r));
        }
        prop_assert_eq!(cube.point_ids.len(), rows.len());
    }

    #[test]
    fn split_step_partitions(rows in rows(40)) {
        let (set, _) = PointSet::from_rows(&rows).unwrap().dedup();
        prop_assume!(set.len() >= 2);
        let cube = mcb(&set).unwrap();
        let parts = split_step(&cube, &set).unwrap();
        prop_assert!(parts.len() >= 2);
        let mut all: Vec<u32> = parts.iter().flat_map(|p| p.point_ids.clone()).collect();
        all.sort_unstable();
        let expect: Vec<u32> = (0..set.len() as u32).collect();
        prop_assert_eq!(all, expect);
        for p in &parts {
            prop_assert!(p.len <= cube.len / 2.0);
            let tight = mcb_of(&p.point_ids, &set).unwrap();
            prop_assert_eq!(&tight.anchor, &p.anchor);
            prop_assert_eq!(tight.len, p.len);
            // every successor lies in one half of the parent on each axis
            for i in 0..set.dim() {
                let mid = cube.anchor[i] + cube.len / 2.0;
                let low = p.point_ids.iter().all(|&k| set.coords(k)[i] <= mid);
                let high = p.point_ids.iter().all(|&k| set.coords(k)[i] > mid);
                prop_assert!(low || high);
            }
        }
    }

    #[test]
    fn diameter_is_exact_and_sandwiched(rows in real_rows(150), m in metric()) {
        let (set, _) = PointSet::from_rows(&rows).unwrap().dedup();
        let ids: Vec<u32> = set.indices().collect();
        let fast = diameter(&ids, &set, m).unwrap();
        let slow = pairwise_diameter(&ids, &set, m).unwrap();
        prop_assert_eq!(fast, slow);
        let mut reference: f64 = 0.0;
        for a in &rows {
            for b in &rows {
                reference = reference.max(ref_dist(a, b, m));
            }
        }
        prop_assert!((fast - reference).abs() <= 1e-12 * reference.max(1.0));
        let len = mcb(&set).unwrap().len;
        let d = set.dim() as f64;
        prop_assert!(len * (1.0 - 1e-12) <= fast && fast <= d * len * (1.0 + 1e-12));
    }

    #[test]
    fn tree_invariants(rows in rows(60), eps in epsilon(), m in metric()) {
        let input = PointSet::from_rows(&rows).unwrap();
        let tree = SplitTree::build(&input, eps, m).unwrap();
        tree.validate().unwrap();
        let n = tree.points().len();
        prop_assert_eq!(n + tree.duplicate_count(), rows.len());
        prop_assert_eq!(tree.leaf_count(), n);
        prop_assert!(tree.node_count() <= 2 * n.max(1));
        let ratio = fineness_ratio(eps);
        for node in tree.nodes() {
            let pts = tree.node_points(node.id);
            let cube = tree.cubical_box(node.id);
            for &p in pts {
                prop_assert!(cube.contains(tree.points().coords(p)));
            }
            if !node.is_leaf() {
                prop_assert!(node.children.len() >= 2);
                prop_assert!(node.rmax < ratio * node.est);
                let child_max = node
                    .children
                    .iter()
                    .map(|&c| tree.node(c).est)
                    .fold(0.0, f64::max);
                prop_assert_eq!(node.rmax, child_max);
            }
            if node.is_singleton() {
                prop_assert_eq!(node.est, 0.0);
            } else {
                prop_assert_eq!(node.est, pairwise_diameter(pts, tree.points(), m).unwrap());
            }
        }
        prop_assert!(tree.nbr().is_symmetric(&tree));
    }

    #[test]
    fn answers_are_eps_nearest(
        rows in rows(60),
        queries in prop::collection::vec(prop::collection::vec(-15.0f64..15.0, 4), 1..8),
        eps in epsilon(),
        m in metric(),
        seed in any::<u64>(),
    ) {
        let tree = SplitTree::build(&PointSet::from_rows(&rows).unwrap(), eps, m).unwrap();
        let d = tree.dim();
        for q in &queries {
            let q = &q[..d];
            let nn = ref_nearest(&rows, q, m);
            for oracle in [OracleKind::Exact, OracleKind::Adversarial { seed }] {
                let r = query(&tree, q, &oracle).unwrap();
                let answer = &rows[r.answer_ids[0] as usize];
                prop_assert_eq!(ref_dist(answer, q, m), r.answer_distance);
                prop_assert!(
                    r.answer_distance <= (1.0 + eps) * (1.0 + 1e-9) * nn,
                    "{} > (1 + {}) * {}", r.answer_distance, eps, nn
                );
                prop_assert!(r.oracle_invocations <= tree.height() as usize);
                for id in &r.answer_ids {
                    prop_assert_eq!(&rows[*id as usize], answer);
                }
            }
        }
    }

    #[test]
    fn audit_holds(rows in rows(60), eps in epsilon(), m in metric(), seed in any::<u64>()) {
        let tree = SplitTree::build(&PointSet::from_rows(&rows).unwrap(), eps, m).unwrap();
        let d = tree.dim();
        for q in rows.iter().take(5) {
            let shifted: Vec<f64> = q.iter().map(|x| x + 0.3).collect();
            let (_, audit) =
                annred::query_audited(&tree, &shifted[..d], &AdversarialOracle { seed }).unwrap();
            prop_assert!(audit.passed());
        }
    }

    #[test]
    fn oracle_contract(
        cands in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 1..10),
        q in prop::collection::vec(-10.0f64..10.0, 2),
        r in 0.01f64..10.0,
        c in 1.001f64..5.0,
        m in metric(),
        seed in any::<u64>(),
    ) {
        let oq = OracleQuery {
            candidates: cands
                .iter()
                .enumerate()
                .map(|(i, x)| Candidate { id: i as u64, coords: x })
                .collect(),
            query: &q,
            r,
            c,
            metric: m,
        };
        let nearest = cands.iter().map(|x| ref_dist(x, &q, m)).fold(f64::INFINITY, f64::min);
        for ans in [
            annred::NearOracle::answer(&ExactOracle, &oq),
            annred::NearOracle::answer(&AdversarialOracle { seed }, &oq),
        ] {
            match ans {
                OracleAnswer::No => prop_assert!(nearest > r),
                OracleAnswer::Point(id) => {
                    prop_assert!(ref_dist(&cands[id as usize], &q, m) <= c * r);
                }
            }
            if nearest > c * r {
                prop_assert_eq!(ans, OracleAnswer::No);
            }
        }
    }

    #[test]
    fn index_round_trip(rows in rows(40), eps in epsilon(), m in metric()) {
        let tree = SplitTree::build(&PointSet::from_rows(&rows).unwrap(), eps, m).unwrap();
        let bytes = index_file::to_bytes(&tree);
        let back = index_file::from_bytes(&bytes).unwrap();
        prop_assert_eq!(index_file::to_bytes(&back), bytes);
        prop_assert_eq!(back.nodes(), tree.nodes());
        prop_assert_eq!(back.nbr(), tree.nbr());
        prop_assert_eq!(back.order(), tree.order());
    }
}

#[test]
fn build_is_deterministic() {
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|i| vec![((i * 37) % 101) as f64 * 0.1, ((i * 53) % 89) as f64 * 0.2])
        .collect();
    let set = PointSet::from_rows(&rows).unwrap();
    let a = SplitTree::build(&set, 0.5, Metric::L2).unwrap();
    let b = SplitTree::build(&set, 0.5, Metric::L2).unwrap();
    assert_eq!(index_file::to_bytes(&a), index_file::to_bytes(&b));
}
