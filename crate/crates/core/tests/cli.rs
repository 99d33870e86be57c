use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use annred::cli::{self, index_file, Outcome};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_annred"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn annred")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn grid_points(k: usize) -> String {
    let mut text = String::from("# x y\n");
    for i in 0..k {
        for j in 0..k {
            text.push_str(&format!("{}, {}\n", i as f64 * 1.5 + j as f64 * 0.01, j as f64 * 0.7));
        }
    }
    text
}

fn build(f: &Fixture, points: &str, extra: &[&str]) -> (Output, PathBuf) {
    let pts = f.file("points.txt", points);
    let idx = f.path("index.bin");
    let mut args = vec!["build", s(&pts), "--epsilon", "1", "--out", s(&idx)];
    args.extend_from_slice(extra);
    (run(&args), idx)
}

#[test]
fn build_three_points() {
    let f = Fixture::new();
    let (out, idx) = build(&f, "0 0\n1 0\n0 5\n", &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stats: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(stats["leaf_count"], 3);
    assert_eq!(stats["points"], 3);
    assert_eq!(stats["duplicates"], 0);
    let tree = index_file::load(&idx).unwrap();
    assert_eq!(tree.leaf_count(), 3);
}

#[test]
fn build_reports_duplicates_and_writes_stats() {
    let f = Fixture::new();
    let stats_path = f.path("stats.json");
    let (out, idx) = build(&f, "1,1\n2,2\n1,1\n1,1\n", &["--stats", s(&stats_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stats: Value = serde_json::from_str(&fs::read_to_string(&stats_path).unwrap()).unwrap();
    assert_eq!(stats["points"], 2);
    assert_eq!(stats["input_points"], 4);
    assert_eq!(stats["duplicates"], 2);
    let tree = index_file::load(&idx).unwrap();
    assert_eq!(tree.original_ids(0), &[0, 2, 3]);
}

#[test]
fn build_errors() {
    let f = Fixture::new();
    let (out, _) = build(&f, "0 0\n# ok\n1 2 3\n", &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let (out, _) = build(&f, "0 0\n1 x\n", &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 2"));

    let (out, _) = build(&f, "# nothing\n\n", &[]);
    assert!(!out.status.success());

    let pts = f.file("p.txt", "0 0\n1 1\n");
    let out = run(&["build", s(&pts), "--epsilon", "0", "--out", s(&f.path("i"))]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("epsilon"));

    let out = run(&["build", s(&f.path("missing.txt")), "--epsilon", "1", "--out", "x"]);
    assert!(!out.status.success());

    let out = run(&["build", s(&pts), "--epsilon", "1", "--metric", "l3", "--out", "x"]);
    assert!(!out.status.success());
}

#[test]
fn query_rows() {
    let f = Fixture::new();
    let (out, idx) = build(&f, "0 0\n3 4\n3 4\n10 10\n", &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let qs = f.file("q.txt", "3,4\n0.1 0\n");
    let stats = f.path("qstats.json");
    let out = run(&["query", s(&idx), s(&qs), "--stats", s(&stats)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][1], "1 2");
    assert_eq!(rows[0][2], "0");
    assert_eq!(rows[1][1], "0");
    let qstats: Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(qstats["queries"], 2);
    assert!(qstats["terminals"].is_object());
}

#[test]
fn query_empty_file_and_errors() {
    let f = Fixture::new();
    let (_, idx) = build(&f, &grid_points(4), &[]);
    let empty = f.file("empty.txt", "# no queries\n");
    let out = run(&["query", s(&idx), s(&empty)]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "");

    let wrong = f.file("wrong.txt", "1 2 3\n");
    let out = run(&["query", s(&idx), s(&wrong)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 1"));

    let q = f.file("q.txt", "1 1\n");
    let out = run(&["query", s(&idx), s(&q), "--oracle", "lsh"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown oracle"));
}

#[test]
fn verify_exact_and_adversarial() {
    let f = Fixture::new();
    let (_, idx) = build(&f, &grid_points(9), &[]);
    let q = f.file("q.txt", "0.2 0.3\n5 5\n-3 2\n100 -4\n");
    let out = run(&["verify", s(&idx), s(&q), "--trials", "100"]);
    assert!(out.status.success(), "{}{}", stdout(&out), stderr(&out));
    let rep: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rep["violation_count"], 0);
    assert_eq!(rep["queries"], 104);

    let out = run(&[
        "verify", s(&idx), s(&q), "--trials", "20", "--oracle", "adversarial", "--seeds", "0..100",
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    let rep: Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rep["seeds"], 100);
    assert_eq!(rep["checked"], 2400);
    assert_eq!(rep["violation_count"], 0);
    assert!(rep["max_ratio"].as_f64().unwrap() <= 2.0 * (1.0 + 1e-9));
}

#[test]
fn query_with_both_oracles_passes_verify() {
    let f = Fixture::new();
    let (_, idx) = build(&f, &grid_points(6), &[]);
    let q = f.file("q.txt", "0.5 0.5\n2.2 1.9\n7 0\n");
    for extra in [vec![], vec!["--oracle", "adversarial", "--seed", "7"]] {
        let mut args = vec!["query", s(&idx), s(&q)];
        args.extend(extra.iter().copied());
        assert!(run(&args).status.success());
        let mut args = vec!["verify", s(&idx), s(&q)];
        args.extend(extra.iter().copied());
        let out = run(&args);
        assert!(out.status.success(), "{}", stdout(&out));
    }
}

#[test]
fn corrupted_index_fails_verification() {
    let f = Fixture::new();
    let (_, idx) = build(&f, &grid_points(5), &[]);
    let mut tree_bytes = fs::read(&idx).unwrap();
    let tree = index_file::from_bytes(&tree_bytes).unwrap();
    // drop the last child of the root: rewrite its child count and remove
    // the id that follows
    let root = tree.root();
    let d = tree.dim();
    let n = tree.points().len();
    let mut pos = 6 + 4 + 4 + 8 + 8 + 1;
    for i in 0..n as u32 {
        pos += 8 + 8 * d + 4 + 8 * tree.original_ids(i).len();
    }
    pos += 4 * n + 4;
    pos += 4 + 4 + 8 * d + 8 + 8 * d + 4 + 8 + 8 + 4 + 4;
    let k = root.children.len() as u32;
    assert_eq!(&tree_bytes[pos..pos + 4], &k.to_le_bytes());
    tree_bytes[pos..pos + 4].copy_from_slice(&(k - 1).to_le_bytes());
    let last = pos + 4 + 4 * (k as usize - 1);
    tree_bytes.drain(last..last + 4);
    let bad = f.path("bad.bin");
    fs::write(&bad, &tree_bytes).unwrap();

    let q = f.file("q.txt", "1 1\n");
    let out = run(&["verify", s(&bad), s(&q)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error"), "{}", stderr(&out));
}

#[test]
fn version_mismatch_is_rejected() {
    let f = Fixture::new();
    let (_, idx) = build(&f, "0 0\n1 1\n", &[]);
    let mut bytes = fs::read(&idx).unwrap();
    bytes[6..10].copy_from_slice(&7u32.to_le_bytes());
    fs::write(&idx, &bytes).unwrap();
    let q = f.file("q.txt", "1 1\n");
    let out = run(&["query", s(&idx), s(&q)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("version 7"));
}

#[test]
fn build_is_byte_deterministic() {
    let f = Fixture::new();
    let (_, a) = build(&f, &grid_points(7), &[]);
    let first = fs::read(&a).unwrap();
    let (_, b) = build(&f, &grid_points(7), &[]);
    assert_eq!(first, fs::read(&b).unwrap());
}

#[test]
fn bench_rows() {
    let mut out = Vec::new();
    let outcome = cli::run(
        [
            "annred", "bench", "--sizes", "100,1000,10000", "--dim", "2", "--epsilon", "1",
            "--queries", "20",
        ],
        &mut out,
    )
    .unwrap();
    assert_eq!(outcome, Outcome::Success);
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert!(row["node_count"].as_u64().unwrap() <= 2 * row["n"].as_u64().unwrap());
        assert_eq!(row["within_node_bound"], true);
        assert_eq!(row["within_nbr_bound"], true);
    }
}

#[test]
fn bench_grid_and_degenerate() {
    let mut out = Vec::new();
    cli::run(
        ["annred", "bench", "--sizes", "1,1024", "--distribution", "grid", "--queries", "5"],
        &mut out,
    )
    .unwrap();
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[0]["height"], 0);
    assert_eq!(rows[0]["node_count"], 1);
    // 32 x 32 lattice: fan-out is at least 4, so height is at most
    // log4(1024) = 5
    let h = rows[1]["height"].as_u64().unwrap();
    assert!((1..=5).contains(&h), "height {h}");

    let err = cli::run(["annred", "bench", "--distribution", "gaussian"], &mut Vec::new());
    assert!(err.is_err());
    let out = run(&["bench", "--distribution", "gaussian"]);
    assert!(!out.status.success());
    let out = run(&["bench", "--sizes", "100,10"]);
    assert!(!out.status.success());
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("build"));
}
