//! Command-line front end.

pub mod index_file;
pub mod points;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Metric, PointSet};
use crate::oracle::OracleKind;
use crate::query::{brute_force_nn, query, QueryResult};
use crate::split_tree::SplitTree;
use crate::stats::{ceil_log2, BuildStats, QueryStats};

pub use points::{generate, parse_points, random_queries, read_points, Distribution};

/// Relative slack allowed on the approximation bound when verifying.
pub const VERIFY_SLACK: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "annred", version, about = "Approximate nearest neighbor search via a near neighbor oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from a point file.
    Build(BuildArgs),
    /// Answer queries against an index.
    Query(QueryArgs),
    /// Check query answers against brute force.
    Verify(VerifyArgs),
    /// Build and query synthetic data sets, one JSON row per size.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    pub points: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value = "l2")]
    pub metric: Metric,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the build statistics here.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value = "exact")]
    pub oracle: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub index: PathBuf,
    pub queries: PathBuf,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub index: PathBuf,
    pub queries: PathBuf,
    /// Random queries added to those read from the file, drawn with `--seed`.
    #[arg(long, default_value_t = 0)]
    pub trials: usize,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Oracle seeds to run, as `a..b` or a single seed. Defaults to `--seed`.
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Ascending point counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long, default_value = "l2")]
    pub metric: Metric,
    #[arg(long, default_value = "uniform")]
    pub distribution: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random queries per size.
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

/// How a command ended when it did not fail outright.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Verification found answers outside the approximation bound.
    Violations,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Violations => 2,
        }
    }
}

/// Parses `args` (program name first) and runs the command, writing its
/// report to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<Outcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render())?;
            return Ok(Outcome::Success);
        }
        Err(e) => return Err(Error::Usage(e.render().to_string())),
    };
    execute(cli.command, out)
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<Outcome> {
    match command {
        Command::Build(a) => cmd_build(&a, out),
        Command::Query(a) => cmd_query(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

fn write_stats<S: Serialize>(stats: &S, path: Option<&Path>) -> Result<String> {
    let text = serde_json::to_string(stats).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(path) = path {
        fs::write(path, format!("{text}\n"))?;
    }
    Ok(text)
}

pub fn cmd_build(a: &BuildArgs, out: &mut dyn Write) -> Result<Outcome> {
    let points = read_points(&a.points, None)?.ok_or(Error::EmptyPointSet)?;
    let t0 = Instant::now();
    let tree = SplitTree::build(&points, a.epsilon, a.metric)?;
    let stats = BuildStats::of(&tree, t0.elapsed().as_secs_f64());
    index_file::save(&tree, &a.out)?;
    writeln!(out, "{}", write_stats(&stats, a.stats.as_deref())?)?;
    Ok(Outcome::Success)
}

fn load_queries(tree: &SplitTree, path: &Path) -> Result<Vec<Vec<f64>>> {
    let set = read_points(path, Some(tree.dim()))?.expect("dimension is fixed");
    Ok(set.indices().map(|i| set.coords(i).to_vec()).collect())
}

fn format_row(i: usize, r: &QueryResult) -> String {
    let ids: Vec<String> = r.answer_ids.iter().map(u64::to_string).collect();
    format!(
        "{i}\t{}\t{}\t{}\t{}",
        ids.join(" "),
        r.answer_distance,
        r.oracle_invocations,
        r.terminal.name()
    )
}

/// Output rows are `query index`, answer ids (space separated), distance,
/// oracle invocations and terminal kind, separated by tabs.
pub fn cmd_query(a: &QueryArgs, out: &mut dyn Write) -> Result<Outcome> {
    let oracle = OracleKind::from_name(&a.oracle.oracle, a.oracle.seed)?;
    let tree = index_file::load(&a.index)?;
    let queries = load_queries(&tree, &a.queries)?;
    let t0 = Instant::now();
    let results = queries
        .iter()
        .map(|q| query(&tree, q, &oracle))
        .collect::<Result<Vec<_>>>()?;
    let elapsed = t0.elapsed().as_secs_f64();
    for (i, r) in results.iter().enumerate() {
        writeln!(out, "{}", format_row(i, r))?;
    }
    if let Some(path) = &a.stats {
        write_stats(&QueryStats::of(&results, elapsed), Some(path))?;
    }
    Ok(Outcome::Success)
}

fn parse_seeds(text: &str) -> Result<Range<u64>> {
    let bad = || Error::Usage(format!("invalid seed range `{text}` (expected a..b or a seed)"));
    match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
            if lo >= hi {
                return Err(bad());
            }
            Ok(lo..hi)
        }
        None => {
            let s: u64 = text.trim().parse().map_err(|_| bad())?;
            Ok(s..s + 1)
        }
    }
}

/// Ratio `D(q, answer) / D(q, nearest)`; 1 when both are zero.
pub fn approximation_ratio(answer: f64, nearest: f64) -> f64 {
    if nearest == 0.0 {
        if answer == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        answer / nearest
    }
}

/// Whether `answer` is within `(1 + ε)(1 + slack)` of `nearest`.
pub fn within_bound(answer: f64, nearest: f64, epsilon: f64) -> bool {
    answer <= (1.0 + epsilon) * (1.0 + VERIFY_SLACK) * nearest
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub seed: u64,
    pub query: usize,
    pub answer_distance: f64,
    pub nearest_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub oracle: &'static str,
    pub seeds: usize,
    pub queries: usize,
    pub checked: usize,
    pub max_ratio: f64,
    pub bound: f64,
    pub max_invocations: usize,
    pub mean_invocations: f64,
    pub violation_count: usize,
    /// The first few violations.
    pub violations: Vec<Violation>,
}

pub fn verify(
    tree: &SplitTree,
    queries: &[Vec<f64>],
    oracle_name: &str,
    seeds: Range<u64>,
) -> Result<VerifyReport> {
    let oracle_seeds: Vec<u64> = match OracleKind::from_name(oracle_name, 0)? {
        OracleKind::Exact => vec![seeds.start],
        OracleKind::Adversarial { .. } => seeds.collect(),
    };
    let nearest = queries
        .iter()
        .map(|q| brute_force_nn(tree.points(), q, tree.metric()).map(|(_, d)| d))
        .collect::<Result<Vec<f64>>>()?;
    let mut report = VerifyReport {
        oracle: OracleKind::from_name(oracle_name, 0)?.name(),
        seeds: oracle_seeds.len(),
        queries: queries.len(),
        checked: 0,
        max_ratio: if queries.is_empty() { 0.0 } else { 1.0 },
        bound: (1.0 + tree.epsilon()) * (1.0 + VERIFY_SLACK),
        max_invocations: 0,
        mean_invocations: 0.0,
        violation_count: 0,
        violations: Vec::new(),
    };
    let mut total_invocations = 0usize;
    for &seed in &oracle_seeds {
        let oracle = OracleKind::from_name(oracle_name, seed)?;
        for (i, (q, &nn)) in queries.iter().zip(&nearest).enumerate() {
            let r = query(tree, q, &oracle)?;
            report.checked += 1;
            total_invocations += r.oracle_invocations;
            report.max_invocations = report.max_invocations.max(r.oracle_invocations);
            report.max_ratio = report.max_ratio.max(approximation_ratio(r.answer_distance, nn));
            if !within_bound(r.answer_distance, nn, tree.epsilon()) {
                report.violation_count += 1;
                if report.violations.len() < 20 {
                    report.violations.push(Violation {
                        seed,
                        query: i,
                        answer_distance: r.answer_distance,
                        nearest_distance: nn,
                    });
                }
            }
        }
    }
    if report.checked > 0 {
        report.mean_invocations = total_invocations as f64 / report.checked as f64;
    }
    Ok(report)
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<Outcome> {
    let seeds = match &a.seeds {
        Some(s) => parse_seeds(s)?,
        None => a.oracle.seed..a.oracle.seed + 1,
    };
    OracleKind::from_name(&a.oracle.oracle, 0)?;
    let tree = index_file::load(&a.index)?;
    let mut queries = load_queries(&tree, &a.queries)?;
    queries.extend(random_queries(tree.points(), a.trials, a.oracle.seed));
    let report = verify(&tree, &queries, &a.oracle.oracle, seeds)?;
    writeln!(out, "{}", write_stats(&report, None)?)?;
    Ok(if report.violation_count == 0 {
        Outcome::Success
    } else {
        Outcome::Violations
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub distribution: String,
    pub n: usize,
    #[serde(flatten)]
    pub build: BuildStats,
    pub within_node_bound: bool,
    pub within_height_bound: bool,
    pub within_nbr_bound: bool,
    pub queries: usize,
    pub mean_invocations: f64,
    pub max_invocations: usize,
    pub log2_n: f64,
    pub query_seconds: f64,
}

/// One bench row for `n` points drawn as `a` describes.
pub fn bench_row(a: &BenchArgs, distribution: Distribution, n: usize) -> Result<BenchRow> {
    let (dim, epsilon, metric, seed, queries) = (a.dim, a.epsilon, a.metric, a.seed, a.queries);
    let points: PointSet = generate(distribution, n, dim, seed);
    let t0 = Instant::now();
    let tree = SplitTree::build(&points, epsilon, metric)?;
    let build = BuildStats::of(&tree, t0.elapsed().as_secs_f64());
    let qs = random_queries(tree.points(), queries, seed ^ 0x5eed);
    let t1 = Instant::now();
    let results = qs
        .iter()
        .map(|q| query(&tree, q, &OracleKind::Exact))
        .collect::<Result<Vec<_>>>()?;
    let qstats = QueryStats::of(&results, t1.elapsed().as_secs_f64());
    Ok(BenchRow {
        distribution: a.distribution.clone(),
        n,
        within_node_bound: build.node_count <= build.node_bound,
        within_height_bound: build.height <= ceil_log2(build.points),
        within_nbr_bound: build.nbr_max as f64 <= build.nbr_size_bound,
        build,
        queries,
        mean_invocations: qstats.mean_invocations,
        max_invocations: qstats.max_invocations,
        log2_n: (n as f64).log2(),
        query_seconds: qstats.query_seconds,
    })
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<Outcome> {
    let distribution: Distribution = a.distribution.parse()?;
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(Error::Usage("sizes must be positive".into()));
    }
    if a.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("sizes must be ascending".into()));
    }
    let mut lines = Vec::new();
    for &n in &a.sizes {
        let row = bench_row(a, distribution, n)?;
        let line = write_stats(&row, None)?;
        writeln!(out, "{line}")?;
        lines.push(line);
    }
    if let Some(path) = &a.stats {
        fs::write(path, lines.join("\n") + "\n")?;
    }
    Ok(Outcome::Success)
}

/// Entry point of the `annred` binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(std::env::args_os(), &mut lock) {
        Ok(outcome) => outcome.exit_code(),
        Err(Error::Usage(msg)) => {
            eprint!("{msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
