//! Python bindings for `annred`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use annred::cli::index_file;
use annred::stats::BuildStats;
use annred::{Error, Metric, OracleKind, PointSet, SplitTree};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn metric(name: &str) -> PyResult<Metric> {
    name.parse().map_err(to_py)
}

fn point_set(rows: &[Vec<f64>]) -> PyResult<PointSet> {
    PointSet::from_rows(rows).map_err(to_py)
}

/// Box split tree index over a fixed point set.
#[pyclass(module = "annred_py", frozen)]
struct SplitIndex {
    tree: SplitTree,
    build_seconds: f64,
}

#[pymethods]
impl SplitIndex {
    #[new]
    #[pyo3(signature = (points, epsilon, metric = "l2"))]
    fn new(points: Vec<Vec<f64>>, epsilon: f64, metric: &str) -> PyResult<Self> {
        let metric = self::metric(metric)?;
        let points = point_set(&points)?;
        let t0 = std::time::Instant::now();
        let tree = SplitTree::build(&points, epsilon, metric).map_err(to_py)?;
        Ok(SplitIndex {
            tree,
            build_seconds: t0.elapsed().as_secs_f64(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let tree = index_file::load(&path).map_err(to_py)?;
        Ok(SplitIndex {
            tree,
            build_seconds: 0.0,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        index_file::save(&self.tree, &path).map_err(to_py)
    }

    /// Approximate nearest neighbor of `q` as a dict with keys `ids`,
    /// `distance`, `invocations`, `terminal` and `path`.
    #[pyo3(signature = (q, oracle = "exact", seed = 0))]
    fn query<'py>(
        &self,
        py: Python<'py>,
        q: Vec<f64>,
        oracle: &str,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let oracle = OracleKind::from_name(oracle, seed).map_err(to_py)?;
        let r = annred::query(&self.tree, &q, &oracle).map_err(to_py)?;
        let out = PyDict::new_bound(py);
        out.set_item("ids", r.answer_ids)?;
        out.set_item("distance", r.answer_distance)?;
        out.set_item("invocations", r.oracle_invocations)?;
        out.set_item("terminal", r.terminal.name())?;
        out.set_item("path", r.descent_path)?;
        Ok(out)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = BuildStats::of(&self.tree, self.build_seconds);
        let out = PyDict::new_bound(py);
        out.set_item("input_points", s.input_points)?;
        out.set_item("points", s.points)?;
        out.set_item("duplicates", s.duplicates)?;
        out.set_item("dim", s.dim)?;
        out.set_item("epsilon", s.epsilon)?;
        out.set_item("metric", s.metric)?;
        out.set_item("node_count", s.node_count)?;
        out.set_item("node_bound", s.node_bound)?;
        out.set_item("leaf_count", s.leaf_count)?;
        out.set_item("height", s.height)?;
        out.set_item("ceil_log2_n", s.ceil_log2_n)?;
        out.set_item("nbr_max", s.nbr_max)?;
        out.set_item("nbr_mean", s.nbr_mean)?;
        out.set_item("nbr_size_bound", s.nbr_size_bound)?;
        out.set_item("build_seconds", s.build_seconds)?;
        Ok(out)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.tree.dim()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.tree.epsilon()
    }

    #[getter]
    fn metric(&self) -> &'static str {
        self.tree.metric().name()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.tree.height()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.tree.node_count()
    }

    /// Number of distinct points.
    fn __len__(&self) -> usize {
        self.tree.points().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SplitIndex(points={}, dim={}, epsilon={}, metric='{}')",
            self.tree.points().len(),
            self.tree.dim(),
            self.tree.epsilon(),
            self.tree.metric().name()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, metric = "l2"))]
fn distance(a: Vec<f64>, b: Vec<f64>, metric: &str) -> PyResult<f64> {
    let m = self::metric(metric)?;
    if a.len() != b.len() {
        return Err(to_py(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        }));
    }
    Ok(m.dist(&a, &b))
}

/// Exact nearest neighbor by linear scan: `(row index, distance)`.
#[pyfunction]
#[pyo3(signature = (points, q, metric = "l2"))]
fn brute_force_nn(points: Vec<Vec<f64>>, q: Vec<f64>, metric: &str) -> PyResult<(u64, f64)> {
    let m = self::metric(metric)?;
    let set = point_set(&points)?;
    let (idx, d) = annred::brute_force_nn(&set, &q, m).map_err(to_py)?;
    Ok((set.id(idx), d))
}

#[pymodule]
fn annred_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SplitIndex>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_nn, m)?)?;
    Ok(())
}
