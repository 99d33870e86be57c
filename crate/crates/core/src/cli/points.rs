//! Point files and synthetic point sets.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointSet;

/// Parses one point per line, coordinates separated by commas and/or
/// whitespace. Blank lines and lines starting with `#` are skipped. Ids are
/// assigned 0, 1, ... in row order.
///
/// `dim` fixes the expected arity; otherwise the first row decides. An
/// input without rows yields `Ok(None)` when `dim` is unknown.
pub fn parse_points(text: &str, dim: Option<usize>) -> Result<Option<PointSet>> {
    let mut set = dim.map(PointSet::new);
    let mut next_id = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{t}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.is_empty() {
            return Err(Error::Parse {
                line,
                message: "row has no coordinates".into(),
            });
        }
        let set = set.get_or_insert_with(|| PointSet::new(row.len()));
        set.push(next_id, &row).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        next_id += 1;
    }
    Ok(set)
}

pub fn read_points(path: &Path, dim: Option<usize>) -> Result<Option<PointSet>> {
    parse_points(&fs::read_to_string(path)?, dim)
}

/// Shape of a synthetic point set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    /// Independent uniform coordinates in `[0, 1)`.
    Uniform,
    /// About `√n` tight clusters of side 0.01 around uniform centers.
    Clustered,
    /// The first `n` points of the integer lattice `[0, k)^d` with
    /// `k = ⌈n^(1/d)⌉`, in lexicographic order.
    Grid,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "clustered" => Ok(Distribution::Clustered),
            "grid" => Ok(Distribution::Grid),
            other => Err(Error::UnknownDistribution(other.to_string())),
        }
    }
}

pub fn generate(dist: Distribution, n: usize, dim: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = PointSet::new(dim);
    let mut row = vec![0.0; dim];
    match dist {
        Distribution::Uniform => {
            for i in 0..n {
                row.iter_mut().for_each(|x| *x = rng.gen::<f64>());
                set.push(i as u64, &row).expect("finite coordinates");
            }
        }
        Distribution::Clustered => {
            let k = ((n as f64).sqrt().ceil() as usize).max(1);
            let centers: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
                .collect();
            for i in 0..n {
                let c = &centers[rng.gen_range(0..k)];
                for (x, &m) in row.iter_mut().zip(c) {
                    *x = m + 0.01 * (rng.gen::<f64>() - 0.5);
                }
                set.push(i as u64, &row).expect("finite coordinates");
            }
        }
        Distribution::Grid => {
            let mut side = (n as f64).powf(1.0 / dim as f64).round().max(1.0) as usize;
            while side.checked_pow(dim as u32).is_some_and(|c| c < n) {
                side += 1;
            }
            let mut digits = vec![0usize; dim];
            for i in 0..n {
                for (x, &g) in row.iter_mut().zip(&digits) {
                    *x = g as f64;
                }
                set.push(i as u64, &row).expect("finite coordinates");
                for g in digits.iter_mut().rev() {
                    *g += 1;
                    if *g < side {
                        break;
                    }
                    *g = 0;
                }
            }
        }
    }
    set
}

/// Uniform queries over the bounding box of `points` enlarged by half its
/// extent on every side.
pub fn random_queries(points: &PointSet, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = points.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for idx in points.indices() {
        for (i, &x) in points.coords(idx).iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..d)
                .map(|i| {
                    let pad = ((hi[i] - lo[i]) * 0.5).max(0.5);
                    rng.gen_range(lo[i] - pad..hi[i] + pad)
                })
                .collect()
        })
        .collect()
}
