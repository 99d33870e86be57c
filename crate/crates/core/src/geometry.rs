//! Points, L1/L2/L∞ metrics, minimal cubical boxes and the center-hyperplane
//! split step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point with a stable identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub id: u64,
    pub coords: Vec<f64>,
}

/// Minkowski metric of order 1, 2 or ∞.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    L1,
    L2,
    LInf,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2, Metric::LInf];

    /// Distance between two coordinate slices of equal length.
    ///
    /// Callers are responsible for the length check; use [`distance`] for a
    /// checked version.
    #[inline]
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let gaps = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        self.norm(gaps)
    }

    /// Norm of a vector of non-negative per-coordinate gaps.
    #[inline]
    pub fn norm<I: Iterator<Item = f64>>(self, gaps: I) -> f64 {
        match self {
            Metric::L1 => gaps.sum(),
            Metric::L2 => gaps.map(|g| g * g).sum::<f64>().sqrt(),
            Metric::LInf => gaps.fold(0.0, f64::max),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Metric::L1 => 1,
            Metric::L2 => 2,
            Metric::LInf => 0xff,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Metric> {
        match tag {
            1 => Some(Metric::L1),
            2 => Some(Metric::L2),
            0xff => Some(Metric::LInf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::LInf => "linf",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            "linf" | "l-inf" | "linfinity" => Ok(Metric::LInf),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

/// Checked distance between two points.
pub fn distance(a: &Point, b: &Point, metric: Metric) -> Result<f64> {
    if a.coords.len() != b.coords.len() {
        return Err(Error::DimensionMismatch {
            expected: a.coords.len(),
            found: b.coords.len(),
        });
    }
    Ok(metric.dist(&a.coords, &b.coords))
}

/// Flat, row-major store of `d`-dimensional points with stable ids.
///
/// Points are addressed by their position (`u32` index) everywhere inside
/// the crate; `ids` maps a position back to the caller's identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<u64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        PointSet {
            dim,
            coords: Vec::new(),
            ids: Vec::new(),
        }
    }

    /// Builds a set from rows, assigning ids `0..rows.len()`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyPointSet)?;
        let mut set = PointSet::new(first.as_ref().len());
        for (i, row) in rows.iter().enumerate() {
            set.push(i as u64, row.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, id: u64, coords: &[f64]) -> Result<u32> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: coords.len(),
            });
        }
        if let Some(&value) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFinite { value });
        }
        if self.ids.len() >= u32::MAX as usize {
            return Err(Error::Invariant("more than u32::MAX points".into()));
        }
        // -0.0 and 0.0 are the same location
        self.coords.extend(coords.iter().map(|&c| c + 0.0));
        self.ids.push(id);
        Ok((self.ids.len() - 1) as u32)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn coords(&self, idx: u32) -> &[f64] {
        let start = idx as usize * self.dim;
        &self.coords[start..start + self.dim]
    }

    #[inline]
    pub fn id(&self, idx: u32) -> u64 {
        self.ids[idx as usize]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn raw_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, idx: u32) -> Point {
        Point {
            id: self.id(idx),
            coords: self.coords(idx).to_vec(),
        }
    }

    /// Position of the point with the given id.
    pub fn index_of(&self, id: u64) -> Result<u32> {
        self.ids
            .iter()
            .position(|&x| x == id)
            .map(|p| p as u32)
            .ok_or(Error::UnknownPoint(id))
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> {
        0..self.len() as u32
    }

    /// Collapses points with identical coordinates.
    ///
    /// Returns the distinct points (keeping the first occurrence's id) and,
    /// for each distinct point, the ids of every original point at that
    /// location in input order.
    pub fn dedup(&self) -> (PointSet, Vec<Vec<u64>>) {
        use std::collections::HashMap;

        let mut seen: HashMap<Vec<u64>, u32> = HashMap::with_capacity(self.len());
        let mut out = PointSet::new(self.dim);
        let mut groups: Vec<Vec<u64>> = Vec::new();
        for idx in self.indices() {
            let key: Vec<u64> = self.coords(idx).iter().map(|c| c.to_bits()).collect();
            match seen.get(&key) {
                Some(&rep) => groups[rep as usize].push(self.id(idx)),
                None => {
                    let rep = out
                        .push(self.id(idx), self.coords(idx))
                        .expect("coordinates already validated");
                    seen.insert(key, rep);
                    groups.push(vec![self.id(idx)]);
                }
            }
        }
        (out, groups)
    }
}

/// An axis-aligned cube `[anchor_i, anchor_i + len]` holding a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicalBox {
    pub anchor: Vec<f64>,
    pub len: f64,
    pub point_ids: Vec<u32>,
}

impl CubicalBox {
    pub fn is_singleton(&self) -> bool {
        self.point_ids.len() == 1
    }

    pub fn contains(&self, coords: &[f64]) -> bool {
        self.anchor
            .iter()
            .zip(coords)
            .all(|(&a, &x)| x >= a && x - a <= self.len)
    }
}

/// Coordinate-wise minimum and maximum of a non-empty subset.
pub(crate) fn bounds(ids: &[u32], points: &PointSet) -> (Vec<f64>, Vec<f64>) {
    let mut lo = points.coords(ids[0]).to_vec();
    let mut hi = lo.clone();
    for &id in &ids[1..] {
        for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(points.coords(id)) {
            if x < *l {
                *l = x;
            }
            if x > *h {
                *h = x;
            }
        }
    }
    (lo, hi)
}

/// Minimal cubical box of a subset, anchored at the coordinate-wise minimum.
pub fn mcb_of(ids: &[u32], points: &PointSet) -> Result<CubicalBox> {
    if ids.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let (lo, hi) = bounds(ids, points);
    let len = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    Ok(CubicalBox {
        anchor: lo,
        len,
        point_ids: ids.to_vec(),
    })
}

/// Minimal cubical box of a whole point set.
pub fn mcb(points: &PointSet) -> Result<CubicalBox> {
    let ids: Vec<u32> = points.indices().collect();
    mcb_of(&ids, points)
}

/// One split step: cuts `cube` by the `d` hyperplanes through its center and
/// shrinks every non-empty cell to its minimal cubical box.
///
/// A coordinate equal to the center goes to the lower cell. Cells are
/// returned in ascending order of their orthant bitmask.
pub fn split_step(cube: &CubicalBox, points: &PointSet) -> Result<Vec<CubicalBox>> {
    if cube.point_ids.len() < 2 {
        return Err(Error::Unsplittable("box holds a single point"));
    }
    if !(cube.len > 0.0) {
        return Err(Error::Unsplittable("box has zero side length"));
    }
    let half = cube.len * 0.5;
    let center: Vec<f64> = cube.anchor.iter().map(|a| a + half).collect();

    let words = cube.anchor.len().div_ceil(64);
    let mut cells: Vec<(Vec<u64>, Vec<u32>)> = Vec::new();
    let mut mask = vec![0u64; words];
    for &id in &cube.point_ids {
        mask.iter_mut().for_each(|w| *w = 0);
        for (i, (&xi, &ci)) in points.coords(id).iter().zip(&center).enumerate() {
            if xi > ci {
                mask[words - 1 - i / 64] |= 1 << (i % 64);
            }
        }
        match cells.binary_search_by(|(m, _)| m.as_slice().cmp(&mask)) {
            Ok(pos) => cells[pos].1.push(id),
            Err(pos) => cells.insert(pos, (mask.clone(), vec![id])),
        }
    }
    if cells.len() < 2 {
        return Err(Error::Unsplittable(
            "center hyperplanes do not separate the points",
        ));
    }
    cells
        .into_iter()
        .map(|(_, ids)| mcb_of(&ids, points))
        .collect()
}

fn check_ids(ids: &[u32], points: &PointSet) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    match ids.iter().find(|&&i| i as usize >= points.len()) {
        Some(&bad) => Err(Error::UnknownPoint(bad as u64)),
        None => Ok(()),
    }
}

/// Exact diameter of a subset by scanning every pair.
pub fn pairwise_diameter(ids: &[u32], points: &PointSet, metric: Metric) -> Result<f64> {
    check_ids(ids, points)?;
    let mut best = 0.0f64;
    for (k, &a) in ids.iter().enumerate() {
        let pa = points.coords(a);
        for &b in &ids[k + 1..] {
            best = best.max(metric.dist(pa, points.coords(b)));
        }
    }
    Ok(best)
}

/// Exact maximum cross distance between two subsets by scanning every pair.
pub fn dmax_between(a: &[u32], b: &[u32], points: &PointSet, metric: Metric) -> Result<f64> {
    check_ids(a, points)?;
    check_ids(b, points)?;
    let mut best = 0.0f64;
    for &x in a {
        let px = points.coords(x);
        for &y in b {
            best = best.max(metric.dist(px, points.coords(y)));
        }
    }
    Ok(best)
}

/// Exact diameter with bound-based pruning.
///
/// Starts from a lower bound found by repeated farthest-point sweeps, then
/// discards every point whose distance to the farthest corner of the
/// bounding box cannot beat that bound. Any pair longer than the bound has
/// both endpoints among the survivors, which are scanned exhaustively.
/// Returns the same value as [`pairwise_diameter`].
pub fn diameter(ids: &[u32], points: &PointSet, metric: Metric) -> Result<f64> {
    check_ids(ids, points)?;
    if ids.len() < 64 {
        return pairwise_diameter(ids, points, metric);
    }
    let (lo, hi) = bounds(ids, points);

    let farthest = |from: u32| -> (u32, f64) {
        let p = points.coords(from);
        ids.iter()
            .map(|&o| (o, metric.dist(p, points.coords(o))))
            .fold((from, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc })
    };
    let mut lower = 0.0f64;
    let mut start = ids[0];
    for _ in 0..4 {
        let (far, dist) = farthest(start);
        if dist <= lower {
            break;
        }
        lower = dist;
        start = far;
    }

    let survivors: Vec<u32> = ids
        .iter()
        .copied()
        .filter(|&id| {
            let x = points.coords(id);
            let reach = metric.norm(
                x.iter()
                    .zip(lo.iter().zip(&hi))
                    .map(|(&xi, (&l, &h))| (xi - l).abs().max((h - xi).abs())),
            );
            reach > lower
        })
        .collect();
    if survivors.len() < 2 {
        return Ok(lower);
    }
    Ok(lower.max(pairwise_diameter(&survivors, points, metric)?))
}
