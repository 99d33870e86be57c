//! Binary index format, little-endian throughout.
//!
//! ```text
//! header  "ANNRED" | version u32 | d u32 | n u64 | ε f64 | metric u8
//! points  n × (id u64 | d × f64 | k u32 | k × original id u64)
//! order   n × u32
//! nodes   count u32, then per node in id order:
//!         parent u32 (u32::MAX for the root) | level u32 | anchor d × f64 |
//!         len f64 | upper d × f64 | center u32 | est f64 | rmax f64 |
//!         start u32 | end u32 | k u32 | k × child u32
//! nbr     per node in id order: k u32 | k × member u32 | rmax f64 | radius f64
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Metric, PointSet};
use crate::nbr::{NbrIndex, NbrSet};
use crate::split_tree::{SplitTree, TreeNode};

pub const MAGIC: &[u8; 6] = b"ANNRED";
pub const VERSION: u32 = 1;

const NO_PARENT: u32 = u32::MAX;

pub fn to_bytes(tree: &SplitTree) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let points = tree.points();
    let d = points.dim();
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(d as u32);
    w.u64(points.len() as u64);
    w.f64(tree.epsilon());
    w.0.push(tree.metric().tag());

    for idx in points.indices() {
        w.u64(points.id(idx));
        points.coords(idx).iter().for_each(|&x| w.f64(x));
        let group = tree.original_ids(idx);
        w.u32(group.len() as u32);
        group.iter().for_each(|&id| w.u64(id));
    }
    tree.order().iter().for_each(|&p| w.u32(p));

    w.u32(tree.node_count() as u32);
    for n in tree.nodes() {
        w.u32(n.parent.unwrap_or(NO_PARENT));
        w.u32(n.level);
        n.anchor.iter().for_each(|&x| w.f64(x));
        w.f64(n.len);
        n.upper.iter().for_each(|&x| w.f64(x));
        w.u32(n.center);
        w.f64(n.est);
        w.f64(n.rmax);
        w.u32(n.start);
        w.u32(n.end);
        w.u32(n.children.len() as u32);
        n.children.iter().for_each(|&c| w.u32(c));
    }
    for set in tree.nbr().sets() {
        w.u32(set.members.len() as u32);
        set.members.iter().for_each(|&m| w.u32(m));
        w.f64(set.rmax);
        w.f64(set.radius);
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<SplitTree> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not an index file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "index format version {version} is not supported (expected {VERSION})"
        )));
    }
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(Error::Format("dimension is zero".into()));
    }
    let n = r.count_u64(8 * (d + 2))?;
    if n == 0 {
        return Err(Error::Format("index holds no points".into()));
    }
    let epsilon = r.f64()?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Format(format!("invalid epsilon {epsilon}")));
    }
    let tag = r.u8()?;
    let metric =
        Metric::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown metric tag {tag}")))?;

    let mut points = PointSet::new(d);
    let mut duplicates = Vec::with_capacity(n);
    let mut coords = vec![0.0; d];
    for _ in 0..n {
        let id = r.u64()?;
        for x in coords.iter_mut() {
            *x = r.f64()?;
        }
        points.push(id, &coords)?;
        let k = r.count(8)?;
        let group = (0..k).map(|_| r.u64()).collect::<Result<Vec<u64>>>()?;
        if group.is_empty() {
            return Err(Error::Format(format!("point {id} has no original ids")));
        }
        duplicates.push(group);
    }
    let order = (0..n).map(|_| r.u32()).collect::<Result<Vec<u32>>>()?;

    let node_count = r.count(8 * (2 * d + 4))?;
    let mut nodes = Vec::with_capacity(node_count);
    for id in 0..node_count as u32 {
        let parent = match r.u32()? {
            NO_PARENT => None,
            p => Some(p),
        };
        let level = r.u32()?;
        let anchor = r.f64s(d)?;
        let len = r.f64()?;
        let upper = r.f64s(d)?;
        let center = r.u32()?;
        if center as usize >= n {
            return Err(Error::Format(format!("node {id} has center {center} out of range")));
        }
        let est = r.length()?;
        let rmax = r.length()?;
        let start = r.u32()?;
        let end = r.u32()?;
        let k = r.count(4)?;
        let children = (0..k).map(|_| r.u32()).collect::<Result<Vec<u32>>>()?;
        nodes.push(TreeNode {
            id,
            parent,
            children,
            level,
            anchor,
            len,
            upper,
            center,
            est,
            rmax,
            start,
            end,
        });
    }
    let mut sets = Vec::with_capacity(node_count);
    for owner in 0..node_count as u32 {
        let k = r.count(4)?;
        let members = (0..k).map(|_| r.u32()).collect::<Result<Vec<u32>>>()?;
        let rmax = r.length()?;
        let radius = r.length()?;
        sets.push(NbrSet {
            owner,
            members,
            rmax,
            radius,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after index".into()));
    }
    SplitTree::from_parts(
        points,
        duplicates,
        metric,
        epsilon,
        nodes,
        order,
        NbrIndex::from_sets(sets),
    )
}

pub fn save(tree: &SplitTree, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&to_bytes(tree))?;
    file.sync_all()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SplitTree> {
    from_bytes(&fs::read(path)?)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("index file is truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice has requested length"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        (0..k).map(|_| self.f64()).collect()
    }

    /// A finite non-negative length.
    fn length(&mut self) -> Result<f64> {
        let v = self.f64()?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Format(format!("invalid length {v}")));
        }
        Ok(v)
    }

    /// A u32 element count, rejected if the remaining bytes cannot hold
    /// that many items of at least `item_bytes` each.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let k = self.u32()? as usize;
        self.check_room(k, item_bytes)?;
        Ok(k)
    }

    fn count_u64(&mut self, item_bytes: usize) -> Result<usize> {
        let k = usize::try_from(self.u64()?)
            .map_err(|_| Error::Format("point count too large".into()))?;
        self.check_room(k, item_bytes)?;
        Ok(k)
    }

    fn check_room(&self, k: usize, item_bytes: usize) -> Result<()> {
        let need = k.checked_mul(item_bytes);
        match need {
            Some(need) if need <= self.buf.len() - self.pos => Ok(()),
            _ => Err(Error::Format("element count exceeds file size".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SplitTree {
        let pts = PointSet::from_rows(&[
            [0.0, 0.0],
            [1.0, 0.5],
            [1.0, 0.5],
            [4.0, -2.0],
            [4.5, -2.0],
            [9.0, 9.0],
        ])
        .unwrap();
        SplitTree::build(&pts, 0.5, Metric::L1).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let tree = sample();
        let bytes = to_bytes(&tree);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(back.nodes(), tree.nodes());
        assert_eq!(back.nbr(), tree.nbr());
        assert_eq!(back.original_ids(1), &[1, 2]);
        assert_eq!(back.metric(), Metric::L1);
        assert_eq!(back.epsilon().to_bits(), 0.5f64.to_bits());
    }

    #[test]
    fn header_layout() {
        let bytes = to_bytes(&sample());
        assert_eq!(&bytes[..6], b"ANNRED");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 5);
        assert_eq!(bytes[30], Metric::L1.tag());
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = to_bytes(&sample());
        bytes[6..10].copy_from_slice(&2u32.to_le_bytes());
        let err = from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 2"));
    }

    #[test]
    fn corruption_rejected() {
        let bytes = to_bytes(&sample());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(from_bytes(&magic).is_err());
        // any single flipped byte must not panic
        for i in 0..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0xa5;
            let _ = from_bytes(&b);
        }
    }
}
