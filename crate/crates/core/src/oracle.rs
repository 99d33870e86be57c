//! The (c, r) near neighbor decision oracle and two reference implementations.
//!
//! An oracle answers a query `(Q, q, c, r)`: if some candidate lies within
//! `r` of `q` it must return a candidate within `c·r`; if every candidate is
//! farther than `c·r` it must answer `No`. Anything in between is up to the
//! implementation.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Metric;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate<'a> {
    pub id: u64,
    pub coords: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleQuery<'a> {
    pub candidates: Vec<Candidate<'a>>,
    pub query: &'a [f64],
    pub r: f64,
    pub c: f64,
    pub metric: Metric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OracleAnswer {
    Point(u64),
    No,
}

impl<'a> OracleQuery<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidOracleQuery("no candidates".into()));
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::InvalidOracleQuery(format!("r = {} is not positive", self.r)));
        }
        if !(self.c > 1.0) || !self.c.is_finite() {
            return Err(Error::InvalidOracleQuery(format!("c = {} is not above 1", self.c)));
        }
        let d = self.query.len();
        if let Some(bad) = self.candidates.iter().find(|c| c.coords.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.coords.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn reach(&self) -> f64 {
        self.c * self.r
    }

    fn distances(&self) -> Vec<f64> {
        self.candidates
            .iter()
            .map(|c| self.metric.dist(c.coords, self.query))
            .collect()
    }

    /// Whether `answer` is legal for this query.
    pub fn admits(&self, answer: OracleAnswer) -> bool {
        let dists = self.distances();
        let nearest = dists.iter().copied().fold(f64::INFINITY, f64::min);
        match answer {
            OracleAnswer::No => nearest > self.r,
            OracleAnswer::Point(id) => self
                .candidates
                .iter()
                .zip(&dists)
                .any(|(c, &d)| c.id == id && d <= self.reach()),
        }
    }
}

/// A (c, r) near neighbor algorithm used as a black box.
pub trait NearOracle {
    fn answer(&self, query: &OracleQuery<'_>) -> OracleAnswer;
}

/// Linear scan. Returns the nearest candidate (smallest id on ties)
/// whenever it lies within `c·r`, `No` otherwise.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactOracle;

impl NearOracle for ExactOracle {
    fn answer(&self, query: &OracleQuery<'_>) -> OracleAnswer {
        exact_oracle(query)
    }
}

pub fn exact_oracle(query: &OracleQuery<'_>) -> OracleAnswer {
    let mut best: Option<(f64, u64)> = None;
    for c in &query.candidates {
        let d = query.metric.dist(c.coords, query.query);
        let better = match best {
            None => true,
            Some((bd, bid)) => d < bd || (d == bd && c.id < bid),
        };
        if better {
            best = Some((d, c.id));
        }
    }
    match best {
        Some((d, id)) if d <= query.reach() => OracleAnswer::Point(id),
        _ => OracleAnswer::No,
    }
}

/// Contract-compliant but unhelpful: picks an arbitrary legal candidate
/// rather than the nearest one, and in the undecided band flips a coin
/// between `No` and a legal candidate. Deterministic in `(query, seed)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdversarialOracle {
    pub seed: u64,
}

impl NearOracle for AdversarialOracle {
    fn answer(&self, query: &OracleQuery<'_>) -> OracleAnswer {
        adversarial_oracle(query, self.seed)
    }
}

fn fingerprint(query: &OracleQuery<'_>) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    mix(query.r.to_bits());
    mix(query.c.to_bits());
    query.query.iter().for_each(|x| mix(x.to_bits()));
    query.candidates.iter().for_each(|c| mix(c.id));
    h
}

pub fn adversarial_oracle(query: &OracleQuery<'_>, seed: u64) -> OracleAnswer {
    let dists = query.distances();
    let reach = query.reach();
    let nearest = dists.iter().copied().fold(f64::INFINITY, f64::min);
    if nearest > reach {
        return OracleAnswer::No;
    }
    let legal: Vec<u64> = query
        .candidates
        .iter()
        .zip(&dists)
        .filter(|(_, &d)| d <= reach)
        .map(|(c, _)| c.id)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fingerprint(query));
    if nearest > query.r && rng.gen_bool(0.5) {
        return OracleAnswer::No;
    }
    OracleAnswer::Point(legal[rng.gen_range(0..legal.len())])
}

/// Oracle selection by name, as used on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Exact,
    Adversarial { seed: u64 },
}

impl OracleKind {
    pub fn from_name(name: &str, seed: u64) -> Result<OracleKind> {
        match name.parse::<OracleName>()? {
            OracleName::Exact => Ok(OracleKind::Exact),
            OracleName::Adversarial => Ok(OracleKind::Adversarial { seed }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OracleKind::Exact => "exact",
            OracleKind::Adversarial { .. } => "adversarial",
        }
    }
}

impl NearOracle for OracleKind {
    fn answer(&self, query: &OracleQuery<'_>) -> OracleAnswer {
        match *self {
            OracleKind::Exact => exact_oracle(query),
            OracleKind::Adversarial { seed } => adversarial_oracle(query, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleName {
    Exact,
    Adversarial,
}

impl FromStr for OracleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(OracleName::Exact),
            "adversarial" => Ok(OracleName::Adversarial),
            other => Err(Error::UnknownOracle(other.to_string())),
        }
    }
}
