//! Distances and per-anchor radius ladders.
//!
//! Everything here is exact brute force: `O(N^2 D)` for a full set of ladders.
//! Balls are closed, so a token at distance exactly `r` counts toward `r`.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::TokenCloud;

/// Anchors processed together so that each target row is read once per block.
const ANCHOR_BLOCK: usize = 16;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("token index {index} out of range for a cloud of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("a ladder needs at least 2 tokens, cloud has {0}")]
    TooFewTokens(usize),
    #[error("ladder cap {cap} exceeds N - 1 = {max}")]
    CapTooLarge { cap: usize, max: usize },
    #[error("distance oracle violates {property} at {at:?}: {detail}")]
    OracleViolation {
        property: &'static str,
        at: Vec<usize>,
        detail: String,
    },
    #[error("ladder cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A caller-supplied symmetric distance on token indices `0..len()`.
pub trait DistanceOracle: Send + Sync + fmt::Debug {
    fn len(&self) -> usize;
    fn distance(&self, i: usize, j: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub enum MetricSource {
    AmbientEuclidean,
    ExplicitOracle(Arc<dyn DistanceOracle>),
}

/// Sorted distances from one anchor to the other tokens.
///
/// Radii are non-decreasing; `ties` counts adjacent equal pairs (a violation of
/// general position) and `zeros` counts duplicates of the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusLadder {
    pub anchor: usize,
    pub radii: Vec<f64>,
    pub ties: usize,
    pub zeros: usize,
}

impl RadiusLadder {
    pub fn new(anchor: usize, radii: Vec<f64>) -> Self {
        let ties = radii.windows(2).filter(|w| w[0] == w[1]).count();
        let zeros = radii.iter().filter(|&&r| r == 0.0).count();
        Self {
            anchor,
            radii,
            ties,
            zeros,
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn has_ties(&self) -> bool {
        self.ties > 0
    }

    /// Number of ladder entries with radius `<= r`, by bisection.
    pub fn count_within(&self, r: f64) -> usize {
        self.radii.partition_point(|&x| x <= r)
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        sum += d * d;
    }
    sum.sqrt()
}

fn check_index(cloud: &TokenCloud, index: usize) -> Result<(), MetricError> {
    if index >= cloud.len() {
        Err(MetricError::IndexOutOfRange {
            index,
            len: cloud.len(),
        })
    } else {
        Ok(())
    }
}

#[inline]
fn raw_distance(cloud: &TokenCloud, i: usize, j: usize) -> f64 {
    match cloud.metric() {
        MetricSource::AmbientEuclidean => euclidean(cloud.row(i), cloud.row(j)),
        MetricSource::ExplicitOracle(o) => {
            if i == j {
                0.0
            } else {
                o.distance(i, j)
            }
        }
    }
}

pub fn distance(cloud: &TokenCloud, i: usize, j: usize) -> Result<f64, MetricError> {
    check_index(cloud, i)?;
    check_index(cloud, j)?;
    Ok(raw_distance(cloud, i, j))
}

fn resolve_cap(cloud: &TokenCloud, cap: Option<usize>) -> Result<usize, MetricError> {
    let n = cloud.len();
    if n < 2 {
        return Err(MetricError::TooFewTokens(n));
    }
    match cap {
        Some(c) if c > n - 1 => Err(MetricError::CapTooLarge { cap: c, max: n - 1 }),
        Some(c) => Ok(c),
        None => Ok(n - 1),
    }
}

/// Turns a full distance row (including the anchor's own slot) into a ladder.
/// Ties are broken by token index, which makes the result unique.
fn ladder_from_row(anchor: usize, row: &[f64], cap: usize) -> RadiusLadder {
    let mut pairs: Vec<(f64, usize)> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != anchor)
        .map(|(j, &d)| (d, j))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if cap < pairs.len() {
        if cap > 0 {
            pairs.select_nth_unstable_by(cap - 1, order);
        }
        pairs.truncate(cap);
    }
    pairs.sort_unstable_by(order);
    RadiusLadder::new(anchor, pairs.into_iter().map(|p| p.0).collect())
}

/// Sorted distances from `anchor` to every other token, truncated to `cap`.
pub fn radius_ladder(
    cloud: &TokenCloud,
    anchor: usize,
    cap: Option<usize>,
) -> Result<RadiusLadder, MetricError> {
    let cap = resolve_cap(cloud, cap)?;
    check_index(cloud, anchor)?;
    let row: Vec<f64> = (0..cloud.len())
        .map(|j| raw_distance(cloud, anchor, j))
        .collect();
    Ok(ladder_from_row(anchor, &row, cap))
}

/// `|{y != anchor : d(anchor, y) <= r}|` by a direct loop.
pub fn range_count(cloud: &TokenCloud, anchor: usize, r: f64) -> Result<usize, MetricError> {
    check_index(cloud, anchor)?;
    Ok((0..cloud.len())
        .filter(|&j| j != anchor && raw_distance(cloud, anchor, j) <= r)
        .count())
}

/// Maps `f` over the ladder of every anchor in token order.
///
/// Anchors are processed in parallel blocks; ladders are built one at a time
/// and dropped after `f`, so memory stays at `O(block * N)`.
pub fn map_ladders<T, F>(cloud: &TokenCloud, cap: Option<usize>, f: F) -> Result<Vec<T>, MetricError>
where
    T: Send,
    F: Fn(RadiusLadder) -> T + Sync,
{
    let n = cloud.len();
    let cap = resolve_cap(cloud, cap)?;
    let blocks: Vec<Vec<T>> = (0..n.div_ceil(ANCHOR_BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * ANCHOR_BLOCK;
            let hi = (lo + ANCHOR_BLOCK).min(n);
            let mut rows = vec![0.0f64; (hi - lo) * n];
            match cloud.metric() {
                MetricSource::AmbientEuclidean => {
                    for j in 0..n {
                        let target = cloud.row(j);
                        for a in lo..hi {
                            rows[(a - lo) * n + j] = euclidean(cloud.row(a), target);
                        }
                    }
                }
                MetricSource::ExplicitOracle(_) => {
                    for a in lo..hi {
                        for j in 0..n {
                            rows[(a - lo) * n + j] = raw_distance(cloud, a, j);
                        }
                    }
                }
            }
            (lo..hi)
                .map(|a| f(ladder_from_row(a, &rows[(a - lo) * n..(a - lo + 1) * n], cap)))
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// One ladder per token, in token order.
pub fn all_ladders(cloud: &TokenCloud, cap: Option<usize>) -> Result<Vec<RadiusLadder>, MetricError> {
    map_ladders(cloud, cap, |l| l)
}

/// Writes ladders as `(anchor: u64, p: u64, p x f64)` little-endian records.
pub fn write_ladder_cache<W: Write>(out: &mut W, ladders: &[RadiusLadder]) -> std::io::Result<()> {
    for l in ladders {
        out.write_all(&(l.anchor as u64).to_le_bytes())?;
        out.write_all(&(l.radii.len() as u64).to_le_bytes())?;
        for r in &l.radii {
            out.write_all(&r.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ladder_cache<R: Read>(mut input: R) -> Result<Vec<RadiusLadder>, MetricError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let take_u64 = |pos: &mut usize| -> Result<u64, MetricError> {
        let chunk = bytes
            .get(*pos..*pos + 8)
            .ok_or_else(|| MetricError::Cache(format!("truncated record at byte {pos}")))?;
        *pos += 8;
        Ok(u64::from_le_bytes(chunk.try_into().unwrap()))
    };
    let mut ladders = Vec::new();
    while pos < bytes.len() {
        let anchor = take_u64(&mut pos)? as usize;
        let p = take_u64(&mut pos)? as usize;
        let mut radii = Vec::with_capacity(p);
        for _ in 0..p {
            let r = f64::from_bits(take_u64(&mut pos)?);
            if !(r >= 0.0 && r.is_finite()) {
                return Err(MetricError::Cache(format!(
                    "invalid radius {r} in ladder of anchor {anchor}"
                )));
            }
            radii.push(r);
        }
        if radii.windows(2).any(|w| w[0] > w[1]) {
            return Err(MetricError::Cache(format!(
                "radii of anchor {anchor} are not sorted"
            )));
        }
        ladders.push(RadiusLadder::new(anchor, radii));
    }
    Ok(ladders)
}

/// Sampled check that an oracle behaves like a metric: identity, symmetry,
/// non-negativity and the triangle inequality (to `tol`) on `samples` random
/// triples.
pub fn audit_oracle(
    oracle: &dyn DistanceOracle,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<(), MetricError> {
    let n = oracle.len();
    if n == 0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let (x, y, z) = (
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        );
        let dxx = oracle.distance(x, x);
        if dxx.abs() > tol {
            return Err(MetricError::OracleViolation {
                property: "identity",
                at: vec![x],
                detail: format!("d(x,x) = {dxx}"),
            });
        }
        let (dxy, dyx) = (oracle.distance(x, y), oracle.distance(y, x));
        if (dxy - dyx).abs() > tol || dxy < 0.0 {
            return Err(MetricError::OracleViolation {
                property: "symmetry",
                at: vec![x, y],
                detail: format!("d(x,y) = {dxy}, d(y,x) = {dyx}"),
            });
        }
        let (dyz, dxz) = (oracle.distance(y, z), oracle.distance(x, z));
        if dxz > dxy + dyz + tol {
            return Err(MetricError::OracleViolation {
                property: "triangle inequality",
                at: vec![x, y, z],
                detail: format!("d(x,z) = {dxz} > {dxy} + {dyz}"),
            });
        }
    }
    Ok(())
}
