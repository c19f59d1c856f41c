//! Synthetic point clouds with known growth laws.
//!
//! The centrepiece is a chain of glued half-discs realizing a prescribed
//! piecewise-linear volume growth curve at its base point: disc `j` has
//! dimension `n_j`, the zenith of disc `j` is identified with the centre of disc
//! `j + 1`, and distances are geodesic through the glue points. Disc `j` spans
//! base distances `(r_{j-1}, r_j]` with `r_j = e^{s_j}`, so it uses the
//! incremental radius `rho_j = r_j - r_{j-1}`; that puts every corner of the
//! growth curve exactly at a critical scale.
//!
//! Points of disc `j` are placed at depth `t` from its centre with
//! `P(t' <= t)` proportional to `(r_{j-1} + t)^{n_j} - r_{j-1}^{n_j}`, and each
//! disc receives a share of points proportional to `e^{f(s_j)} - e^{f(s_{j-1})}`.
//! The counting measure around the base point then tracks `e^f` in expectation.
//!
//! All generators use ChaCha8 seeded from a `u64`, so a seed pins the output
//! bit for bit.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::corpus::TokenCloud;
use crate::growth::{vgt_eval, GrowthCurve};
use crate::metric::{euclidean, DistanceOracle};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid growth spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("disc {disc} received no points out of {n_points}; use more points")]
    EmptyDisc { disc: usize, n_points: usize },
    #[error("exact VGT is defined for s >= 0, got {0}")]
    NegativeScale(f64),
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Target growth law: slopes `n_1..n_k` on `[0, s_1], [s_1, s_2], ...`, flat
/// after `s_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthSpec {
    scales: Vec<f64>,
    slopes: Vec<u32>,
}

impl GrowthSpec {
    pub fn new(scales: Vec<f64>, slopes: Vec<u32>) -> Result<Self, SynthError> {
        if scales.is_empty() {
            return Err(SynthError::InvalidSpec("at least one critical scale is required".into()));
        }
        if scales.len() != slopes.len() {
            return Err(SynthError::InvalidSpec(format!(
                "{} scales but {} slopes",
                scales.len(),
                slopes.len()
            )));
        }
        if !scales.iter().all(|s| s.is_finite()) || scales[0] <= 0.0 {
            return Err(SynthError::InvalidSpec(
                "critical scales must be finite and the first must be > 0".into(),
            ));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SynthError::InvalidSpec("critical scales must strictly increase".into()));
        }
        if slopes.contains(&0) {
            return Err(SynthError::InvalidSpec("slopes must be natural numbers >= 1".into()));
        }
        Ok(Self { scales, slopes })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn slopes(&self) -> &[u32] {
        &self.slopes
    }

    pub fn k(&self) -> usize {
        self.scales.len()
    }

    /// `f(s_j)` for `j = 1..k`.
    pub fn values_at_scales(&self) -> Vec<f64> {
        let mut prev_s = 0.0;
        let mut acc = 0.0;
        self.scales
            .iter()
            .zip(&self.slopes)
            .map(|(&s, &n)| {
                acc += n as f64 * (s - prev_s);
                prev_s = s;
                acc
            })
            .collect()
    }

    /// Critical radii `r_j = e^{s_j}`.
    pub fn radii(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s.exp()).collect()
    }

    /// Incremental disc radii `rho_j = r_j - r_{j-1}` with `r_0 = 0`.
    pub fn increments(&self) -> Vec<f64> {
        let radii = self.radii();
        let mut prev = 0.0;
        radii
            .iter()
            .map(|&r| {
                let d = r - prev;
                prev = r;
                d
            })
            .collect()
    }

    /// True when some slope exceeds its predecessor.
    pub fn has_increase(&self) -> bool {
        self.slopes.windows(2).any(|w| w[1] > w[0])
    }
}

/// Continuous piecewise-linear growth law `f(s)`.
pub fn exact_vgt(spec: &GrowthSpec, s: f64) -> Result<f64, SynthError> {
    if !(s >= 0.0) {
        return Err(SynthError::NegativeScale(s));
    }
    let mut prev_s = 0.0;
    let mut acc = 0.0;
    for (&sj, &n) in spec.scales.iter().zip(&spec.slopes) {
        if s <= sj {
            return Ok(acc + n as f64 * (s - prev_s));
        }
        acc += n as f64 * (sj - prev_s);
        prev_s = sj;
    }
    Ok(acc)
}

/// A location inside one disc of the chain, in that disc's local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPoint {
    /// 0-based disc index.
    pub disc: usize,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Disc {
    dim: usize,
    rho: f64,
}

/// Geodesic metric on the glued disc chain.
#[derive(Debug, Clone)]
pub struct GluedDiscChain {
    discs: Vec<Disc>,
    /// `gap[j]` = sum of `rho` over discs `0..j`.
    gap: Vec<f64>,
    points: Vec<ChainPoint>,
    to_center: Vec<f64>,
    to_zenith: Vec<f64>,
}

impl GluedDiscChain {
    fn new(spec: &GrowthSpec) -> Self {
        let discs: Vec<Disc> = spec
            .slopes
            .iter()
            .zip(spec.increments())
            .map(|(&n, rho)| Disc { dim: n as usize, rho })
            .collect();
        let mut gap = vec![0.0];
        for d in &discs {
            gap.push(gap.last().unwrap() + d.rho);
        }
        Self {
            discs,
            gap,
            points: Vec::new(),
            to_center: Vec::new(),
            to_zenith: Vec::new(),
        }
    }

    pub fn center(&self, disc: usize) -> ChainPoint {
        ChainPoint {
            disc,
            coords: vec![0.0; self.discs[disc].dim],
        }
    }

    pub fn zenith(&self, disc: usize) -> ChainPoint {
        let mut p = self.center(disc);
        *p.coords.last_mut().unwrap() = self.discs[disc].rho;
        p
    }

    fn push(&mut self, point: ChainPoint) {
        let zenith = self.zenith(point.disc);
        let origin = vec![0.0; point.coords.len()];
        self.to_center.push(euclidean(&point.coords, &origin));
        self.to_zenith.push(euclidean(&point.coords, &zenith.coords));
        self.points.push(point);
    }

    /// Sum of `rho` over the discs strictly between `a` and `b` (`a < b`).
    fn between(&self, a: usize, b: usize) -> f64 {
        self.gap[b] - self.gap[a + 1]
    }

    pub fn point_distance(&self, x: &ChainPoint, y: &ChainPoint) -> f64 {
        if x.disc == y.disc {
            return euclidean(&x.coords, &y.coords);
        }
        let (lo, hi) = if x.disc < y.disc { (x, y) } else { (y, x) };
        let zenith = self.zenith(lo.disc);
        let origin = vec![0.0; hi.coords.len()];
        euclidean(&lo.coords, &zenith.coords)
            + self.between(lo.disc, hi.disc)
            + euclidean(&hi.coords, &origin)
    }

    pub fn point(&self, token: usize) -> &ChainPoint {
        &self.points[token]
    }
}

impl DistanceOracle for GluedDiscChain {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.points[i], &self.points[j]);
        if a.disc == b.disc {
            return euclidean(&a.coords, &b.coords);
        }
        let (lo, hi) = if a.disc < b.disc { (i, j) } else { (j, i) };
        self.to_zenith[lo] + self.between(self.points[lo].disc, self.points[hi].disc) + self.to_center[hi]
    }
}

#[derive(Debug, Clone)]
pub struct RealizationCloud {
    pub cloud: TokenCloud,
    /// 1-based disc index per token.
    pub stratum_labels: Vec<usize>,
    pub base_index: usize,
    pub spec: GrowthSpec,
    pub chain: Arc<GluedDiscChain>,
}

/// Uniform direction on the unit sphere in `dim` dimensions.
fn unit_direction<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform in `(0, 1]`.
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Largest-remainder split of `total` items by `weights`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in &order {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Samples a disc chain whose base point (token 0) has growth law `spec`.
pub fn sample_realization(
    spec: &GrowthSpec,
    n_points: usize,
    seed: u64,
) -> Result<RealizationCloud, SynthError> {
    let k = spec.k();
    if n_points < k + 1 {
        return Err(SynthError::Parameter(format!(
            "need at least {} points for {k} discs plus the base point, got {n_points}",
            k + 1
        )));
    }
    let f = spec.values_at_scales();
    let top = f[k - 1];
    // Shares of e^{f(s_j)} - e^{f(s_{j-1})}, normalized by e^{f(s_k)}.
    let weights: Vec<f64> = (0..k)
        .map(|j| {
            let below = if j == 0 { 0.0 } else { (f[j - 1] - top).exp() };
            (f[j] - top).exp() - below
        })
        .collect();
    let budgets = apportion(n_points - 1, &weights);
    if let Some(disc) = budgets.iter().position(|&b| b == 0) {
        return Err(SynthError::EmptyDisc {
            disc: disc + 1,
            n_points,
        });
    }

    let mut rng = rng_for(seed);
    let mut chain = GluedDiscChain::new(spec);
    let radii = spec.radii();
    let mut labels = Vec::with_capacity(n_points);

    chain.push(chain.center(0));
    labels.push(1);
    for (j, &budget) in budgets.iter().enumerate() {
        let dim = chain.discs[j].dim;
        let rho = chain.discs[j].rho;
        let inner = if j == 0 { 0.0 } else { radii[j - 1] };
        let n = dim as f64;
        let lo = inner.powf(n);
        let span = (inner + rho).powf(n) - lo;
        for _ in 0..budget {
            let mut dir = unit_direction(&mut rng, dim);
            if j > 0 {
                let last = dir.last_mut().unwrap();
                *last = last.abs();
            }
            let u = open_unit(&mut rng);
            let t = ((lo + u * span).powf(1.0 / n) - inner).clamp(0.0, rho);
            chain.push(ChainPoint {
                disc: j,
                coords: dir.into_iter().map(|x| x * t).collect(),
            });
            labels.push(j + 1);
        }
    }

    let chain = Arc::new(chain);
    let cloud = TokenCloud::from_oracle("realization", chain.clone())
        .map_err(|e| SynthError::Parameter(e.to_string()))?;
    Ok(RealizationCloud {
        cloud,
        stratum_labels: labels,
        base_index: 0,
        spec: spec.clone(),
        chain,
    })
}

/// Uniform samples in `[0, extent]^base_dim x [0, fiber_scale]^fiber_dim`.
pub fn sample_fiber_bundle(
    base_dim: usize,
    fiber_dim: usize,
    fiber_scale: f64,
    extent: f64,
    n_points: usize,
    seed: u64,
) -> Result<TokenCloud, SynthError> {
    if base_dim == 0 || fiber_dim == 0 {
        return Err(SynthError::Parameter("base and fiber dimensions must be >= 1".into()));
    }
    if !(extent > 0.0 && extent.is_finite()) || !(fiber_scale > 0.0 && fiber_scale <= extent) {
        return Err(SynthError::Parameter(format!(
            "need 0 < fiber_scale <= extent, got fiber_scale {fiber_scale}, extent {extent}"
        )));
    }
    if n_points == 0 {
        return Err(SynthError::Parameter("n_points must be >= 1".into()));
    }
    let dim = base_dim + fiber_dim;
    let mut rng = rng_for(seed);
    let mut coords = Vec::with_capacity(n_points * dim);
    for _ in 0..n_points {
        for _ in 0..base_dim {
            coords.push(extent * rng.random::<f64>());
        }
        for _ in 0..fiber_dim {
            coords.push(fiber_scale * rng.random::<f64>());
        }
    }
    TokenCloud::from_rows("fiber_bundle", n_points, dim, coords)
        .map_err(|e| SynthError::Parameter(e.to_string()))
}

/// Uniform samples in the closed `dim`-ball of the given radius.
pub fn sample_ball(dim: usize, radius: f64, n_points: usize, seed: u64) -> Result<TokenCloud, SynthError> {
    if dim == 0 {
        return Err(SynthError::Parameter("dim must be >= 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SynthError::Parameter(format!("radius must be > 0, got {radius}")));
    }
    if n_points == 0 {
        return Err(SynthError::Parameter("n_points must be >= 1".into()));
    }
    let mut rng = rng_for(seed);
    let mut coords = Vec::with_capacity(n_points * dim);
    for _ in 0..n_points {
        let dir = unit_direction(&mut rng, dim);
        let r = radius * open_unit(&mut rng).powf(1.0 / dim as f64);
        coords.extend(dir.into_iter().map(|x| x * r));
    }
    TokenCloud::from_rows("ball", n_points, dim, coords).map_err(|e| SynthError::Parameter(e.to_string()))
}

/// Sup distance between the empirical VGT of `curve`, normalized by `total`
/// tokens, and `f - f(s_k)`, over `grid_points` equally spaced scales on
/// `[0, s_k]`, after the vertical shift that minimizes that sup.
///
/// Returns infinity when some grid scale lies below the first ladder radius.
pub fn vgt_sup_deviation(curve: &GrowthCurve, spec: &GrowthSpec, total: usize, grid_points: usize) -> f64 {
    let s_k = *spec.scales.last().unwrap();
    let top = *spec.values_at_scales().last().unwrap();
    let mut diffs = Vec::with_capacity(grid_points);
    for g in 0..grid_points {
        let s = if grid_points == 1 {
            s_k
        } else {
            s_k * g as f64 / (grid_points - 1) as f64
        };
        let Ok(empirical) = vgt_eval(curve, s) else {
            return f64::INFINITY;
        };
        let exact = exact_vgt(spec, s).expect("grid is non-negative") - top;
        diffs.push(empirical - (total as f64).ln() - exact);
    }
    let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    0.5 * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec13() -> GrowthSpec {
        GrowthSpec::new(vec![2f64.ln(), 8f64.ln()], vec![1, 3]).unwrap()
    }

    #[test]
    fn exact_vgt_values() {
        let single = GrowthSpec::new(vec![3f64.ln()], vec![2]).unwrap();
        assert!((exact_vgt(&single, 2f64.ln()).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((exact_vgt(&single, 10.0).unwrap() - 2.0 * 3f64.ln()).abs() < 1e-15);
        assert!((exact_vgt(&spec13(), 4f64.ln()).unwrap() - 4.0 * 2f64.ln()).abs() < 1e-14);
        assert_eq!(exact_vgt(&single, -0.5), Err(SynthError::NegativeScale(-0.5)));
    }

    #[test]
    fn spec_validation() {
        assert!(GrowthSpec::new(vec![0.0], vec![2]).is_err());
        assert!(GrowthSpec::new(vec![1.0, 1.0], vec![2, 3]).is_err());
        assert!(GrowthSpec::new(vec![1.0], vec![0]).is_err());
        assert!(GrowthSpec::new(vec![1.0, 2.0], vec![1]).is_err());
        assert!(GrowthSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn glue_point_distances() {
        let spec = spec13();
        let real = sample_realization(&spec, 200, 1).unwrap();
        let chain = &real.chain;
        let rho = spec.increments();
        let base = chain.point(real.base_index);
        assert!((chain.point_distance(base, &chain.center(1)) - rho[0]).abs() < 1e-12);
        assert!((chain.point_distance(base, &chain.zenith(1)) - (rho[0] + rho[1])).abs() < 1e-12);
    }

    #[test]
    fn labels_match_base_distance() {
        let spec = GrowthSpec::new(vec![0.5, 1.5, 2.0], vec![2, 1, 3]).unwrap();
        let real = sample_realization(&spec, 3000, 5).unwrap();
        let radii = spec.radii();
        for tok in 1..real.cloud.len() {
            let d = real.chain.distance(0, tok);
            let j = real.stratum_labels[tok];
            let lo = if j == 1 { 0.0 } else { radii[j - 2] };
            assert!(d > lo - 1e-12 && d <= radii[j - 1] + 1e-12, "token {tok}: d {d}, disc {j}");
        }
    }

    #[test]
    fn empty_disc_is_reported() {
        // the first disc carries e^{-12} of the mass
        let spec = GrowthSpec::new(vec![1.0, 5.0], vec![1, 3]).unwrap();
        assert!(matches!(
            sample_realization(&spec, 100, 0),
            Err(SynthError::EmptyDisc { disc: 1, .. })
        ));
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.0, 1.0]), vec![0, 7]);
    }

    #[test]
    fn one_ball_radius_is_uniform() {
        let c = sample_ball(1, 2.0, 4000, 11).unwrap();
        let mut r: Vec<f64> = c.coords().iter().map(|x| x.abs()).collect();
        r.sort_by(f64::total_cmp);
        // Kolmogorov-Smirnov distance to U[0, 2]
        let ks = r
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let cdf = x / 2.0;
                (cdf - k as f64 / 4000.0).abs().max((cdf - (k + 1) as f64 / 4000.0).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / 4000f64.sqrt(), "ks {ks}");
    }

    #[test]
    fn seeded_generators_are_bit_stable() {
        let a = sample_ball(5, 1.0, 100, 42).unwrap();
        let b = sample_ball(5, 1.0, 100, 42).unwrap();
        assert_eq!(a.coords(), b.coords());
        let c = sample_fiber_bundle(2, 1, 0.05, 1.0, 50, 3).unwrap();
        assert_eq!(c.dim(), 3);
        assert!(c.coords().chunks(3).all(|p| p[2] <= 0.05 && p[0] <= 1.0));
        assert!(sample_fiber_bundle(2, 1, 0.05, 1.0, 0, 3).is_err());
        assert!(sample_ball(0, 1.0, 10, 3).is_err());
    }
}
