//! Local dimension from windowed log-log least squares.
//!
//! For the ladder of a token `x`, the samples `(ln r_i, ln i)` inside a window
//! are fit by ordinary least squares to `ln i = ln H + n ln r_i`; the slope is
//! the local dimension estimate. Windows either bound the radius or bound the
//! neighbour count ("volume").

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenCloud;
use crate::metric::{map_ladders, MetricError, RadiusLadder};
use crate::stats;

/// Minimum surviving samples for an `Ok` fit.
pub const MIN_FIT_POINTS: usize = 3;

/// Cluster ranges reported for the two-coins token embeddings.
pub const REFERENCE_CLUSTERS: [(f64, f64); 4] = [(6.0, 8.0), (9.0, 10.0), (11.0, 13.0), (14.0, 21.0)];

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("least squares needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("all abscissae are equal; slope undefined")]
    Degenerate,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid window: {0}")]
    Window(String),
    #[error("cluster ranges {0:?} and {1:?} overlap")]
    OverlappingRanges((f64, f64), (f64, f64)),
    #[error("cluster range {0:?} is empty")]
    EmptyRange((f64, f64)),
    #[error("distribution needs at least one estimate")]
    NoEstimates,
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Which ladder entries enter the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    /// Entries with `r_min <= r <= r_max`.
    Radius { min: f64, max: f64 },
    /// Entries with 1-based index `v_min <= i <= v_max`.
    Volume { min: usize, max: usize },
}

impl FitWindow {
    pub fn radius(min: f64, max: f64) -> Result<Self, ConfigError> {
        if min > 0.0 && min < max && max.is_finite() {
            Ok(FitWindow::Radius { min, max })
        } else {
            Err(ConfigError::Window(format!(
                "radius window needs 0 < r_min < r_max, got [{min}, {max}]"
            )))
        }
    }

    pub fn volume(min: usize, max: usize) -> Result<Self, ConfigError> {
        if min >= 1 && min < max {
            Ok(FitWindow::Volume { min, max })
        } else {
            Err(ConfigError::Window(format!(
                "volume window needs 1 <= v_min < v_max, got [{min}, {max}]"
            )))
        }
    }

    /// Parses a mode name (`radius` or `volume`) and a `lo:hi` range.
    pub fn parse(mode: &str, range: &str) -> Result<Self, ConfigError> {
        let (lo, hi) = range
            .split_once(':')
            .ok_or_else(|| ConfigError::Window(format!("expected lo:hi, got {range:?}")))?;
        let bad = |_| ConfigError::Window(format!("bad bounds in {range:?}"));
        match mode {
            "radius" => FitWindow::radius(lo.trim().parse().map_err(bad)?, hi.trim().parse().map_err(bad)?),
            "volume" => FitWindow::volume(
                lo.trim().parse().map_err(|_| ConfigError::Window(format!("bad bounds in {range:?}")))?,
                hi.trim().parse().map_err(|_| ConfigError::Window(format!("bad bounds in {range:?}")))?,
            ),
            other => Err(ConfigError::Window(format!("unknown window mode {other:?}"))),
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            FitWindow::Radius { .. } => "radius",
            FitWindow::Volume { .. } => "volume",
        }
    }

    pub fn range_string(&self) -> String {
        match self {
            FitWindow::Radius { min, max } => format!("{min}:{max}"),
            FitWindow::Volume { min, max } => format!("{min}:{max}"),
        }
    }

    /// Ladder length that is guaranteed to contain every selected entry.
    pub fn ladder_cap(&self, n_tokens: usize) -> Option<usize> {
        match self {
            FitWindow::Radius { .. } => None,
            FitWindow::Volume { max, .. } => Some((*max).min(n_tokens.saturating_sub(1))),
        }
    }

    /// Same window after scaling every distance by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        match *self {
            FitWindow::Radius { min, max } => FitWindow::Radius {
                min: min * lambda,
                max: max * lambda,
            },
            w @ FitWindow::Volume { .. } => w,
        }
    }
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::Volume { min: 50, max: 90 }
    }
}

impl fmt::Display for FitWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWindow::Radius { min, max } => write!(f, "radius in [{min}, {max}]"),
            FitWindow::Volume { min, max } => write!(f, "volume in [{min}, {max}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStatus {
    Ok,
    /// Too few samples (or distinct radii) survived the window.
    Insufficient,
    /// The window reached a zero radius or the fit came out non-finite.
    Degenerate,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Ok => "ok",
            FitStatus::Insufficient => "insufficient",
            FitStatus::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ok" => Ok(FitStatus::Ok),
            "insufficient" => Ok(FitStatus::Insufficient),
            "degenerate" => Ok(FitStatus::Degenerate),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub log_h: f64,
    pub n_hat: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionEstimate {
    pub anchor: usize,
    /// Slope of the fit; reported as 0 unless `status` is `Ok`.
    pub n_hat: f64,
    pub log_h: f64,
    pub residual_rms: f64,
    pub points_used: usize,
    pub status: FitStatus,
}

impl DimensionEstimate {
    pub fn is_ok(&self) -> bool {
        self.status == FitStatus::Ok
    }

    pub fn unfitted(anchor: usize, points_used: usize, status: FitStatus) -> Self {
        Self {
            anchor,
            n_hat: 0.0,
            log_h: f64::NAN,
            residual_rms: f64::NAN,
            points_used,
            status,
        }
    }
}

/// Ordinary least squares of `y` on `(1, s)`.
pub fn fit_loglog(samples: &[(f64, f64)]) -> Result<LogLogFit, FitError> {
    let n = samples.len();
    if n < 2 {
        return Err(FitError::TooFewSamples(n));
    }
    let first = samples[0].0;
    if samples.iter().all(|p| p.0 == first) {
        return Err(FitError::Degenerate);
    }
    let nf = n as f64;
    let ms = samples.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = samples.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(s, y) in samples {
        sxx += (s - ms) * (s - ms);
        sxy += (s - ms) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(FitError::Degenerate);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * ms;
    let sse: f64 = samples
        .iter()
        .map(|&(s, y)| {
            let e = y - intercept - slope * s;
            e * e
        })
        .sum();
    Ok(LogLogFit {
        log_h: intercept,
        n_hat: slope,
        residual_rms: (sse / nf).sqrt(),
    })
}

/// Selected `(r, i)` pairs of a ladder.
fn window_entries(ladder: &RadiusLadder, window: &FitWindow) -> Vec<(f64, usize)> {
    let indexed = ladder.radii.iter().enumerate().map(|(k, &r)| (r, k + 1));
    match *window {
        FitWindow::Radius { min, max } => indexed.filter(|&(r, _)| r >= min && r <= max).collect(),
        FitWindow::Volume { min, max } => indexed.filter(|&(_, i)| i >= min && i <= max).collect(),
    }
}

pub fn estimate_dimension(ladder: &RadiusLadder, window: &FitWindow) -> DimensionEstimate {
    let entries = window_entries(ladder, window);
    let used = entries.len();
    let distinct = 1 + entries.windows(2).filter(|w| w[0].0 != w[1].0).count();
    if used < MIN_FIT_POINTS || distinct < 2 {
        return DimensionEstimate::unfitted(ladder.anchor, used, FitStatus::Insufficient);
    }
    if entries.iter().any(|&(r, _)| r <= 0.0) {
        return DimensionEstimate::unfitted(ladder.anchor, used, FitStatus::Degenerate);
    }
    let samples: Vec<(f64, f64)> = entries
        .iter()
        .map(|&(r, i)| (r.ln(), (i as f64).ln()))
        .collect();
    match fit_loglog(&samples) {
        Ok(fit) if fit.n_hat.is_finite() && fit.log_h.is_finite() => DimensionEstimate {
            anchor: ladder.anchor,
            n_hat: fit.n_hat,
            log_h: fit.log_h,
            residual_rms: fit.residual_rms,
            points_used: used,
            status: FitStatus::Ok,
        },
        _ => DimensionEstimate::unfitted(ladder.anchor, used, FitStatus::Degenerate),
    }
}

/// One estimate per token, in token order.
pub fn estimate_all(cloud: &TokenCloud, window: &FitWindow) -> Result<Vec<DimensionEstimate>, MetricError> {
    map_ladders(cloud, window.ladder_cap(cloud.len()), |l| {
        estimate_dimension(&l, window)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub densities: Vec<f64>,
    pub total: usize,
}

impl Histogram {
    /// Fraction of estimates that landed in some bin, computed on integer
    /// counts; 1 exactly when every estimate is binned.
    pub fn mass(&self) -> f64 {
        self.counts.iter().sum::<usize>() as f64 / self.total as f64
    }

    /// `sum(density * width)`; equals `mass()` up to rounding.
    pub fn density_integral(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl Kde {
    pub fn trapezoid_integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Local maxima of the density. A flat top spanning several grid points
    /// counts once, at its midpoint.
    pub fn modes(&self) -> Vec<f64> {
        let d = &self.density;
        let mut out = Vec::new();
        let mut k = 0;
        while k < d.len() {
            let mut end = k;
            while end + 1 < d.len() && d[end + 1] == d[k] {
                end += 1;
            }
            if (k == 0 || d[k] > d[k - 1]) && (end + 1 == d.len() || d[k] > d[end + 1]) {
                out.push(0.5 * (self.grid[k] + self.grid[end]));
            }
            k = end + 1;
        }
        out
    }
}

/// Population summary of estimates. Non-`Ok` estimates are rendered at 0 in
/// the histogram and counted in `zero_fraction`; the KDE uses `Ok` values only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionDistribution {
    pub total: usize,
    pub histogram: Histogram,
    pub kde: Option<Kde>,
    pub zero_fraction: f64,
}

/// Fallback bandwidth when every `Ok` estimate is identical.
const FLAT_BANDWIDTH: f64 = 0.5;

/// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let sd = stats::std_dev(values).unwrap_or(0.0);
    let iqr = match (stats::quantile(values, 0.75), stats::quantile(values, 0.25)) {
        (Some(a), Some(b)) => a - b,
        _ => 0.0,
    };
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => return FLAT_BANDWIDTH,
    };
    0.9 * spread * (values.len() as f64).powf(-0.2)
}

fn gaussian_kde(values: &[f64], bandwidth: f64) -> Kde {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 6.0 * bandwidth;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 6.0 * bandwidth;
    let points = (((hi - lo) / (bandwidth / 4.0)).ceil() as usize + 1).clamp(256, 20_001);
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points).map(|k| lo + step * k as f64).collect();
    let density = grid
        .iter()
        .map(|&x| {
            norm * values
                .iter()
                .map(|&v| {
                    let z = (x - v) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Kde {
        bandwidth,
        grid,
        density,
    }
}

pub fn dimension_distribution(
    estimates: &[DimensionEstimate],
    bins: usize,
    kde_bandwidth: Option<f64>,
) -> Result<DimensionDistribution, ConfigError> {
    if estimates.is_empty() {
        return Err(ConfigError::NoEstimates);
    }
    if bins == 0 {
        return Err(ConfigError::Parameter("histogram needs at least one bin".into()));
    }
    if let Some(h) = kde_bandwidth {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ConfigError::Parameter(format!("bandwidth must be positive, got {h}")));
        }
    }
    let total = estimates.len();
    let rendered: Vec<f64> = estimates
        .iter()
        .map(|e| if e.is_ok() { e.n_hat } else { 0.0 })
        .collect();
    let zero_count = estimates.iter().filter(|e| !e.is_ok()).count();

    let mut lo = rendered.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = rendered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { hi } else { lo + width * k as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for v in &rendered {
        let k = (((v - lo) / width).floor() as usize).min(bins - 1);
        // guard against edge rounding
        let k = if *v < edges[k] { k.saturating_sub(1) } else { k };
        counts[k] += 1;
    }
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, e)| c as f64 / (total as f64 * (e[1] - e[0])))
        .collect();

    let ok: Vec<f64> = estimates.iter().filter(|e| e.is_ok()).map(|e| e.n_hat).collect();
    let kde = if ok.is_empty() {
        None
    } else {
        let h = kde_bandwidth.unwrap_or_else(|| silverman_bandwidth(&ok));
        Some(gaussian_kde(&ok, h))
    };

    Ok(DimensionDistribution {
        total,
        histogram: Histogram {
            edges,
            counts,
            densities,
            total,
        },
        kde,
        zero_fraction: zero_count as f64 / total as f64,
    })
}

pub fn write_histogram_csv<W: Write>(out: &mut W, dist: &DimensionDistribution) -> std::io::Result<()> {
    writeln!(out, "bin_lo,bin_hi,count,density")?;
    let h = &dist.histogram;
    for (k, e) in h.edges.windows(2).enumerate() {
        writeln!(out, "{:?},{:?},{},{:?}", e[0], e[1], h.counts[k], h.densities[k])?;
    }
    Ok(())
}

pub fn write_kde_csv<W: Write>(out: &mut W, dist: &DimensionDistribution) -> std::io::Result<()> {
    writeln!(out, "x,density")?;
    if let Some(kde) = &dist.kde {
        for (x, d) in kde.grid.iter().zip(&kde.density) {
            writeln!(out, "{x:?},{d:?}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterLabel {
    Range { lo: f64, hi: f64 },
    Unclustered,
    ZeroBucket,
}

impl fmt::Display for ClusterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterLabel::Range { lo, hi } => write!(f, "[{lo},{hi}]"),
            ClusterLabel::Unclustered => f.write_str("unclustered"),
            ClusterLabel::ZeroBucket => f.write_str("zero"),
        }
    }
}

/// Parses `6:8,9:10,...` into closed ranges.
pub fn parse_ranges(text: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| ConfigError::Parameter(format!("range {part:?} is not lo:hi")))?;
            let p = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| ConfigError::Parameter(format!("bad number in {part:?}")))
            };
            Ok((p(a)?, p(b)?))
        })
        .collect()
}

/// Labels each estimate by the closed range containing `round(n_hat)`.
pub fn bucket_clusters(
    estimates: &[DimensionEstimate],
    ranges: &[(f64, f64)],
) -> Result<Vec<ClusterLabel>, ConfigError> {
    for &r in ranges {
        if !(r.0 <= r.1) {
            return Err(ConfigError::EmptyRange(r));
        }
    }
    for (a, &ra) in ranges.iter().enumerate() {
        for &rb in &ranges[a + 1..] {
            if ra.0 <= rb.1 && rb.0 <= ra.1 {
                return Err(ConfigError::OverlappingRanges(ra, rb));
            }
        }
    }
    Ok(estimates
        .iter()
        .map(|e| {
            if !e.is_ok() {
                return ClusterLabel::ZeroBucket;
            }
            let v = e.n_hat.round();
            ranges
                .iter()
                .find(|r| v >= r.0 && v <= r.1)
                .map_or(ClusterLabel::Unclustered, |&(lo, hi)| ClusterLabel::Range { lo, hi })
        })
        .collect())
}

pub const DIMS_CSV_HEADER: &str = "token,n_hat,log_H,residual_rms,points_used,status,cluster";

pub fn write_dims_csv<W: Write>(
    out: &mut W,
    estimates: &[DimensionEstimate],
    clusters: Option<&[ClusterLabel]>,
) -> std::io::Result<()> {
    writeln!(out, "{DIMS_CSV_HEADER}")?;
    for (k, e) in estimates.iter().enumerate() {
        // range labels contain a comma
        let cluster = clusters.map(|c| format!("\"{}\"", c[k])).unwrap_or_default();
        writeln!(
            out,
            "{},{:?},{:?},{:?},{},{},{}",
            e.anchor, e.n_hat, e.log_h, e.residual_rms, e.points_used, e.status, cluster
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimsRow {
    pub estimate: DimensionEstimate,
    pub cluster: String,
}

#[derive(Debug, Error)]
#[error("dims csv line {line}: {message}")]
pub struct DimsCsvError {
    pub line: u64,
    pub message: String,
}

pub fn read_dims_csv<R: Read>(input: R) -> Result<Vec<DimsRow>, DimsCsvError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header_ok = reader
        .headers()
        .map(|h| h.iter().collect::<Vec<_>>().join(",") == DIMS_CSV_HEADER)
        .unwrap_or(false);
    if !header_ok {
        return Err(DimsCsvError {
            line: 1,
            message: format!("expected header {DIMS_CSV_HEADER}"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DimsCsvError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |what: &str| DimsCsvError {
            line,
            message: format!("bad {what}"),
        };
        let f = |k: usize, what: &str| record[k].parse::<f64>().map_err(|_| err(what));
        rows.push(DimsRow {
            estimate: DimensionEstimate {
                anchor: record[0].parse().map_err(|_| err("token"))?,
                n_hat: f(1, "n_hat")?,
                log_h: f(2, "log_H")?,
                residual_rms: f(3, "residual_rms")?,
                points_used: record[4].parse().map_err(|_| err("points_used"))?,
                status: record[5].parse().map_err(|_| err("status"))?,
            },
            cluster: record[6].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_ladder(n: f64, p: usize) -> RadiusLadder {
        RadiusLadder::new(0, (1..=p).map(|i| (i as f64).powf(1.0 / n)).collect())
    }

    fn est(n_hat: f64, status: FitStatus) -> DimensionEstimate {
        DimensionEstimate {
            anchor: 0,
            n_hat,
            log_h: 0.0,
            residual_rms: 0.0,
            points_used: 10,
            status,
        }
    }

    #[test]
    fn two_point_fit() {
        let fit = fit_loglog(&[(0.0, 0.0), (2f64.ln(), 2f64.ln())]).unwrap();
        assert!((fit.n_hat - 1.0).abs() < 1e-15);
        assert!(fit.log_h.abs() < 1e-15);
        assert!(fit.residual_rms < 1e-15);
    }

    #[test]
    fn exact_power_line() {
        let pts: Vec<(f64, f64)> = (1..20).map(|k| (k as f64 * 0.1, 0.3 * k as f64)).collect();
        assert!((fit_loglog(&pts).unwrap().n_hat - 3.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_abscissae() {
        assert_eq!(fit_loglog(&[(1.0, 0.0), (1.0, 1.0)]), Err(FitError::Degenerate));
        assert_eq!(fit_loglog(&[(1.0, 0.0)]), Err(FitError::TooFewSamples(1)));
    }

    #[test]
    fn volume_window_exact_power_law() {
        let e = estimate_dimension(&power_ladder(5.0, 200), &FitWindow::volume(50, 90).unwrap());
        assert_eq!(e.status, FitStatus::Ok);
        assert_eq!(e.points_used, 41);
        assert!((e.n_hat - 5.0).abs() < 1e-9);
    }

    #[test]
    fn insufficient_reports_zero() {
        let ladder = RadiusLadder::new(1, vec![1.0, 2.0]);
        let e = estimate_dimension(&ladder, &FitWindow::default());
        assert_eq!(e.status, FitStatus::Insufficient);
        assert_eq!(e.n_hat, 0.0);
        // three tied radii: enough points, one distinct abscissa
        let tied = RadiusLadder::new(0, vec![2.0; 5]);
        let e = estimate_dimension(&tied, &FitWindow::radius(1.0, 3.0).unwrap());
        assert_eq!(e.status, FitStatus::Insufficient);
    }

    #[test]
    fn radius_window_selects_by_distance() {
        let ladder = power_ladder(2.0, 400);
        let w = FitWindow::radius(5.0, 15.0).unwrap();
        let e = estimate_dimension(&ladder, &w);
        assert_eq!(e.points_used, 225 - 25 + 1);
        assert!((e.n_hat - 2.0).abs() < 1e-9);
    }

    #[test]
    fn tied_radii_are_repeated_abscissae() {
        let ladder = RadiusLadder::new(0, vec![1.0, 2.0, 2.0, 4.0]);
        let e = estimate_dimension(&ladder, &FitWindow::volume(1, 4).unwrap());
        let direct = fit_loglog(&[
            (0.0, 0.0),
            (2f64.ln(), 2f64.ln()),
            (2f64.ln(), 3f64.ln()),
            (4f64.ln(), 4f64.ln()),
        ])
        .unwrap();
        assert_eq!(e.n_hat, direct.n_hat);
        assert_eq!(e.points_used, 4);
    }

    #[test]
    fn window_validation_and_parsing() {
        assert!(FitWindow::radius(60.0, 40.0).is_err());
        assert!(FitWindow::volume(0, 10).is_err());
        assert_eq!(FitWindow::parse("volume", "50:90").unwrap(), FitWindow::default());
        assert_eq!(
            FitWindow::parse("radius", "40:60").unwrap(),
            FitWindow::Radius { min: 40.0, max: 60.0 }
        );
        assert!(FitWindow::parse("area", "1:2").is_err());
        assert!(FitWindow::parse("volume", "1-2").is_err());
    }

    #[test]
    fn distribution_single_value() {
        let ests = vec![est(3.0, FitStatus::Ok); 10];
        let d = dimension_distribution(&ests, 5, None).unwrap();
        assert_eq!(d.histogram.counts.iter().filter(|&&c| c > 0).count(), 1);
        let kde = d.kde.as_ref().unwrap();
        let modes = kde.modes();
        assert_eq!(modes.len(), 1);
        assert!((modes[0] - 3.0).abs() < kde.grid[1] - kde.grid[0]);
    }

    #[test]
    fn distribution_zero_fraction() {
        let mut ests = vec![est(5.0, FitStatus::Ok); 4];
        ests.extend(vec![est(0.0, FitStatus::Insufficient); 4]);
        let d = dimension_distribution(&ests, 10, Some(0.3)).unwrap();
        assert_eq!(d.zero_fraction, 0.5);
        assert_eq!(d.histogram.counts[0], 4);
        assert_eq!(d.histogram.counts.iter().sum::<usize>(), 8);
        assert_eq!(d.histogram.mass(), 1.0);
        assert!((d.histogram.density_integral() - 1.0).abs() < 1e-12);
        assert!((d.kde.unwrap().trapezoid_integral() - 1.0).abs() < 1e-6);
        assert_eq!(dimension_distribution(&[], 3, None), Err(ConfigError::NoEstimates));
    }

    #[test]
    fn clusters_reference_ranges() {
        let ests = [
            est(7.2, FitStatus::Ok),
            est(25.0, FitStatus::Ok),
            est(10.4, FitStatus::Ok),
            est(0.0, FitStatus::Insufficient),
            est(8.6, FitStatus::Ok),
        ];
        let labels = bucket_clusters(&ests, &REFERENCE_CLUSTERS).unwrap();
        let shown: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        assert_eq!(shown, vec!["[6,8]", "unclustered", "[9,10]", "zero", "[9,10]"]);
        assert_eq!(
            bucket_clusters(&ests, &[(1.0, 5.0), (4.0, 8.0)]),
            Err(ConfigError::OverlappingRanges((1.0, 5.0), (4.0, 8.0)))
        );
        assert_eq!(parse_ranges("6:8, 9:10").unwrap(), vec![(6.0, 8.0), (9.0, 10.0)]);
    }

    #[test]
    fn dims_csv_round_trip() {
        let ests = vec![est(7.25, FitStatus::Ok), DimensionEstimate::unfitted(1, 2, FitStatus::Insufficient)];
        let labels = bucket_clusters(&ests, &REFERENCE_CLUSTERS).unwrap();
        let mut buf = Vec::new();
        write_dims_csv(&mut buf, &ests, Some(&labels)).unwrap();
        let rows = read_dims_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].estimate, ests[0]);
        assert_eq!(rows[0].cluster, "[6,8]");
        assert_eq!(rows[1].estimate.status, FitStatus::Insufficient);
        assert!(rows[1].estimate.log_h.is_nan());
    }
}
