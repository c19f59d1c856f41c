//! Piecewise-linear segmentation of growth curves and hypothesis labels.
//!
//! A manifold point has one growth regime. A point of a fiber bundle with
//! bounded fibers sees the slope drop from `base + fiber` to `base` as the
//! ball leaves the fiber. Any sharp slope *increase* is incompatible with both
//! and marks the point as sitting on a flare of a stratified space.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::fit_loglog;
use crate::growth::GrowthCurve;

pub const DEFAULT_SLOPE_TOL: f64 = 0.5;
pub const DEFAULT_MAX_SEGMENTS: usize = 4;
pub const DEFAULT_MIN_SEGMENT_LEN: usize = 3;

// Token classification runs on noisy empirical curves, where the default
// penalty (which assumes independent residuals) readily admits spurious
// segments; these defaults keep short noisy runs from becoming regimes.
pub const CLASSIFY_MAX_SEGMENTS: usize = 2;
pub const CLASSIFY_MIN_SEGMENT_LEN: usize = 30;
/// The nearest few neighbours carry the largest relative noise.
pub const CLASSIFY_MIN_COUNT: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("segmentation needs at least {need} samples, curve has {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid segmentation parameter: {0}")]
    Parameter(String),
    #[error("no admissible segmentation (curve has too few distinct abscissae)")]
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub s_lo: f64,
    pub s_hi: f64,
    pub slope: f64,
    pub intercept: f64,
    pub sse: f64,
    /// Sample index range `[start, end)` fit by this segment.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub anchor: usize,
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Segment>,
    pub penalty: f64,
    pub total_cost: f64,
}

impl Segmentation {
    pub fn slopes(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.slope).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SegmentOptions {
    pub max_segments: usize,
    /// Cost per segment; `None` selects `2 * sigma^2 * ln p` from the
    /// single-line residual variance.
    pub penalty: Option<f64>,
    pub min_segment_len: usize,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            max_segments: DEFAULT_MAX_SEGMENTS,
            penalty: None,
            min_segment_len: DEFAULT_MIN_SEGMENT_LEN,
        }
    }
}

/// Centered prefix sums for O(1) least-squares segment costs.
struct Prefix {
    s: Vec<f64>,
    n: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
}

impl Prefix {
    fn new(points: &[(f64, f64)]) -> Self {
        let p = points.len() as f64;
        let mx = points.iter().map(|q| q.0).sum::<f64>() / p;
        let my = points.iter().map(|q| q.1).sum::<f64>() / p;
        let mut out = Prefix {
            s: points.iter().map(|q| q.0).collect(),
            n: vec![0.0],
            x: vec![0.0],
            y: vec![0.0],
            xx: vec![0.0],
            xy: vec![0.0],
            yy: vec![0.0],
        };
        for (k, &(s, v)) in points.iter().enumerate() {
            let (a, b) = (s - mx, v - my);
            out.n.push(out.n[k] + 1.0);
            out.x.push(out.x[k] + a);
            out.y.push(out.y[k] + b);
            out.xx.push(out.xx[k] + a * a);
            out.xy.push(out.xy[k] + a * b);
            out.yy.push(out.yy[k] + b * b);
        }
        out
    }

    /// Residual sum of squares of the OLS line on samples `[a, b)`.
    fn sse(&self, a: usize, b: usize) -> f64 {
        let n = self.n[b] - self.n[a];
        let sx = self.x[b] - self.x[a];
        let sy = self.y[b] - self.y[a];
        let sxx = (self.xx[b] - self.xx[a]) - sx * sx / n;
        let sxy = (self.xy[b] - self.xy[a]) - sx * sy / n;
        let syy = (self.yy[b] - self.yy[a]) - sy * sy / n;
        if sxx <= 0.0 {
            return syy.max(0.0);
        }
        (syy - sxy * sxy / sxx).max(0.0)
    }
}

/// Whether samples `[a, b)` may form one segment.
fn admissible(s: &[f64], a: usize, b: usize, min_len: usize) -> bool {
    b - a >= min_len.max(2) && s[b - 1] > s[a] && (a == 0 || s[a] > s[a - 1])
}

pub fn default_penalty(points: &[(f64, f64)]) -> f64 {
    let p = points.len();
    let sigma2 = fit_loglog(points)
        .map(|f| f.residual_rms * f.residual_rms)
        .unwrap_or(0.0);
    (2.0 * sigma2 * (p as f64).ln()).max(1e-12)
}

pub fn segment_curve(
    curve: &GrowthCurve,
    max_segments: usize,
    penalty: f64,
) -> Result<Segmentation, SegmentError> {
    segment_curve_with(
        curve,
        &SegmentOptions {
            max_segments,
            penalty: Some(penalty),
            ..SegmentOptions::default()
        },
    )
}

/// Exact dynamic-programming segmentation minimizing
/// `sum(sse) + penalty * segments` over at most `max_segments` pieces.
pub fn segment_curve_with(
    curve: &GrowthCurve,
    opts: &SegmentOptions,
) -> Result<Segmentation, SegmentError> {
    let points = curve.points();
    let p = points.len();
    let min_len = opts.min_segment_len.max(2);
    let need = 4.max(min_len);
    if p < need {
        return Err(SegmentError::TooFewSamples { need, got: p });
    }
    if opts.max_segments == 0 {
        return Err(SegmentError::Parameter("max_segments must be >= 1".into()));
    }
    let penalty = match opts.penalty {
        Some(v) if v > 0.0 && v.is_finite() => v,
        Some(v) => return Err(SegmentError::Parameter(format!("penalty must be > 0, got {v}"))),
        None => default_penalty(&points),
    };

    let prefix = Prefix::new(&points);
    let s = &prefix.s;
    let k_max = opts.max_segments.min(p / min_len);
    // cost[m][j]: best cost of covering samples [0, j) with m segments.
    let mut cost = vec![vec![f64::INFINITY; p + 1]; k_max + 1];
    let mut back = vec![vec![usize::MAX; p + 1]; k_max + 1];
    cost[0][0] = 0.0;
    for m in 1..=k_max {
        for j in (m * min_len)..=p {
            if j < p && s[j] <= s[j - 1] {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for i in ((m - 1) * min_len)..=(j - min_len) {
                let prev = cost[m - 1][i];
                if !prev.is_finite() || !admissible(s, i, j, min_len) {
                    continue;
                }
                let c = prev + prefix.sse(i, j);
                if c < best {
                    best = c;
                    arg = i;
                }
            }
            cost[m][j] = best;
            back[m][j] = arg;
        }
    }

    let mut best_m = 0;
    let mut best_total = f64::INFINITY;
    for (m, row) in cost.iter().enumerate().skip(1) {
        let total = row[p] + penalty * m as f64;
        if total < best_total {
            best_total = total;
            best_m = m;
        }
    }
    if best_m == 0 {
        return Err(SegmentError::Infeasible);
    }

    let mut bounds = vec![p];
    let mut j = p;
    for m in (1..=best_m).rev() {
        j = back[m][j];
        bounds.push(j);
    }
    bounds.reverse();

    let mut segments = Vec::with_capacity(best_m);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fit = fit_loglog(&points[a..b]).map_err(|_| SegmentError::Infeasible)?;
        let sse = fit.residual_rms * fit.residual_rms * (b - a) as f64;
        segments.push(Segment {
            s_lo: s[a],
            s_hi: if b == p { s[p - 1] } else { s[b] },
            slope: fit.n_hat,
            intercept: fit.log_h,
            sse,
            start: a,
            end: b,
        });
    }
    let breakpoints = bounds[1..bounds.len() - 1].iter().map(|&b| s[b]).collect();
    let total_cost = segments.iter().map(|g| g.sse).sum::<f64>() + penalty * segments.len() as f64;
    Ok(Segmentation {
        anchor: curve.anchor,
        breakpoints,
        segments,
        penalty,
        total_cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrataLabel {
    Manifold,
    FiberBundle,
    Flare,
    Ambiguous,
}

impl StrataLabel {
    pub const ALL: [StrataLabel; 4] = [
        StrataLabel::Manifold,
        StrataLabel::FiberBundle,
        StrataLabel::Flare,
        StrataLabel::Ambiguous,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrataLabel::Manifold => "manifold",
            StrataLabel::FiberBundle => "fiber_bundle",
            StrataLabel::Flare => "flare",
            StrataLabel::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for StrataLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub s: f64,
    pub slope_before: f64,
    pub slope_after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrataClass {
    pub anchor: usize,
    pub label: StrataLabel,
    pub slope_sequence: Vec<f64>,
    pub evidence: Vec<Corner>,
}

pub fn corner_report(seg: &Segmentation) -> Vec<Corner> {
    seg.segments
        .windows(2)
        .zip(&seg.breakpoints)
        .map(|(w, &s)| Corner {
            s,
            slope_before: w[0].slope,
            slope_after: w[1].slope,
            delta: w[1].slope - w[0].slope,
        })
        .collect()
}

/// Labels a segmentation by its slope changes.
///
/// In order: any increase above `slope_tol` is a flare; all-decreasing slopes
/// with a net drop above `slope_tol` are a fiber bundle; changes and net drift
/// all within `slope_tol` are a manifold; everything else is ambiguous.
pub fn classify_token(seg: &Segmentation, slope_tol: f64) -> StrataClass {
    let slopes = seg.slopes();
    let corners = corner_report(seg);
    let label = label_slopes(&slopes, slope_tol);
    StrataClass {
        anchor: seg.anchor,
        label,
        slope_sequence: slopes,
        evidence: corners,
    }
}

pub fn label_slopes(slopes: &[f64], slope_tol: f64) -> StrataLabel {
    if slopes.len() <= 1 {
        return StrataLabel::Manifold;
    }
    let deltas: Vec<f64> = slopes.windows(2).map(|w| w[1] - w[0]).collect();
    let net = slopes[slopes.len() - 1] - slopes[0];
    if deltas.iter().any(|&d| d > slope_tol) {
        StrataLabel::Flare
    } else if deltas.iter().all(|&d| d < 0.0) && net < -slope_tol {
        StrataLabel::FiberBundle
    } else if deltas.iter().all(|d| d.abs() <= slope_tol) && net.abs() <= slope_tol {
        StrataLabel::Manifold
    } else {
        StrataLabel::Ambiguous
    }
}

/// Curve trimming, segmentation and labelling settings for one token.
#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    pub segment: SegmentOptions,
    pub slope_tol: f64,
    /// Smallest neighbour count kept before segmenting.
    pub min_count: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            segment: SegmentOptions {
                max_segments: CLASSIFY_MAX_SEGMENTS,
                penalty: None,
                min_segment_len: CLASSIFY_MIN_SEGMENT_LEN,
            },
            slope_tol: DEFAULT_SLOPE_TOL,
            min_count: CLASSIFY_MIN_COUNT,
        }
    }
}

pub fn classify_curve(
    curve: &GrowthCurve,
    opts: &ClassifyOptions,
) -> Result<(Segmentation, StrataClass), SegmentError> {
    let trimmed = curve.count_range(opts.min_count, usize::MAX);
    let seg = segment_curve_with(&trimmed, &opts.segment)?;
    let class = classify_token(&seg, opts.slope_tol);
    Ok((seg, class))
}

pub const CLASSES_CSV_HEADER: &str = "token,label,segment_count,slopes,breakpoints_s";

pub fn write_classes_csv<W: Write>(
    out: &mut W,
    rows: &[(Segmentation, StrataClass)],
) -> std::io::Result<()> {
    writeln!(out, "{CLASSES_CSV_HEADER}")?;
    for (seg, class) in rows {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";");
        writeln!(
            out,
            "{},{},{},{},{}",
            class.anchor,
            class.label,
            seg.segments.len(),
            join(&class.slope_sequence),
            join(&seg.breakpoints)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::CurveSample;

    pub(crate) fn curve_from(points: &[(f64, f64)]) -> GrowthCurve {
        GrowthCurve {
            anchor: 0,
            samples: points
                .iter()
                .enumerate()
                .map(|(k, &(s, y))| CurveSample {
                    i: k + 1,
                    r: s.exp(),
                    s,
                    log_v: y,
                })
                .collect(),
        }
    }

    fn piecewise(ss: &[f64], knots: &[f64], slopes: &[f64]) -> Vec<(f64, f64)> {
        // continuous curve through the origin at ss[0]
        ss.iter()
            .map(|&s| {
                let mut y = 0.0;
                let mut prev = ss[0];
                for (k, &m) in slopes.iter().enumerate() {
                    let end = knots.get(k).copied().unwrap_or(f64::INFINITY);
                    if s > prev {
                        y += m * (s.min(end) - prev);
                    }
                    prev = end;
                }
                (s, y)
            })
            .collect()
    }

    #[test]
    fn one_slope_line() {
        let pts: Vec<(f64, f64)> = (0..30).map(|k| (k as f64 * 0.1, 0.2 * k as f64)).collect();
        let seg = segment_curve(&curve_from(&pts), 4, 1e-6).unwrap();
        assert_eq!(seg.segments.len(), 1);
        assert!((seg.segments[0].slope - 2.0).abs() < 1e-12);
        assert!(seg.segments[0].sse < 1e-20);
    }

    #[test]
    fn two_regimes() {
        let ss: Vec<f64> = (0..100).map(|k| -2.0 + 4.0 * k as f64 / 99.0).collect();
        let pts = piecewise(&ss, &[0.0], &[3.0, 1.0]);
        let seg = segment_curve(&curve_from(&pts), 4, 1e-3).unwrap();
        assert_eq!(seg.segments.len(), 2);
        let spacing = 4.0 / 99.0;
        assert!(seg.breakpoints[0].abs() <= spacing + 1e-12, "{:?}", seg.breakpoints);
        assert!((seg.segments[0].slope - 3.0).abs() < 0.05);
        assert!((seg.segments[1].slope - 1.0).abs() < 0.05);
    }

    #[test]
    fn three_regimes_non_increasing() {
        let ss: Vec<f64> = (0..120).map(|k| -3.0 + 6.0 * k as f64 / 119.0).collect();
        let pts = piecewise(&ss, &[-1.0, 1.0], &[3.0, 2.5, 2.0]);
        let seg = segment_curve(&curve_from(&pts), 4, 1e-4).unwrap();
        assert_eq!(seg.segments.len(), 3);
        let slopes = seg.slopes();
        assert!(slopes.windows(2).all(|w| w[1] <= w[0]), "{slopes:?}");
    }

    #[test]
    fn too_few_samples() {
        let pts = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)];
        assert!(matches!(
            segment_curve(&curve_from(&pts), 2, 1.0),
            Err(SegmentError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn labels_from_slopes() {
        assert_eq!(label_slopes(&[3.0, 2.0], 0.3), StrataLabel::FiberBundle);
        assert_eq!(label_slopes(&[2.0, 1.1, 3.2], 0.3), StrataLabel::Flare);
        assert_eq!(label_slopes(&[2.0], 0.3), StrataLabel::Manifold);
        assert_eq!(label_slopes(&[2.0, 2.2, 2.1], 0.3), StrataLabel::Manifold);
        assert_eq!(label_slopes(&[3.0, 2.0, 2.2], 0.3), StrataLabel::Ambiguous);
        assert_eq!(label_slopes(&[3.0, 2.7, 2.4], 0.5), StrataLabel::FiberBundle);
    }

    fn seg_with(slopes: &[f64], breaks: &[f64]) -> Segmentation {
        Segmentation {
            anchor: 0,
            breakpoints: breaks.to_vec(),
            segments: slopes
                .iter()
                .map(|&m| Segment {
                    s_lo: 0.0,
                    s_hi: 0.0,
                    slope: m,
                    intercept: 0.0,
                    sse: 0.0,
                    start: 0,
                    end: 0,
                })
                .collect(),
            penalty: 1.0,
            total_cost: 0.0,
        }
    }

    #[test]
    fn corners() {
        let c = corner_report(&seg_with(&[3.0, 2.0], &[0.0]));
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].s, c[0].delta), (0.0, -1.0));
        let c = corner_report(&seg_with(&[1.0, 3.0, 0.0], &[0.5, 1.5]));
        assert_eq!(c.iter().map(|c| c.delta).collect::<Vec<_>>(), vec![2.0, -3.0]);
        assert!(corner_report(&seg_with(&[1.0], &[])).is_empty());
    }

    #[test]
    fn classes_csv() {
        let seg = seg_with(&[3.0, 2.0], &[0.25]);
        let class = classify_token(&seg, 0.5);
        let mut buf = Vec::new();
        write_classes_csv(&mut buf, &[(seg, class)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,fiber_bundle,2,3.0;2.0,0.25");
    }
}
