//! Log-log volume growth curves.
//!
//! For an anchor with ladder `r_1 <= ... <= r_p` the empirical curve is the
//! step function through `(s_i, log i)` with `s_i = ln r_i`. The counting
//! measure stands in for the volume; its unknown density constant ends up in
//! the intercept of any fit.

use std::io::Write;

use thiserror::Error;

use crate::metric::RadiusLadder;

#[derive(Debug, Error, PartialEq)]
pub enum GrowthError {
    #[error("anchor {anchor}: radius {index} is zero (duplicate token), log undefined")]
    ZeroRadius { anchor: usize, index: usize },
    #[error("empty ladder for anchor {0}")]
    EmptyLadder(usize),
    #[error("s = {s} lies below the first sample s_1 = {first}; the empirical volume is zero there")]
    BelowFirstRadius { s: f64, first: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    /// 1-based neighbour count.
    pub i: usize,
    pub r: f64,
    pub s: f64,
    pub log_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCurve {
    pub anchor: usize,
    pub samples: Vec<CurveSample>,
}

pub fn growth_curve(ladder: &RadiusLadder) -> Result<GrowthCurve, GrowthError> {
    if ladder.is_empty() {
        return Err(GrowthError::EmptyLadder(ladder.anchor));
    }
    let samples = ladder
        .radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            if r > 0.0 {
                Ok(CurveSample {
                    i: k + 1,
                    r,
                    s: r.ln(),
                    log_v: ((k + 1) as f64).ln(),
                })
            } else {
                Err(GrowthError::ZeroRadius {
                    anchor: ladder.anchor,
                    index: k + 1,
                })
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(GrowthCurve {
        anchor: ladder.anchor,
        samples,
    })
}

/// Right-continuous step evaluation: `log i` for the largest `s_i <= s`.
pub fn vgt_eval(curve: &GrowthCurve, s: f64) -> Result<f64, GrowthError> {
    let k = curve.samples.partition_point(|p| p.s <= s);
    if k == 0 {
        return Err(GrowthError::BelowFirstRadius {
            s,
            first: curve.samples.first().map_or(f64::NAN, |p| p.s),
        });
    }
    Ok(curve.samples[k - 1].log_v)
}

impl GrowthCurve {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|p| (p.s, p.log_v)).collect()
    }

    /// Keeps samples whose neighbour count lies in `[min_count, max_count]`.
    pub fn count_range(&self, min_count: usize, max_count: usize) -> GrowthCurve {
        GrowthCurve {
            anchor: self.anchor,
            samples: self
                .samples
                .iter()
                .filter(|p| p.i >= min_count && p.i <= max_count)
                .copied()
                .collect(),
        }
    }
}

pub const CURVE_CSV_HEADER: &str = "token,i,r,s,log_v";

/// Writes `token,i,r,s,log_v` rows for each curve in order.
pub fn write_curve_csv<W: Write>(out: &mut W, curves: &[GrowthCurve]) -> std::io::Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for c in curves {
        for p in &c.samples {
            writeln!(out, "{},{},{:?},{:?},{:?}", c.anchor, p.i, p.r, p.s, p.log_v)?;
        }
    }
    Ok(())
}
