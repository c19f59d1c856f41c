//! Local dimension as a time series along episodes.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EpisodeIndex;
use crate::dimension::{DimensionEstimate, FitStatus};
use crate::stats;

/// Gaussian consistency factor for the MAD.
pub const MAD_SCALE: f64 = 1.4826;
/// Consistency factor for the mean absolute deviation, used when the MAD is 0.
pub const MEAN_AD_SCALE: f64 = 1.253314;
pub const DEFAULT_THETA: f64 = 3.0;
pub const MIN_SPIKE_ENTRIES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("no trajectory metadata attached")]
    MissingMeta,
    #[error("token {0} has no dimension estimate")]
    MissingEstimate(usize),
    #[error("episode {episode}: {ok} usable entries, spike detection needs {need}")]
    TooShort { episode: i64, ok: usize, need: usize },
    #[error("theta must be > 0, got {0}")]
    BadTheta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: u64,
    pub token: usize,
    pub n_hat: f64,
    pub status: FitStatus,
    #[serde(default)]
    pub events: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub median: f64,
    /// Raw median absolute deviation.
    pub mad: f64,
    pub max: f64,
    pub argmax_t: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: i64,
    pub series: Vec<TraceEntry>,
    /// Over `Ok` entries; absent when there are none.
    pub stats: Option<TraceStats>,
}

impl EpisodeTrace {
    fn ok_values(&self) -> Vec<f64> {
        self.series
            .iter()
            .filter(|e| e.status == FitStatus::Ok)
            .map(|e| e.n_hat)
            .collect()
    }
}

fn trace_stats(series: &[TraceEntry]) -> Option<TraceStats> {
    let ok: Vec<&TraceEntry> = series.iter().filter(|e| e.status == FitStatus::Ok).collect();
    let values: Vec<f64> = ok.iter().map(|e| e.n_hat).collect();
    let median = stats::median(&values)?;
    let mad = stats::mad(&values)?;
    // first occurrence of the maximum
    let top = ok
        .iter()
        .fold(None::<&TraceEntry>, |best, e| match best {
            Some(b) if b.n_hat >= e.n_hat => Some(b),
            _ => Some(e),
        })?;
    Some(TraceStats {
        median,
        mad,
        max: top.n_hat,
        argmax_t: top.t,
    })
}

/// Groups estimates by episode, ordered by timestep.
pub fn episode_series(
    estimates: &[DimensionEstimate],
    meta: Option<&EpisodeIndex>,
) -> Result<Vec<EpisodeTrace>, TraceError> {
    let meta = meta.ok_or(TraceError::MissingMeta)?;
    let by_token: HashMap<usize, &DimensionEstimate> = estimates.iter().map(|e| (e.anchor, e)).collect();
    meta.episodes()
        .iter()
        .map(|(&episode, tokens)| {
            let series = tokens
                .iter()
                .map(|&tok| {
                    let est = by_token.get(&tok).ok_or(TraceError::MissingEstimate(tok))?;
                    let m = meta.get(tok).expect("index and records agree");
                    Ok(TraceEntry {
                        t: m.t,
                        token: tok,
                        n_hat: est.n_hat,
                        status: est.status,
                        events: m.events.clone(),
                    })
                })
                .collect::<Result<Vec<_>, TraceError>>()?;
            let stats = trace_stats(&series);
            Ok(EpisodeTrace {
                episode,
                series,
                stats,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub t: u64,
    pub n_hat: f64,
    pub z_robust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeReport {
    pub episode: i64,
    pub spikes: Vec<Spike>,
    pub theta: f64,
    pub median: f64,
    /// Robust scale: `1.4826 * MAD`, or `1.2533 * mean |x - median|` if the MAD is 0.
    pub scale: f64,
    pub threshold: f64,
}

/// Robust location and scale of a series.
pub fn robust_scale(values: &[f64]) -> Option<(f64, f64)> {
    let median = stats::median(values)?;
    let mad = stats::mad(values)?;
    let scale = if mad > 0.0 {
        MAD_SCALE * mad
    } else {
        MEAN_AD_SCALE * values.iter().map(|v| (v - median).abs()).sum::<f64>() / values.len() as f64
    };
    Some((median, scale))
}

/// Whether entry `k` is a spike under the given median/scale/theta.
///
/// Only `Ok` entries qualify; they must beat every adjacent `Ok` neighbour
/// strictly. Non-`Ok` neighbours are holes and impose no constraint.
pub fn is_spike(series: &[TraceEntry], k: usize, median: f64, scale: f64, theta: f64) -> bool {
    let e = &series[k];
    if e.status != FitStatus::Ok || e.n_hat <= median + theta * scale {
        return false;
    }
    let beats = |j: usize| series[j].status != FitStatus::Ok || e.n_hat > series[j].n_hat;
    (k == 0 || beats(k - 1)) && (k + 1 == series.len() || beats(k + 1))
}

pub fn detect_spikes(trace: &EpisodeTrace, theta: f64) -> Result<SpikeReport, TraceError> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(TraceError::BadTheta(theta));
    }
    let values = trace.ok_values();
    if values.len() < MIN_SPIKE_ENTRIES {
        return Err(TraceError::TooShort {
            episode: trace.episode,
            ok: values.len(),
            need: MIN_SPIKE_ENTRIES,
        });
    }
    let (median, scale) = robust_scale(&values).expect("non-empty");
    let spikes = (0..trace.series.len())
        .filter(|&k| is_spike(&trace.series, k, median, scale, theta))
        .map(|k| {
            let e = &trace.series[k];
            Spike {
                t: e.t,
                n_hat: e.n_hat,
                z_robust: if scale > 0.0 {
                    (e.n_hat - median) / scale
                } else {
                    f64::INFINITY
                },
            }
        })
        .collect();
    Ok(SpikeReport {
        episode: trace.episode,
        spikes,
        theta,
        median,
        scale,
        threshold: median + theta * scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub spike_t: u64,
    pub event_t: Option<u64>,
    pub event: Option<String>,
    /// `event_t - spike_t`.
    pub lag: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub rows: Vec<AlignmentRow>,
    /// Fraction of tagged events with a spike within the window.
    pub event_hit_fraction: Option<f64>,
    pub mean_lag: Option<f64>,
}

/// Matches spikes to the nearest tagged event within `window_steps`.
///
/// `tag` restricts which events count; `None` accepts any tag. Among equally
/// near events the later one (positive lag) wins.
pub fn event_alignment(
    report: &SpikeReport,
    trace: &EpisodeTrace,
    window_steps: u64,
    tag: Option<&str>,
) -> Alignment {
    let events: Vec<(u64, String)> = trace
        .series
        .iter()
        .flat_map(|e| {
            e.events
                .iter()
                .filter(|name| tag.is_none_or(|t| t == name.as_str()))
                .map(move |name| (e.t, name.clone()))
        })
        .collect();
    if events.is_empty() {
        return Alignment::default();
    }
    let within = |a: u64, b: u64| a.abs_diff(b) <= window_steps;
    let rows: Vec<AlignmentRow> = report
        .spikes
        .iter()
        .map(|sp| {
            let best = events
                .iter()
                .filter(|(t, _)| within(*t, sp.t))
                .min_by_key(|(t, _)| (t.abs_diff(sp.t), *t < sp.t));
            AlignmentRow {
                spike_t: sp.t,
                event_t: best.map(|b| b.0),
                event: best.map(|b| b.1.clone()),
                lag: best.map(|b| b.0 as i64 - sp.t as i64),
            }
        })
        .collect();
    let hit = events
        .iter()
        .filter(|(t, _)| report.spikes.iter().any(|sp| within(*t, sp.t)))
        .count();
    let lags: Vec<f64> = rows.iter().filter_map(|r| r.lag.map(|l| l as f64)).collect();
    Alignment {
        rows,
        event_hit_fraction: Some(hit as f64 / events.len() as f64),
        mean_lag: stats::mean(&lags),
    }
}

/// Per-episode record of the traces JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: i64,
    pub series: Vec<TraceEntry>,
    pub stats: Option<TraceStats>,
    pub spikes: Option<SpikeReport>,
    pub alignment: Alignment,
}

pub fn write_traces_json<W: Write>(out: &mut W, records: &[TraceRecord]) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(&mut *out, records)?;
    out.write_all(b"\n").map_err(serde_json::Error::io)
}

pub fn read_traces_json<R: Read>(input: R) -> serde_json::Result<Vec<TraceRecord>> {
    serde_json::from_reader(input)
}
