//! Geometric audits of embedding point clouds via the volume growth transform.
//!
//! The crate estimates a local dimension for every token of a point cloud from
//! its log-log volume growth curve, segments those curves into linear regimes to
//! test the manifold and fiber-bundle hypotheses, tracks dimension along
//! trajectories, and ships synthetic stratified spaces with exact growth curves
//! for validating all of the above.
//!
//! Module map:
//!
//! - [`corpus`]: loading clouds (NPY, CSV) and per-token trajectory metadata.
//! - [`metric`]: distances, sorted radius ladders, brute-force range counts.
//! - [`growth`]: the step curve `(log r_i, log i)` and its evaluation.
//! - [`dimension`]: windowed log-log least squares and population summaries.
//! - [`strata`]: piecewise-linear segmentation and hypothesis classification.
//! - [`synth`]: glued half-disc realizations, fiber bundles, uniform balls.
//! - [`trajectory`]: per-episode dimension series, spikes, event alignment.

pub mod corpus;
pub mod dimension;
pub mod growth;
pub mod metric;
pub mod stats;
pub mod strata;
pub mod synth;
pub mod trajectory;

pub use corpus::{IngestError, MetaError, TokenCloud, TokenMeta};
pub use dimension::{DimensionEstimate, FitStatus, FitWindow};
pub use growth::GrowthCurve;
pub use metric::{DistanceOracle, MetricError, MetricSource, RadiusLadder};
pub use strata::{Segmentation, StrataClass, StrataLabel};
pub use synth::{GrowthSpec, RealizationCloud, SynthError};
pub use trajectory::{EpisodeTrace, SpikeReport, TraceError};
