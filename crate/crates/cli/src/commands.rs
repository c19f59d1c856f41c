use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use strata_audit::corpus::{self, parse_meta, TokenCloud};
use strata_audit::dimension::{
    bucket_clusters, dimension_distribution, estimate_all, parse_ranges, read_dims_csv,
    write_dims_csv, write_histogram_csv, write_kde_csv, FitWindow,
};
use strata_audit::growth::{growth_curve, write_curve_csv};
use strata_audit::metric::{map_ladders, radius_ladder, read_ladder_cache, write_ladder_cache};
use strata_audit::strata::{classify_curve, write_classes_csv, ClassifyOptions, SegmentOptions};
use strata_audit::synth::{sample_ball, sample_fiber_bundle, sample_realization, GrowthSpec};
use strata_audit::trajectory::{
    detect_spikes, episode_series, event_alignment, write_traces_json, TraceError, TraceRecord,
};
use strata_audit::{RadiusLadder, StrataLabel};

use crate::config::{ClassifyArgs, CurveArgs, DimsArgs, InputArgs, SourceArgs, SynthKind, TrajArgs};

/// Opens `path` for writing, or standard output when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn load_cloud(path: &Path, csv_header: bool) -> Result<TokenCloud> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let cloud = if is_csv {
        corpus::load_csv(path, csv_header)?
    } else {
        corpus::load_array_file(path)?
    };
    Ok(cloud)
}

fn load_input(input: &InputArgs) -> Result<TokenCloud> {
    load_cloud(&input.input, input.csv_header)
}

pub fn dims(args: &DimsArgs) -> Result<()> {
    let window = FitWindow::parse(&args.mode, args.window_spec())?;
    let cloud = load_input(&args.input)?;
    let estimates = estimate_all(&cloud, &window)?;
    let clusters = args
        .clusters
        .as_deref()
        .map(|spec| bucket_clusters(&estimates, &parse_ranges(spec)?))
        .transpose()?;
    let mut out = sink(args.out.as_deref())?;
    write_dims_csv(&mut out, &estimates, clusters.as_deref())?;
    out.flush()?;

    if args.hist.is_some() || args.kde.is_some() {
        let dist = dimension_distribution(&estimates, args.bins, args.bandwidth)?;
        if let Some(p) = &args.hist {
            let mut w = create(p)?;
            write_histogram_csv(&mut w, &dist)?;
            w.flush()?;
        }
        if let Some(p) = &args.kde {
            let mut w = create(p)?;
            write_kde_csv(&mut w, &dist)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Ladders for `tokens` (all tokens when empty), in the requested order.
fn ladders_for(source: &SourceArgs, tokens: &[usize], cap: Option<usize>) -> Result<Vec<RadiusLadder>> {
    if let Some(path) = &source.ladders {
        let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
        let cached = read_ladder_cache(BufReader::new(file))?;
        if tokens.is_empty() {
            return Ok(cached);
        }
        let by_anchor: BTreeMap<usize, &RadiusLadder> = cached.iter().map(|l| (l.anchor, l)).collect();
        return tokens
            .iter()
            .map(|t| {
                by_anchor
                    .get(t)
                    .map(|l| (*l).clone())
                    .with_context(|| format!("token {t} is not in ladder cache {}", path.display()))
            })
            .collect();
    }
    let path = source.input.as_ref().expect("clap requires --input or --ladders");
    let cloud = load_cloud(path, source.csv_header)?;
    if tokens.is_empty() {
        return Ok(map_ladders(&cloud, cap, |l| l)?);
    }
    tokens
        .iter()
        .map(|&t| Ok(radius_ladder(&cloud, t, cap)?))
        .collect()
}

pub fn curve(args: &CurveArgs) -> Result<()> {
    let curves = ladders_for(&args.source, &args.tokens, None)?
        .iter()
        .map(growth_curve)
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = sink(args.out.as_deref())?;
    write_curve_csv(&mut out, &curves)?;
    out.flush()?;
    Ok(())
}

pub fn classify(args: &ClassifyArgs) -> Result<()> {
    let opts = ClassifyOptions {
        segment: SegmentOptions {
            max_segments: args.max_segments,
            penalty: args.penalty,
            min_segment_len: args.min_segment_len,
        },
        slope_tol: args.slope_tol,
        min_count: args.min_count,
    };
    if !(opts.slope_tol > 0.0) {
        bail!("--slope-tol must be > 0");
    }
    let rows = ladders_for(&args.source, &args.tokens, args.cap)?
        .iter()
        .map(|l| {
            let curve = growth_curve(l)?;
            classify_curve(&curve, &opts).with_context(|| format!("token {}", l.anchor))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = sink(args.out.as_deref())?;
    write_classes_csv(&mut out, &rows)?;
    out.flush()?;
    let mut counts: BTreeMap<StrataLabel, usize> = StrataLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for (_, class) in &rows {
        *counts.entry(class.label).or_default() += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(l, c)| format!("{l}={c}")).collect();
    eprintln!("{} tokens: {}", rows.len(), summary.join(" "));
    Ok(())
}

#[derive(Serialize)]
struct StratumLine {
    token: usize,
    stratum: usize,
    base: bool,
}

/// Paths written by `synth realization` for an output prefix.
pub fn realization_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with(".ladders"), with(".strata.jsonl"))
}

pub fn synth(kind: &SynthKind) -> Result<()> {
    match kind {
        SynthKind::Realization { slopes, scales, n, seed, anchors, out } => {
            let spec = GrowthSpec::new(scales.clone(), slopes.clone())?;
            let real = sample_realization(&spec, *n, *seed)?;
            let mut wanted = vec![real.base_index];
            wanted.extend(anchors.iter().filter(|&&a| a != real.base_index));
            let ladders = wanted
                .iter()
                .map(|&a| radius_ladder(&real.cloud, a, None))
                .collect::<Result<Vec<_>, _>>()?;
            let (cache, strata) = realization_paths(out);
            let mut w = create(&cache)?;
            write_ladder_cache(&mut w, &ladders)?;
            w.flush()?;
            let mut w = create(&strata)?;
            for (token, &stratum) in real.stratum_labels.iter().enumerate() {
                let line = StratumLine {
                    token,
                    stratum,
                    base: token == real.base_index,
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        SynthKind::Bundle { base, fiber, eps, extent, n, seed, out } => {
            let cloud = sample_fiber_bundle(*base, *fiber, *eps, *extent, *n, *seed)?;
            corpus::write_array_file(out, &cloud)?;
        }
        SynthKind::Ball { dim, radius, n, seed, out } => {
            let cloud = sample_ball(*dim, *radius, *n, *seed)?;
            corpus::write_array_file(out, &cloud)?;
        }
    }
    Ok(())
}

pub fn traj(args: &TrajArgs) -> Result<()> {
    let file = File::open(&args.dims).with_context(|| format!("cannot read {}", args.dims.display()))?;
    let rows = read_dims_csv(BufReader::new(file))?;
    let meta_file = File::open(&args.meta).with_context(|| format!("cannot read {}", args.meta.display()))?;
    let index = parse_meta(BufReader::new(meta_file), rows.len())?;
    let estimates: Vec<_> = rows.into_iter().map(|r| r.estimate).collect();
    let traces = episode_series(&estimates, Some(&index))?;
    let records = traces
        .into_iter()
        .map(|trace| {
            let (spikes, alignment) = match detect_spikes(&trace, args.theta) {
                Ok(report) => {
                    let a = event_alignment(&report, &trace, args.window_steps, args.tag.as_deref());
                    (Some(report), a)
                }
                Err(TraceError::TooShort { .. }) => (None, Default::default()),
                Err(e) => return Err(e.into()),
            };
            Ok(TraceRecord {
                episode: trace.episode,
                series: trace.series,
                stats: trace.stats,
                spikes,
                alignment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = sink(args.out.as_deref())?;
    write_traces_json(&mut out, &records)?;
    out.flush()?;
    Ok(())
}
