use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Stratification audit of token embeddings via volume growth.
#[derive(Parser, Debug, Clone, PartialEq)]
#[command(name = "strata-audit", version)]
pub struct RunConfig {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "STRATA_AUDIT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Per-token local dimension plus distribution summaries.
    Dims(DimsArgs),
    /// Growth-curve samples for selected tokens.
    Curve(CurveArgs),
    /// Segment growth curves and label each token.
    Classify(ClassifyArgs),
    /// Generate synthetic clouds with known growth.
    Synth(SynthArgs),
    /// Dimension time series along episodes, with spike detection.
    Traj(TrajArgs),
    /// Run the built-in acceptance suite.
    Check(CheckArgs),
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct InputArgs {
    /// Embeddings: `.npy` array file, or `.csv`.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV input starts with a header line.
    #[arg(long)]
    pub csv_header: bool,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct DimsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = ["volume", "radius"], default_value = "volume")]
    pub mode: String,
    /// `lo:hi`; defaults to 50:90 (volume) or 40:60 (radius).
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// KDE bandwidth; Silverman's rule when omitted.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Closed cluster ranges, e.g. `6:8,9:10,11:13,14:21`.
    #[arg(long)]
    pub clusters: Option<String>,
    /// Dims CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub hist: Option<PathBuf>,
    #[arg(long)]
    pub kde: Option<PathBuf>,
}

impl DimsArgs {
    pub fn window_spec(&self) -> &str {
        match (&self.window, self.mode.as_str()) {
            (Some(w), _) => w,
            (None, "radius") => "40:60",
            (None, _) => "50:90",
        }
    }
}

/// Where radius ladders come from: an embeddings file or a ladder cache.
#[derive(Args, Debug, Clone, PartialEq)]
pub struct SourceArgs {
    #[arg(long, required_unless_present = "ladders", conflicts_with = "ladders")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub csv_header: bool,
    #[arg(long)]
    pub ladders: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct CurveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub tokens: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Tokens to classify; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub tokens: Vec<usize>,
    /// Neighbours kept per ladder.
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long, default_value_t = strata_audit::strata::CLASSIFY_MAX_SEGMENTS)]
    pub max_segments: usize,
    /// Fewest samples per segment.
    #[arg(long, default_value_t = strata_audit::strata::CLASSIFY_MIN_SEGMENT_LEN)]
    pub min_segment_len: usize,
    /// Cost per segment; `2 sigma^2 ln p` when omitted.
    #[arg(long)]
    pub penalty: Option<f64>,
    #[arg(long, default_value_t = strata_audit::strata::DEFAULT_SLOPE_TOL)]
    pub slope_tol: f64,
    /// Smallest neighbour count kept before segmenting.
    #[arg(long, default_value_t = strata_audit::strata::CLASSIFY_MIN_COUNT)]
    pub min_count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum SynthKind {
    /// Glued disc chain whose base point follows a prescribed growth law.
    /// Writes `<out>.ladders` and `<out>.strata.jsonl`.
    Realization {
        #[arg(long, value_delimiter = ',', required = true)]
        slopes: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        scales: Vec<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Extra anchors whose ladders go into the cache after the base point.
        #[arg(long, value_delimiter = ',')]
        anchors: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform product of a base cube and a thin fiber cube.
    Bundle {
        #[arg(long)]
        base: usize,
        #[arg(long)]
        fiber: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        extent: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform ball.
    Ball {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct TrajArgs {
    /// Dims CSV from `dims`.
    #[arg(long)]
    pub dims: PathBuf,
    /// JSON-lines trajectory metadata.
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long, default_value_t = strata_audit::trajectory::DEFAULT_THETA)]
    pub theta: f64,
    /// Largest |event - spike| step distance counted as aligned.
    #[arg(long, default_value_t = 2)]
    pub window_steps: u64,
    /// Only events with this tag are aligned.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Synth,
    Core,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn push(out: &mut Vec<String>, flag: &str, value: impl ToString) {
    out.push(format!("--{flag}"));
    out.push(value.to_string());
}

fn push_opt<T: ToString>(out: &mut Vec<String>, flag: &str, value: &Option<T>) {
    if let Some(v) = value {
        push(out, flag, v.to_string());
    }
}

fn push_path(out: &mut Vec<String>, flag: &str, value: &Option<PathBuf>) {
    if let Some(v) = value {
        push(out, flag, v.display());
    }
}

fn push_list<T: ToString>(out: &mut Vec<String>, flag: &str, values: &[T]) {
    if !values.is_empty() {
        push(out, flag, values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    }
}

fn push_flag(out: &mut Vec<String>, flag: &str, on: bool) {
    if on {
        out.push(format!("--{flag}"));
    }
}

fn push_source(out: &mut Vec<String>, s: &SourceArgs) {
    push_path(out, "input", &s.input);
    push_flag(out, "csv-header", s.csv_header);
    push_path(out, "ladders", &s.ladders);
}

impl RunConfig {
    /// An argument vector (program name first) that parses back to `self`.
    pub fn to_args(&self) -> Vec<String> {
        let mut a = vec!["strata-audit".to_string()];
        push_opt(&mut a, "threads", &self.threads);
        match &self.command {
            Command::Dims(d) => {
                a.push("dims".into());
                push(&mut a, "input", d.input.input.display());
                push_flag(&mut a, "csv-header", d.input.csv_header);
                push(&mut a, "mode", &d.mode);
                push_opt(&mut a, "window", &d.window);
                push(&mut a, "bins", d.bins);
                push_opt(&mut a, "bandwidth", &d.bandwidth);
                push_opt(&mut a, "clusters", &d.clusters);
                push_path(&mut a, "out", &d.out);
                push_path(&mut a, "hist", &d.hist);
                push_path(&mut a, "kde", &d.kde);
            }
            Command::Curve(c) => {
                a.push("curve".into());
                push_source(&mut a, &c.source);
                push_list(&mut a, "tokens", &c.tokens);
                push_path(&mut a, "out", &c.out);
            }
            Command::Classify(c) => {
                a.push("classify".into());
                push_source(&mut a, &c.source);
                push_list(&mut a, "tokens", &c.tokens);
                push_opt(&mut a, "cap", &c.cap);
                push(&mut a, "max-segments", c.max_segments);
                push(&mut a, "min-segment-len", c.min_segment_len);
                push_opt(&mut a, "penalty", &c.penalty);
                push(&mut a, "slope-tol", c.slope_tol);
                push(&mut a, "min-count", c.min_count);
                push_path(&mut a, "out", &c.out);
            }
            Command::Synth(s) => {
                a.push("synth".into());
                match &s.kind {
                    SynthKind::Realization { slopes, scales, n, seed, anchors, out } => {
                        a.push("realization".into());
                        push_list(&mut a, "slopes", slopes);
                        push_list(&mut a, "scales", scales);
                        push(&mut a, "n", n);
                        push(&mut a, "seed", seed);
                        push_list(&mut a, "anchors", anchors);
                        push(&mut a, "out", out.display());
                    }
                    SynthKind::Bundle { base, fiber, eps, extent, n, seed, out } => {
                        a.push("bundle".into());
                        push(&mut a, "base", base);
                        push(&mut a, "fiber", fiber);
                        push(&mut a, "eps", eps);
                        push(&mut a, "extent", extent);
                        push(&mut a, "n", n);
                        push(&mut a, "seed", seed);
                        push(&mut a, "out", out.display());
                    }
                    SynthKind::Ball { dim, radius, n, seed, out } => {
                        a.push("ball".into());
                        push(&mut a, "dim", dim);
                        push(&mut a, "radius", radius);
                        push(&mut a, "n", n);
                        push(&mut a, "seed", seed);
                        push(&mut a, "out", out.display());
                    }
                }
            }
            Command::Traj(t) => {
                a.push("traj".into());
                push(&mut a, "dims", t.dims.display());
                push(&mut a, "meta", t.meta.display());
                push(&mut a, "theta", t.theta);
                push(&mut a, "window-steps", t.window_steps);
                push_opt(&mut a, "tag", &t.tag);
                push_path(&mut a, "out", &t.out);
            }
            Command::Check(c) => {
                a.push("check".into());
                let suite = c.suite.to_possible_value().expect("no skipped variants");
                push(&mut a, "suite", suite.get_name());
                push_path(&mut a, "report", &c.report);
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(line: &str) {
        let cfg = RunConfig::try_parse_from(line.split_whitespace()).unwrap();
        let again = RunConfig::try_parse_from(cfg.to_args()).unwrap();
        assert_eq!(cfg, again, "{line}");
    }

    #[test]
    fn commands_round_trip() {
        for line in [
            "strata-audit dims --input a.npy",
            "strata-audit --threads 3 dims --input a.csv --csv-header --mode radius --window 40:60 --bins 12 --bandwidth 0.25 --clusters 6:8,9:10 --out d.csv --hist h.csv --kde k.csv",
            "strata-audit curve --input a.npy --tokens 0,5,9 --out c.csv",
            "strata-audit curve --ladders r.ladders --tokens 0",
            "strata-audit classify --input a.npy --cap 1500 --max-segments 3 --min-segment-len 10 --penalty 0.5 --slope-tol 0.3 --min-count 4",
            "strata-audit synth realization --slopes 1,3 --scales 0.693,2.079 --n 10000 --seed 7 --out r",
            "strata-audit synth realization --slopes 2 --scales -0.5 --n 100 --seed 1 --anchors 3,4 --out r",
            "strata-audit synth bundle --base 2 --fiber 1 --eps 0.05 --extent 1 --n 8000 --seed 3 --out b.npy",
            "strata-audit synth ball --dim 8 --n 4000 --seed 1 --out ball.npy",
            "strata-audit traj --dims d.csv --meta m.jsonl --theta 2.5 --tag coin_collected --out t.json",
            "strata-audit check --suite synth --report r.json",
        ] {
            round_trip(line);
        }
    }

    #[test]
    fn window_defaults_follow_mode() {
        let cfg = RunConfig::try_parse_from(["x", "dims", "--input", "a.npy", "--mode", "radius"]).unwrap();
        let Command::Dims(d) = cfg.command else { panic!() };
        assert_eq!(d.window_spec(), "40:60");
    }

    #[test]
    fn source_is_exclusive() {
        assert!(RunConfig::try_parse_from(["x", "curve", "--tokens", "1"]).is_err());
        assert!(RunConfig::try_parse_from(["x", "curve", "--input", "a", "--ladders", "b", "--tokens", "1"]).is_err());
    }
}
