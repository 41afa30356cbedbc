//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or argument errors, 2 unreadable input or
//! configuration, 3 geometrically degenerate input.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, base_spec};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::field::Bounds;
use crate::io;
use crate::metrics::compute_metrics;
use crate::pipeline::{filter, FilterOutput};
use crate::svg;
use crate::synth::{generate, generate_repeating, RepeatSpec, SynthSpec};
use crate::types::{Dim, MatchSet, Point};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "emdq", version, about = "Remove mismatches from 2D/3D feature correspondences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every match of a match file as inlier or outlier.
    Filter(FilterArgs),
    /// Filter, then sample the deformation field on a regular grid.
    Field(FieldArgs),
    /// Write a synthetic match file with ground-truth labels.
    Synth(SynthArgs),
    /// Score a labels file against the ground truth of a match file.
    Eval(EvalArgs),
    /// Accuracy sweep over outlier ratios and runtime medians.
    Bench(BenchArgs),
}

/// Parameter overrides shared by every command that runs the filter.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Dimension the input must have.
    #[arg(long, value_parser = ["2", "3"])]
    pub dim: Option<String>,
    /// Re-weight hypotheses on a sample of matches instead of all of them.
    #[arg(long)]
    pub sparse: bool,
    /// Seed for control sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// File of `key = value` parameter lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Inlier residual threshold.
    #[arg(long = "H", value_name = "H")]
    pub h: Option<f64>,
    /// Radius of the neighbour distance kernel.
    #[arg(long)]
    pub r: Option<f64>,
    /// Outlier density.
    #[arg(long)]
    pub a: Option<f64>,
    /// Posterior threshold for inliers.
    #[arg(long = "p-min")]
    pub p_min: Option<f64>,
    /// EM convergence threshold on the mean posterior change.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Minimum support of a hypothesis.
    #[arg(long = "t-min")]
    pub t_min: Option<usize>,
    /// Neighbours blended per match.
    #[arg(long = "n-neighbor")]
    pub n_neighbor: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ParamArgs {
    fn expected_dim(&self) -> Option<Dim> {
        self.dim.as_deref().and_then(|d| d.parse().ok()).and_then(Dim::from_usize)
    }

    /// Defaults for the data, then the config file, then flags.
    pub fn config_for(&self, m: &MatchSet) -> Result<Config> {
        let mut cfg = Config::for_matches(m)?;
        if let Some(path) = &self.config {
            cfg.apply_kv(&fs::read_to_string(path)?)?;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.r {
            cfg.r = v;
        }
        if let Some(v) = self.a {
            cfg.a = v;
        }
        if let Some(v) = self.p_min {
            cfg.p_min = v;
        }
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        if let Some(v) = self.t_min {
            cfg.t_min = v;
        }
        if let Some(v) = self.n_neighbor {
            cfg.n_neighbor = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Match file.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Labels CSV to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also draw the labelled matches as SVG.
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Match file.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Field CSV to write.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Grid spacing.
    #[arg(long = "grid-step", default_value_t = 50.0)]
    pub grid_step: f64,
    /// Grid box as `min_x,min_y[,min_z],max_x,max_y[,max_z]`; defaults to the
    /// bounding box of the source points.
    #[arg(long)]
    pub bounds: Option<String>,
    /// Labels CSV to write as well.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Quiver plot of the valid samples.
    #[arg(long, value_name = "PATH")]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Match file to write.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, short, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_parser = ["2", "3"], default_value = "2")]
    pub dim: String,
    #[arg(long = "outlier-ratio", default_value_t = 0.5)]
    pub outlier_ratio: f64,
    /// Local rigid motions blended into the ground-truth field.
    #[arg(long, default_value_t = 3)]
    pub anchors: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add patches of coherent wrong matches to an outlier-free scene.
    #[arg(long)]
    pub repeating: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Match file with a ground-truth column.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Labels CSV to score.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Matches per sweep scene.
    #[arg(long, short, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_parser = ["2", "3"], default_value = "2")]
    pub dim: String,
    /// Scenes per outlier ratio.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Outlier ratios to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7,0.85")]
    pub ratios: Vec<f64>,
    /// Match counts for the runtime table.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub sizes: Vec<usize>,
    /// Timed runs per size; the median is reported.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long)]
    pub sparse: bool,
    /// Skip the runtime table.
    #[arg(long = "no-timing")]
    pub no_timing: bool,
    /// Also write the tables to this file.
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::InvalidConfig(_) => EXIT_PARSE,
        e if e.is_degenerate() => EXIT_DEGENERATE,
        _ => EXIT_FAILURE,
    }
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Filter(a) => with_threads(a.params.threads, || cmd_filter(&a)),
        Command::Field(a) => with_threads(a.params.threads, || cmd_field(&a)),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(f),
    }
}

fn parse_dim(s: &str) -> Dim {
    if s == "3" {
        Dim::Three
    } else {
        Dim::Two
    }
}

struct Filtered {
    matches: MatchSet,
    cfg: Config,
    out: FilterOutput,
}

fn load_and_filter(input: &Path, params: &ParamArgs) -> Result<Filtered> {
    let file = io::load_matches(input, params.expected_dim())?;
    let m = file.matches;
    let cfg = params.config_for(&m)?;
    let start = Instant::now();
    let out = filter(&m, &cfg, params.sparse)?;
    let elapsed = start.elapsed();
    if out.is_empty() {
        eprintln!("warning: no hypothesis reached t_min = {}; every match is labelled outlier", cfg.t_min);
    }
    println!(
        "matches {}  hypotheses {}  gamma {:.4}  em_iterations {}{}  inliers {}  time {:.2} ms",
        m.len(),
        out.ransac.hypotheses.len(),
        out.ransac.gamma,
        out.report.iterations,
        if out.report.converged { "" } else { " (not converged)" },
        out.labels.n_inliers(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(Filtered { matches: m, cfg, out })
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let f = load_and_filter(&a.input, &a.params)?;
    io::save_labels(&a.output, &f.out.labels)?;
    if let Some(path) = &a.svg {
        fs::write(path, svg::render_matches(&f.matches, &f.out.labels))?;
    }
    Ok(())
}

fn parse_bounds(text: &str, dim: Dim) -> Result<Bounds> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad bounds {text:?}")))?;
    let d = dim.as_usize();
    if vals.len() != 2 * d {
        return Err(Error::InvalidArgument(format!("bounds need {} values for {d}D data", 2 * d)));
    }
    let mut min = Point::zeros();
    let mut max = Point::zeros();
    for k in 0..d {
        min[k] = vals[k];
        max[k] = vals[d + k];
    }
    Ok(Bounds::new(min, max))
}

fn cmd_field(a: &FieldArgs) -> Result<()> {
    let f = load_and_filter(&a.input, &a.params)?;
    let dim = f.matches.dim();
    let bounds = match &a.bounds {
        Some(b) => parse_bounds(b, dim)?,
        None => Bounds::around(f.matches.x()),
    };
    let start = Instant::now();
    let grid = f.out.field(&f.matches, &f.cfg)?.grid(&bounds, a.grid_step)?;
    let elapsed = start.elapsed();
    let shape: Vec<String> = grid.shape.iter().map(|k| k.to_string()).collect();
    println!(
        "grid {}  valid {}  time {:.3} ms",
        shape.join("x"),
        grid.samples.iter().filter(|s| s.valid).count(),
        elapsed.as_secs_f64() * 1e3
    );
    io::save_field(&a.output, &grid.samples, dim)?;
    if let Some(path) = &a.labels {
        io::save_labels(path, &f.out.labels)?;
    }
    if let Some(path) = &a.svg {
        fs::write(path, svg::render_field(&grid.samples))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let dim = parse_dim(&a.dim);
    let mut spec = match dim {
        Dim::Two => SynthSpec::planar(a.n, a.outlier_ratio, a.seed),
        Dim::Three => SynthSpec::spatial(a.n, a.outlier_ratio, a.seed),
    };
    spec.n_anchors = a.anchors;
    let (m, gt) = if a.repeating {
        let s = generate_repeating(&RepeatSpec {
            base: spec,
            ..RepeatSpec::planar(a.seed)
        })?;
        (s.matches, s.gt)
    } else {
        generate(&spec)?
    };
    let units = if dim == Dim::Two { "px" } else { "m" };
    io::save_matches(&a.output, &m, Some(&gt), units)?;
    println!(
        "wrote {} matches ({} inliers) to {}",
        m.len(),
        gt.iter().filter(|&&g| g).count(),
        a.output.display()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let file = io::load_matches(&a.input, None)?;
    let gt = file
        .gt
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no ground-truth column", a.input.display())))?;
    let labels = io::load_labels(&a.labels)?;
    let met = compute_metrics(&labels.inlier, &gt)?;
    println!("n_errors {}", met.n_errors);
    println!("recall {:.6}", met.recall);
    println!("precision {:.6}", met.precision);
    println!("fscore {:.6}", met.fscore);
    if met.recall_undefined {
        eprintln!("warning: ground truth has no inliers; recall reported as 0");
    }
    if met.precision_undefined {
        eprintln!("warning: no predicted inliers; precision reported as 0");
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let dim = parse_dim(&a.dim);
    let rows = bench::outlier_sweep(&base_spec(dim, a.n), &a.ratios, a.seeds, a.sparse)?;
    let mut text = bench::format_sweep(&rows);
    if !a.no_timing {
        let timing = bench::runtime(&a.sizes, 0.5, a.runs, 50.0)?;
        text.push('\n');
        text.push_str(&bench::format_timing(&timing));
    }
    print!("{text}");
    if let Some(path) = &a.output {
        fs::write(path, &text)?;
    }
    Ok(())
}
