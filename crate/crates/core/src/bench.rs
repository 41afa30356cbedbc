//! Accuracy sweeps and timing harness over synthetic scenes.

use std::time::{Duration, Instant};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::field::Bounds;
use crate::metrics::{compute_metrics, Metrics};
use crate::pipeline::filter;
use crate::synth::{generate, generate_repeating, RepeatSpec, SynthSpec};
use crate::types::Dim;

/// Means over seeds for one method.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub mean_errors: f64,
    pub mean_fscore: f64,
    pub min_fscore: f64,
    pub mean_recall: f64,
    pub mean_precision: f64,
}

impl Summary {
    pub fn of(runs: &[Metrics]) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&Metrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        Self {
            mean_errors: mean(&|m| m.n_errors as f64),
            mean_fscore: mean(&|m| m.fscore),
            min_fscore: runs.iter().map(|m| m.fscore).fold(f64::INFINITY, f64::min),
            mean_recall: mean(&|m| m.recall),
            mean_precision: mean(&|m| m.precision),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub outlier_ratio: f64,
    pub n: usize,
    pub seeds: usize,
    /// Labels straight from hypothesis extraction.
    pub r1p: Summary,
    /// Labels after EM refinement.
    pub emdq: Summary,
}

/// Score both stages on `seeds` scenes per outlier ratio.
pub fn outlier_sweep(base: &SynthSpec, ratios: &[f64], seeds: usize, sparse: bool) -> Result<Vec<SweepRow>> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut r1p = Vec::with_capacity(seeds);
        let mut emdq = Vec::with_capacity(seeds);
        for seed in 0..seeds as u64 {
            let spec = SynthSpec {
                outlier_ratio: ratio,
                seed: base.seed.wrapping_add(seed),
                ..base.clone()
            };
            let (m, gt) = generate(&spec)?;
            let cfg = Config::for_matches(&m)?.with_seed(seed);
            let out = filter(&m, &cfg, sparse)?;
            r1p.push(compute_metrics(&out.ransac.labels().inlier, &gt)?);
            emdq.push(compute_metrics(&out.labels.inlier, &gt)?);
        }
        rows.push(SweepRow {
            outlier_ratio: ratio,
            n: base.n,
            seeds,
            r1p: Summary::of(&r1p),
            emdq: Summary::of(&emdq),
        });
    }
    Ok(rows)
}

/// Precision of both stages on a scene with coherent wrong patches.
pub fn repeating_pattern(spec: &RepeatSpec) -> Result<(Metrics, Metrics)> {
    let scene = generate_repeating(spec)?;
    let cfg = Config::for_matches(&scene.matches)?.with_seed(spec.base.seed);
    let out = filter(&scene.matches, &cfg, false)?;
    Ok((
        compute_metrics(&out.ransac.labels().inlier, &scene.gt)?,
        compute_metrics(&out.labels.inlier, &scene.gt)?,
    ))
}

pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "outliers     n  seeds  r1p_errors  r1p_f   emdq_errors  emdq_f  emdq_recall  emdq_precision\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{:>7.0}%  {:>5}  {:>5}  {:>10.1}  {:.4}  {:>11.1}  {:.4}  {:>11.4}  {:>14.4}\n",
            r.outlier_ratio * 100.0,
            r.n,
            r.seeds,
            r.r1p.mean_errors,
            r.r1p.mean_fscore,
            r.emdq.mean_errors,
            r.emdq.mean_fscore,
            r.emdq.mean_recall,
            r.emdq.mean_precision,
        ));
    }
    s
}

pub fn median(mut xs: Vec<Duration>) -> Duration {
    if xs.is_empty() {
        return Duration::ZERO;
    }
    xs.sort_unstable();
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub outlier_ratio: f64,
    pub runs: usize,
    /// Median of hypothesis extraction plus EM.
    pub filter: Duration,
    /// Median of field evaluation on the grid.
    pub grid: Duration,
    pub grid_shape: Vec<usize>,
}

/// Median timings on a single worker thread.
pub fn runtime(sizes: &[usize], outlier_ratio: f64, runs: usize, grid_step: f64) -> Result<Vec<TimingRow>> {
    if runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| {
        let mut rows = Vec::with_capacity(sizes.len());
        for &n in sizes {
            let spec = SynthSpec::planar(n, outlier_ratio, 0);
            let (m, _) = generate(&spec)?;
            let cfg = Config::for_matches(&m)?;
            let mut filter_times = Vec::with_capacity(runs);
            let mut grid_times = Vec::with_capacity(runs);
            let mut shape = Vec::new();
            for _ in 0..runs {
                let t0 = Instant::now();
                let out = filter(&m, &cfg, false)?;
                filter_times.push(t0.elapsed());
                let t1 = Instant::now();
                let grid = out.field(&m, &cfg)?.grid(&spec.bounds, grid_step)?;
                grid_times.push(t1.elapsed());
                shape = grid.shape;
            }
            rows.push(TimingRow {
                n,
                outlier_ratio,
                runs,
                filter: median(filter_times),
                grid: median(grid_times),
                grid_shape: shape,
            });
        }
        Ok(rows)
    })
}

pub fn format_timing(rows: &[TimingRow]) -> String {
    let mut s = String::from("    n  outliers  runs  filter_ms  grid_ms  grid\n");
    for r in rows {
        let shape: Vec<String> = r.grid_shape.iter().map(|k| k.to_string()).collect();
        s.push_str(&format!(
            "{:>5}  {:>7.0}%  {:>4}  {:>9.3}  {:>7.3}  {}\n",
            r.n,
            r.outlier_ratio * 100.0,
            r.runs,
            r.filter.as_secs_f64() * 1e3,
            r.grid.as_secs_f64() * 1e3,
            shape.join("x"),
        ));
    }
    s
}

/// Default base scene for sweeps of the given dimension.
pub fn base_spec(dim: Dim, n: usize) -> SynthSpec {
    match dim {
        Dim::Two => SynthSpec::planar(n, 0.0, 0),
        Dim::Three => SynthSpec::spatial(n, 0.0, 0),
    }
}

pub fn default_bounds(dim: Dim) -> Bounds {
    base_spec(dim, 1).bounds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        let ms = |v: &[u64]| v.iter().map(|&x| Duration::from_millis(x)).collect::<Vec<_>>();
        assert_eq!(median(ms(&[5, 1, 3])), Duration::from_millis(3));
        assert_eq!(median(ms(&[4, 1, 3, 2])), Duration::from_micros(2500));
        assert_eq!(median(Vec::new()), Duration::ZERO);
    }

    #[test]
    fn sweep_emits_one_row_per_ratio() {
        let rows = outlier_sweep(&base_spec(Dim::Two, 300), &[0.3, 0.5, 0.7, 0.85], 1, false).unwrap();
        assert_eq!(rows.len(), 4);
        let table = format_sweep(&rows);
        assert_eq!(table.lines().count(), 5);
    }

    #[test]
    fn timing_rows_have_grid_shape() {
        let rows = runtime(&[200], 0.5, 2, 50.0).unwrap();
        assert_eq!(rows[0].grid_shape, vec![17, 13]);
        assert!(rows[0].filter > Duration::ZERO);
    }
}
