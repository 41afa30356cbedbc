//! Re-weighted 1-point RANSAC.
//!
//! Each trial anchors a similarity transform at one control match `o` and
//! fits rotation and scale to the relative coordinates `x_i - x_o`,
//! `y_i - y_o`, down-weighting matches with large residuals over a few
//! iterations. Every trial with enough support is kept, so a non-rigid scene
//! comes out as several locally rigid hypotheses rather than one consensus.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::seq::index;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::types::{Dim, LabelResult, MatchSet, Point, RigidTransform};

/// Relative tolerance below which singular values count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TransformHypothesis {
    /// Index of the control match.
    pub control: usize,
    pub transform: RigidTransform,
    /// Matches with residual below `H`, ascending.
    pub inliers: Vec<usize>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub hypotheses: Vec<TransformHypothesis>,
    /// Union of all hypothesis inlier sets, ascending.
    pub inlier_union: Vec<usize>,
    pub gamma: f64,
    pub trials: usize,
    /// `gamma` after each trial.
    pub gamma_trace: Vec<f64>,
    /// Smallest residual of each match over the kept hypotheses
    /// (infinite when no hypothesis was kept).
    pub min_residual: Vec<f64>,
}

impl RansacOutcome {
    fn empty(n: usize) -> Self {
        Self {
            hypotheses: Vec::new(),
            inlier_union: Vec::new(),
            gamma: 0.0,
            trials: 0,
            gamma_trace: Vec::new(),
            min_residual: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.min_residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn covered(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        for &i in &self.inlier_union {
            mask[i] = true;
        }
        mask
    }

    /// Labels produced by this stage alone: covered matches are inliers.
    pub fn labels(&self) -> LabelResult {
        let inlier = self.covered();
        LabelResult {
            posterior: inlier.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            residual: self.min_residual.clone(),
            inlier,
        }
    }
}

/// Result of the re-weighting loop for one control match.
#[derive(Debug, Clone)]
pub struct ReweightFit {
    pub transform: RigidTransform,
    /// Residual of every match under the final rotation and scale.
    pub residuals: Vec<f64>,
    /// Final weights; zero for matches outside the fitting sample.
    pub weights: Vec<f64>,
}

/// Re-weighting rule `min(H / d, 1)`, with `d = 0` mapping to 1.
pub fn reweight(h: f64, d: f64) -> f64 {
    if d <= h {
        1.0
    } else {
        h / d
    }
}

/// Rotation and scale about control `o` from weighted relative coordinates.
///
/// Each relative column is multiplied by its weight; `R` comes from the SVD
/// of `Y X^T` with a reflection fix, `mu` from the ratio of Frobenius norms.
pub fn weighted_rigid_fit(m: &MatchSet, o: usize, w: &[f64]) -> Result<(Matrix3<f64>, f64)> {
    if w.len() != m.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} matches",
            w.len(),
            m.len()
        )));
    }
    if o >= m.len() {
        return Err(Error::InvalidArgument(format!("control index {o} out of range")));
    }
    fit_weighted(m, o, w.iter().copied().enumerate())
}

fn fit_weighted(
    m: &MatchSet,
    o: usize,
    weighted: impl Iterator<Item = (usize, f64)>,
) -> Result<(Matrix3<f64>, f64)> {
    let (xo, yo) = (m.x()[o], m.y()[o]);
    let mut cross = Matrix3::<f64>::zeros();
    let (mut xx, mut yy) = (0.0, 0.0);
    for (i, wi) in weighted {
        if wi == 0.0 {
            continue;
        }
        let w2 = wi * wi;
        let xr = m.x()[i] - xo;
        let yr = m.y()[i] - yo;
        cross += (yr * xr.transpose()) * w2;
        xx += w2 * xr.norm_squared();
        yy += w2 * yr.norm_squared();
    }
    let degenerate = Error::DegenerateGeometry { control: o };
    if !(xx > 0.0 && yy > 0.0) {
        return Err(degenerate);
    }
    let rotation = match m.dim() {
        Dim::Two => {
            let c = Matrix2::new(cross[(0, 0)], cross[(0, 1)], cross[(1, 0)], cross[(1, 1)]);
            let svd = c.svd(true, true);
            if svd.singular_values[0] <= RANK_TOL * (xx * yy).sqrt() {
                return Err(degenerate);
            }
            let (u, mut v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            if (u * v_t).determinant() < 0.0 {
                v_t.row_mut(1).neg_mut();
            }
            let r = u * v_t;
            Matrix3::new(r[(0, 0)], r[(0, 1)], 0.0, r[(1, 0)], r[(1, 1)], 0.0, 0.0, 0.0, 1.0)
        }
        Dim::Three => {
            let svd = cross.svd(true, true);
            let s = svd.singular_values;
            if s[0] <= 0.0 || s[1] <= RANK_TOL * s[0] {
                return Err(degenerate);
            }
            let (u, mut v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            if (u * v_t).determinant() < 0.0 {
                v_t.row_mut(2).neg_mut();
            }
            u * v_t
        }
    };
    Ok((rotation, (yy / xx).sqrt()))
}

/// `||(y_i - y_o) - mu R (x_i - x_o)||` for every match.
pub fn residuals(m: &MatchSet, o: usize, rotation: &Matrix3<f64>, mu: f64) -> Vec<f64> {
    let (xo, yo) = (m.x()[o], m.y()[o]);
    m.x()
        .iter()
        .zip(m.y())
        .map(|(x, y)| relative_residual(x, y, &xo, &yo, rotation, mu))
        .collect()
}

fn relative_residual(
    x: &Point,
    y: &Point,
    xo: &Point,
    yo: &Point,
    rotation: &Matrix3<f64>,
    mu: f64,
) -> f64 {
    ((y - yo) - rotation * (x - xo) * mu).norm()
}

/// Re-weighted fit anchored at control match `o`, using every match.
pub fn reweight_fit(m: &MatchSet, o: usize, cfg: &Config) -> Result<ReweightFit> {
    if o >= m.len() {
        return Err(Error::InvalidArgument(format!("control index {o} out of range")));
    }
    reweight_fit_on(m, o, None, cfg)
}

fn reweight_fit_on(
    m: &MatchSet,
    o: usize,
    sample: Option<&[usize]>,
    cfg: &Config,
) -> Result<ReweightFit> {
    let all: Vec<usize>;
    let sample = match sample {
        Some(s) => s,
        None => {
            all = (0..m.len()).collect();
            &all
        }
    };
    let (xo, yo) = (m.x()[o], m.y()[o]);
    let mut w = vec![1.0; sample.len()];
    let mut fit = (Matrix3::identity(), 1.0);
    for _ in 0..cfg.n_reweight_iters {
        fit = fit_weighted(m, o, sample.iter().copied().zip(w.iter().copied()))?;
        for (wi, &i) in w.iter_mut().zip(sample) {
            let d = relative_residual(&m.x()[i], &m.y()[i], &xo, &yo, &fit.0, fit.1);
            *wi = reweight(cfg.h, d);
        }
    }
    let (rotation, mu) = fit;
    let translation: Vector3<f64> = yo / mu - rotation * xo;
    let transform = RigidTransform::new(rotation, translation, mu)
        .map_err(|_| Error::DegenerateGeometry { control: o })?;
    let mut weights = vec![0.0; m.len()];
    for (&i, wi) in sample.iter().zip(&w) {
        weights[i] = *wi;
    }
    Ok(ReweightFit {
        transform,
        residuals: residuals(m, o, &rotation, mu),
        weights,
    })
}

/// Number of trials after which the search stops: once `k` exceeds this
/// value, a hidden group of `t_min` inliers among the `n (1 - gamma)`
/// uncovered matches would have been hit with probability `p`.
pub fn trial_bound(n: usize, gamma: f64, t_min: usize, p: f64) -> f64 {
    let remaining = n as f64 * (1.0 - gamma);
    if remaining <= t_min as f64 {
        return 0.0;
    }
    (1.0 - p).ln() / (1.0 - t_min as f64 / remaining).ln()
}

/// Dense variant: every trial re-weights all matches.
pub fn ransac_run(m: &MatchSet, cfg: &Config) -> Result<RansacOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool: Vec<usize> = (0..m.len()).collect();
    run(m, cfg, &pool, &mut rng)
}

/// Sparse variant: re-weighting and control sampling use a fixed random
/// sample of `n_sparse` matches; residuals are still evaluated on all.
pub fn ransac_run_sparse(m: &MatchSet, cfg: &Config) -> Result<RansacOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.sparse_count(m.len());
    let pool: Vec<usize> = if k >= m.len() {
        (0..m.len()).collect()
    } else {
        let mut s = index::sample(&mut rng, m.len(), k).into_vec();
        s.sort_unstable();
        s
    };
    run(m, cfg, &pool, &mut rng)
}

fn run(m: &MatchSet, cfg: &Config, pool: &[usize], rng: &mut ChaCha8Rng) -> Result<RansacOutcome> {
    let n = m.len();
    if n < cfg.t_min {
        return Err(Error::InvalidMatchSet(format!(
            "{n} matches is fewer than t_min = {}",
            cfg.t_min
        )));
    }
    let full = pool.len() == n;
    let sample = if full { None } else { Some(pool) };
    let max_trials = 10 * n;

    let mut out = RansacOutcome::empty(n);
    let mut covered = vec![false; n];
    let mut tried = vec![false; n];
    let mut n_covered = 0usize;
    let mut pool_covered = 0usize;

    loop {
        let candidates: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| !covered[i] && !tried[i])
            .collect();
        if candidates.is_empty() {
            break;
        }
        let o = candidates[rng.random_range(0..candidates.len())];
        tried[o] = true;
        out.trials += 1;

        match reweight_fit_on(m, o, sample, cfg) {
            Ok(fit) => {
                let inliers: Vec<usize> = (0..n).filter(|&i| fit.residuals[i] < cfg.h).collect();
                if inliers.len() >= cfg.t_min {
                    for &i in &inliers {
                        if !covered[i] {
                            covered[i] = true;
                            n_covered += 1;
                            if full || pool.binary_search(&i).is_ok() {
                                pool_covered += 1;
                            }
                        }
                    }
                    for (best, d) in out.min_residual.iter_mut().zip(&fit.residuals) {
                        *best = best.min(*d);
                    }
                    out.hypotheses.push(TransformHypothesis {
                        control: o,
                        transform: fit.transform,
                        support: inliers.len(),
                        inliers,
                    });
                }
            }
            Err(Error::DegenerateGeometry { .. }) => {}
            Err(e) => return Err(e),
        }

        out.gamma = n_covered as f64 / n as f64;
        out.gamma_trace.push(out.gamma);

        let pool_gamma = pool_covered as f64 / pool.len() as f64;
        let remaining = pool.len() - pool_covered;
        if remaining <= cfg.t_min
            || out.trials as f64 > trial_bound(pool.len(), pool_gamma, cfg.t_min, cfg.ransac_p)
            || out.trials >= max_trials
        {
            break;
        }
    }

    out.inlier_union = (0..n).filter(|&i| covered[i]).collect();
    Ok(out)
}
