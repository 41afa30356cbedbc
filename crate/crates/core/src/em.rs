//! Expectation-maximization over a dual-quaternion deformation field.
//!
//! Every match `i` carries a scaled rigid motion `g_i = (q_i, mu_i)` with
//! `mu_i q_i(x_i) = y_i`. The field value at `x_i` blends the motions of
//! the neighbouring matches, weighted by spatial proximity and by the
//! neighbours' inlier posteriors. Matches whose targets disagree with the
//! blended field lose posterior mass, and with it their influence on the
//! field around them.
//!
//! Each iteration reads the previous iteration's state and writes a fresh
//! one, so the per-match loops run in parallel without changing results.

use rayon::prelude::*;

use crate::config::Config;
use crate::dualquat::{blend_iter, RigidDq};
use crate::error::{Error, Result};
use crate::ransac::RansacOutcome;
use crate::spatial::KdTree;
use crate::types::{LabelResult, MatchSet, Point};

/// Neighbour lists with their fixed distance weights. The first entry of
/// every list is the match itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }
}

/// Larger of the two Gaussian proximities, in source and in target space.
pub fn distance_weight(xi: &Point, xj: &Point, yi: &Point, yj: &Point, r: f64) -> f64 {
    let denom = 2.0 * r * r;
    let wy = (-(yi - yj).norm_squared() / denom).exp();
    let wx = (-(xi - xj).norm_squared() / denom).exp();
    wy.max(wx)
}

/// Self plus the `n_neighbor` nearest matches by source coordinate.
pub fn build_neighbors(m: &MatchSet, cfg: &Config) -> NeighborGraph {
    let n = m.len();
    let k = cfg.n_neighbor.min(n.saturating_sub(1));
    let tree = KdTree::new(m.x().to_vec(), m.dim().as_usize());
    let lists: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut ids = Vec::with_capacity(k + 1);
            ids.push(i);
            ids.extend(
                tree.nearest(&m.x()[i], k + 1)
                    .into_iter()
                    .map(|nb| nb.index)
                    .filter(|&j| j != i)
                    .take(k),
            );
            let w = ids
                .iter()
                .map(|&j| distance_weight(&m.x()[i], &m.x()[j], &m.y()[i], &m.y()[j], cfg.r))
                .collect();
            (ids, w)
        })
        .collect();
    let (neighbors, weights) = lists.into_iter().unzip();
    NeighborGraph { neighbors, weights }
}

#[derive(Debug, Clone)]
pub struct EmState<Q> {
    pub q: Vec<Q>,
    pub mu: Vec<f64>,
    /// Inlier posteriors. Before the first E-step these hold unnormalized
    /// seeding weights (the support of the seeding hypothesis).
    pub p: Vec<f64>,
    pub sigma: f64,
    pub gamma: f64,
    pub graph: NeighborGraph,
    /// Field value `f(x_i)` from the latest M-step.
    pub field_at_x: Vec<Point>,
    /// Matches whose neighbourhood carried no weight in the latest M-step.
    pub isolated: Vec<bool>,
}

impl<Q: RigidDq> EmState<Q> {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn residual(&self, m: &MatchSet, i: usize) -> f64 {
        (m.y()[i] - self.field_at_x[i]).norm()
    }
}

/// Seed per-match motions from the hypotheses: each covered match takes the
/// transform of the largest hypothesis containing it and a seeding weight
/// equal to that hypothesis's support.
pub fn init_from_hypotheses<Q: RigidDq>(
    m: &MatchSet,
    out: &RansacOutcome,
    cfg: &Config,
) -> Result<EmState<Q>> {
    let n = m.len();
    if out.n() != n {
        return Err(Error::InvalidArgument(format!(
            "outcome covers {} matches, match set has {n}",
            out.n()
        )));
    }
    let mut order: Vec<usize> = (0..out.hypotheses.len()).collect();
    order.sort_by(|&a, &b| out.hypotheses[b].support.cmp(&out.hypotheses[a].support));

    let mut q = vec![Q::identity(); n];
    let mut mu = vec![1.0; n];
    let mut p = vec![0.0; n];
    let mut assigned = vec![false; n];
    let (mut sq_sum, mut n_covered) = (0.0, 0usize);
    for h in order.iter().map(|&k| &out.hypotheses[k]) {
        let t = &h.transform;
        let dq = Q::from_transform(t.rotation(), t.translation())?;
        for &i in &h.inliers {
            if assigned[i] {
                continue;
            }
            assigned[i] = true;
            q[i] = dq;
            mu[i] = t.scale();
            p[i] = h.support as f64;
            sq_sum += (t.apply(&m.x()[i]) - m.y()[i]).norm_squared();
            n_covered += 1;
        }
    }
    let rms = if n_covered > 0 { (sq_sum / n_covered as f64).sqrt() } else { 0.0 };
    let mut state = EmState {
        q,
        mu,
        p,
        sigma: rms.max(cfg.h / 10.0),
        gamma: out.gamma.clamp(0.05, 0.95),
        graph: build_neighbors(m, cfg),
        field_at_x: vec![Point::zeros(); n],
        isolated: vec![false; n],
    };
    refresh_field(&mut state, m);
    Ok(state)
}

struct Blended<Q> {
    q: Q,
    mu: f64,
    field: Point,
}

fn blend_at<Q: RigidDq>(state: &EmState<Q>, m: &MatchSet, i: usize) -> Option<Blended<Q>> {
    let ids = state.graph.neighbors(i);
    let dist_w = state.graph.weights(i);
    let weight = |k: usize| dist_w[k] * state.p[ids[k]];
    let total: f64 = (0..ids.len()).map(weight).sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let q = blend_iter((0..ids.len()).map(|k| (weight(k), &state.q[ids[k]]))).ok()?;
    let mu = (0..ids.len()).map(|k| weight(k) * state.mu[ids[k]]).sum::<f64>() / total;
    Some(Blended {
        q,
        mu,
        field: q.apply(mu, &m.x()[i]),
    })
}

/// Re-blend `f(x_i)` from the current motions and weights without touching
/// the motions themselves.
pub fn refresh_field<Q: RigidDq>(state: &mut EmState<Q>, m: &MatchSet) {
    let n = state.len();
    let blended: Vec<Option<Blended<Q>>> =
        (0..n).into_par_iter().map(|i| blend_at(state, m, i)).collect();
    for (i, b) in blended.into_iter().enumerate() {
        match b {
            Some(b) => {
                state.field_at_x[i] = b.field;
                state.isolated[i] = false;
            }
            None => {
                state.field_at_x[i] = state.q[i].apply(state.mu[i], &m.x()[i]);
                state.isolated[i] = true;
            }
        }
    }
}

/// Blend the field at every match, update `sigma`, then pull each `g_i`
/// onto the blended motion plus the translation that restores
/// `mu_i q_i(x_i) = y_i`.
pub fn m_step<Q: RigidDq>(state: &mut EmState<Q>, m: &MatchSet, cfg: &Config) {
    let n = state.len();
    let blended: Vec<Option<Blended<Q>>> =
        (0..n).into_par_iter().map(|i| blend_at(state, m, i)).collect();

    let (mut num, mut den) = (0.0, 0.0);
    for (i, b) in blended.iter().enumerate() {
        if let Some(b) = b {
            let r2 = (m.y()[i] - b.field).norm_squared();
            num += state.p[i] * r2;
            den += state.p[i];
        }
    }
    if den > 0.0 {
        state.sigma = (num / den).sqrt();
    }
    state.sigma = state.sigma.max(cfg.sigma_floor());

    for (i, b) in blended.into_iter().enumerate() {
        match b {
            Some(b) => {
                let correction = Q::from_translation(&((m.y()[i] - b.field) / b.mu));
                state.q[i] = correction.multiply(&b.q);
                state.mu[i] = b.mu;
                state.field_at_x[i] = b.field;
                state.isolated[i] = false;
            }
            None => state.isolated[i] = true,
        }
    }
}

/// Posterior of the inlier class for a squared residual.
pub fn posterior(residual2: f64, sigma: f64, gamma: f64, a: f64) -> f64 {
    let g = (-residual2 / (2.0 * sigma * sigma)).exp();
    let outlier = 2.0 * std::f64::consts::PI * sigma * sigma * (1.0 - gamma) / gamma * a;
    g / (g + outlier)
}

/// Recompute posteriors from the current field. Returns the mean absolute
/// change.
pub fn e_step<Q: RigidDq>(state: &mut EmState<Q>, m: &MatchSet, cfg: &Config) -> f64 {
    let n = state.len();
    let st = &*state;
    let fresh: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if st.isolated[i] {
                0.0
            } else {
                let r2 = (m.y()[i] - st.field_at_x[i]).norm_squared();
                posterior(r2, st.sigma, st.gamma, cfg.a)
            }
        })
        .collect();
    let delta = fresh.iter().zip(&state.p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
    state.p = fresh;
    delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmReport {
    pub iterations: usize,
    pub converged: bool,
    /// Mean absolute posterior change after each iteration.
    pub delta_trace: Vec<f64>,
    pub sigma_trace: Vec<f64>,
}

/// Full refinement. Each iteration scores the current field (E-step) and
/// stops once the mean posterior change falls below `theta`; otherwise the
/// field, `sigma` and the motions are re-estimated (M-step). The seeding
/// weights therefore only shape the initial field. Inliers need both
/// `p > p_min` and residual `< H`.
pub fn run_em<Q: RigidDq>(
    m: &MatchSet,
    out: &RansacOutcome,
    cfg: &Config,
) -> Result<(LabelResult, EmState<Q>, EmReport)> {
    cfg.validate()?;
    let mut state = init_from_hypotheses::<Q>(m, out, cfg)?;
    let mut report = EmReport {
        iterations: 0,
        converged: false,
        delta_trace: Vec::new(),
        sigma_trace: Vec::new(),
    };
    for _ in 0..cfg.max_em_iters {
        let delta = e_step(&mut state, m, cfg);
        report.iterations += 1;
        report.delta_trace.push(delta);
        report.sigma_trace.push(state.sigma);
        if delta < cfg.theta {
            report.converged = true;
            break;
        }
        m_step(&mut state, m, cfg);
    }
    Ok((labels_from_state(&state, m, cfg), state, report))
}

pub fn labels_from_state<Q: RigidDq>(state: &EmState<Q>, m: &MatchSet, cfg: &Config) -> LabelResult {
    let residual: Vec<f64> = (0..state.len()).map(|i| state.residual(m, i)).collect();
    let inlier = residual
        .iter()
        .zip(&state.p)
        .map(|(&r, &p)| p > cfg.p_min && r < cfg.h)
        .collect();
    LabelResult {
        inlier,
        posterior: state.p.clone(),
        residual,
    }
}
