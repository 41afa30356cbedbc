//! Dense evaluation of the deformation field after EM.
//!
//! A query point blends the motions of its nearest labelled inliers with
//! weights `exp(-d^2 / 2r^2) * p_j`. The summed weight is reported as the
//! sample's support; samples far from every inlier are marked invalid.

use rayon::prelude::*;

use crate::config::Config;
use crate::dualquat::{blend_iter, RigidDq};
use crate::em::EmState;
use crate::error::{Error, Result};
use crate::spatial::KdTree;
use crate::types::{Dim, LabelResult, MatchSet, Point};

/// Minimum support for a sample to be valid.
pub const SUPPORT_MIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub query: Point,
    pub displaced: Point,
    pub support: f64,
    /// `support >= SUPPORT_MIN`.
    pub valid: bool,
}

impl FieldSample {
    fn unsupported(query: Point) -> Self {
        Self {
            query,
            displaced: query,
            support: 0.0,
            valid: false,
        }
    }

    pub fn displacement(&self) -> Point {
        self.displaced - self.query
    }
}

/// Read-only field built from the inliers of a converged EM state.
#[derive(Debug, Clone)]
pub struct DeformationField<Q> {
    dim: Dim,
    tree: KdTree,
    q: Vec<Q>,
    mu: Vec<f64>,
    p: Vec<f64>,
    r: f64,
    n_neighbor: usize,
}

impl<Q: RigidDq> DeformationField<Q> {
    pub fn new(state: &EmState<Q>, labels: &LabelResult, m: &MatchSet, cfg: &Config) -> Result<Self> {
        if state.len() != m.len() || labels.len() != m.len() {
            return Err(Error::InvalidArgument(format!(
                "state has {} entries, labels {}, matches {}",
                state.len(),
                labels.len(),
                m.len()
            )));
        }
        let ids: Vec<usize> = (0..m.len()).filter(|&i| labels.inlier[i]).collect();
        Ok(Self {
            dim: m.dim(),
            tree: KdTree::new(ids.iter().map(|&i| m.x()[i]).collect(), m.dim().as_usize()),
            q: ids.iter().map(|&i| state.q[i]).collect(),
            mu: ids.iter().map(|&i| state.mu[i]).collect(),
            p: ids.iter().map(|&i| state.p[i]).collect(),
            r: cfg.r,
            n_neighbor: cfg.n_neighbor,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn n_inliers(&self) -> usize {
        self.tree.len()
    }

    pub fn sample(&self, query: &Point) -> FieldSample {
        let mut pt = *query;
        if self.dim == Dim::Two {
            pt.z = 0.0;
        }
        let nbrs = self.tree.nearest(&pt, self.n_neighbor);
        let denom = 2.0 * self.r * self.r;
        let weights: Vec<(f64, usize)> = nbrs
            .iter()
            .map(|nb| ((-nb.dist2 / denom).exp() * self.p[nb.index], nb.index))
            .collect();
        let support: f64 = weights.iter().map(|w| w.0).sum();
        if !(support > 0.0) {
            return FieldSample::unsupported(pt);
        }
        let Ok(q) = blend_iter(weights.iter().map(|&(w, j)| (w, &self.q[j]))) else {
            return FieldSample::unsupported(pt);
        };
        let mu = weights.iter().map(|&(w, j)| w * self.mu[j]).sum::<f64>() / support;
        FieldSample {
            query: pt,
            displaced: q.apply(mu, &pt),
            support,
            valid: support >= SUPPORT_MIN,
        }
    }

    pub fn query(&self, pts: &[Point]) -> Vec<FieldSample> {
        pts.par_iter().map(|p| self.sample(p)).collect()
    }

    pub fn grid(&self, bounds: &Bounds, step: f64) -> Result<Grid> {
        let (shape, pts) = bounds.lattice(self.dim, step)?;
        Ok(Grid {
            shape,
            samples: self.query(&pts),
        })
    }
}

/// Axis-aligned box. In 2D the z range is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// `[0, width] x [0, height]`.
    pub fn planar(width: f64, height: f64) -> Self {
        Self::new(Point::zeros(), Point::new(width, height, 0.0))
    }

    /// Tight box around `pts`.
    pub fn around(pts: &[Point]) -> Self {
        let mut min = Point::repeat(f64::INFINITY);
        let mut max = Point::repeat(f64::NEG_INFINITY);
        for p in pts {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    /// Lattice `min + k * step` per axis while `<= max`; x varies fastest.
    pub fn lattice(&self, dim: Dim, step: f64) -> Result<(Vec<usize>, Vec<Point>)> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidArgument(format!("grid step must be positive, got {step}")));
        }
        let d = dim.as_usize();
        let mut shape = Vec::with_capacity(d);
        for k in 0..d {
            let extent = self.max[k] - self.min[k];
            if !(extent.is_finite() && extent >= 0.0) {
                return Err(Error::InvalidArgument("empty grid bounds".into()));
            }
            // Tolerance keeps an exactly representable max on the lattice.
            let count = (extent / step + 1e-9).floor() as usize + 1;
            shape.push(count);
        }
        let total: usize = shape.iter().product();
        let mut pts = Vec::with_capacity(total);
        let nz = if d == 3 { shape[2] } else { 1 };
        for iz in 0..nz {
            for iy in 0..shape[1] {
                for ix in 0..shape[0] {
                    let z = if d == 3 { self.min.z + iz as f64 * step } else { 0.0 };
                    pts.push(Point::new(
                        self.min.x + ix as f64 * step,
                        self.min.y + iy as f64 * step,
                        z,
                    ));
                }
            }
        }
        Ok((shape, pts))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Samples per axis, x first.
    pub shape: Vec<usize>,
    pub samples: Vec<FieldSample>,
}

pub fn query_field<Q: RigidDq>(
    state: &EmState<Q>,
    labels: &LabelResult,
    m: &MatchSet,
    pts: &[Point],
    cfg: &Config,
) -> Result<Vec<FieldSample>> {
    Ok(DeformationField::new(state, labels, m, cfg)?.query(pts))
}

pub fn grid_field<Q: RigidDq>(
    state: &EmState<Q>,
    labels: &LabelResult,
    m: &MatchSet,
    bounds: &Bounds,
    step: f64,
    cfg: &Config,
) -> Result<Grid> {
    DeformationField::new(state, labels, m, cfg)?.grid(bounds, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualquat::PlanarDualQuat;
    use crate::em::run_em;
    use crate::ransac::ransac_run;
    use crate::types::RigidTransform;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Fitted = (MatchSet, LabelResult, EmState<PlanarDualQuat>, Config);

    fn fit(t: &RigidTransform, n: usize, outlier_every: usize, seed: u64) -> Fitted {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pt = || Point::new(rng.random_range(0.0..800.0), rng.random_range(0.0..600.0), 0.0);
        let x: Vec<Point> = (0..n).map(|_| pt()).collect();
        let y = x
            .iter()
            .enumerate()
            .map(|(i, p)| if outlier_every > 0 && i % outlier_every == 0 { pt() } else { t.apply(p) })
            .collect();
        let m = MatchSet::new(Dim::Two, x, y).unwrap();
        let cfg = Config::default_2d();
        let out = ransac_run(&m, &cfg).unwrap();
        let (labels, state, _) = run_em::<PlanarDualQuat>(&m, &out, &cfg).unwrap();
        (m, labels, state, cfg)
    }

    #[test]
    fn lattice_shapes() {
        let (shape, pts) = Bounds::planar(800.0, 600.0).lattice(Dim::Two, 50.0).unwrap();
        assert_eq!(shape, vec![17, 13]);
        assert_eq!(pts.len(), 221);
        assert_eq!(pts[16], Point::new(800.0, 0.0, 0.0));
        assert_eq!(pts[220], Point::new(800.0, 600.0, 0.0));
        let b = Bounds::new(Point::new(5.0, 7.0, 0.0), Point::new(10.0, 9.0, 0.0));
        let (shape, pts) = b.lattice(Dim::Two, 100.0).unwrap();
        assert_eq!(shape, vec![1, 1]);
        assert_eq!(pts, vec![Point::new(5.0, 7.0, 0.0)]);
        let (shape, _) = Bounds::new(Point::zeros(), Point::new(1.0, 1.0, 1.0)).lattice(Dim::Three, 0.5).unwrap();
        assert_eq!(shape, vec![3, 3, 3]);
        assert!(Bounds::planar(-1.0, 5.0).lattice(Dim::Two, 1.0).is_err());
        assert!(Bounds::planar(1.0, 5.0).lattice(Dim::Two, 0.0).is_err());
        assert!(Bounds::around(&[]).lattice(Dim::Two, 1.0).is_err());
    }

    #[test]
    fn identity_scene_has_zero_displacement() {
        let (m, labels, state, cfg) = fit(&RigidTransform::identity(), 300, 0, 1);
        assert_eq!(labels.n_inliers(), 300);
        let grid = grid_field(&state, &labels, &m, &Bounds::planar(800.0, 600.0), 50.0, &cfg).unwrap();
        for s in &grid.samples {
            assert!(s.valid);
            assert!(s.displacement().norm() < 1e-9);
        }
    }

    #[test]
    fn rigid_scene_matches_matrix_oracle() {
        let t = RigidTransform::planar(0.25, -20.0, 15.0, 1.1).unwrap();
        let (m, labels, state, cfg) = fit(&t, 400, 0, 2);
        let grid = grid_field(&state, &labels, &m, &Bounds::planar(800.0, 600.0), 50.0, &cfg).unwrap();
        let mut n_valid = 0;
        for s in grid.samples.iter().filter(|s| s.valid) {
            n_valid += 1;
            let oracle = t.scale() * (t.rotation() * s.query + t.translation());
            assert!((s.displaced - oracle).norm() < 1e-6, "{:?}", s);
        }
        assert_eq!(n_valid, 221);
    }

    #[test]
    fn inlier_queries_reproduce_targets() {
        let t = RigidTransform::planar(-0.1, 4.0, 9.0, 1.0).unwrap();
        let (m, labels, state, cfg) = fit(&t, 300, 4, 3);
        let inliers: Vec<usize> = (0..m.len()).filter(|&i| labels.inlier[i]).collect();
        let pts: Vec<Point> = inliers.iter().map(|&i| m.x()[i]).collect();
        let samples = query_field(&state, &labels, &m, &pts, &cfg).unwrap();
        for (s, &i) in samples.iter().zip(&inliers) {
            assert!(s.valid);
            assert!((s.displaced - m.y()[i]).norm() < cfg.h);
        }
    }

    #[test]
    fn far_queries_are_invalid() {
        let (m, labels, state, cfg) = fit(&RigidTransform::identity(), 100, 0, 4);
        let far = Point::new(800.0 + 10.0 * cfg.r, 600.0 + 10.0 * cfg.r, 0.0);
        let s = query_field(&state, &labels, &m, &[far], &cfg).unwrap()[0];
        assert!(!s.valid);
        assert!(s.support < SUPPORT_MIN);
    }

    #[test]
    fn no_inliers_gives_invalid_samples() {
        let (m, mut labels, state, cfg) = fit(&RigidTransform::identity(), 50, 0, 5);
        labels.inlier = vec![false; 50];
        let s = query_field(&state, &labels, &m, &[Point::new(1.0, 1.0, 0.0)], &cfg).unwrap();
        assert_eq!(s[0], FieldSample::unsupported(Point::new(1.0, 1.0, 0.0)));
    }

    #[test]
    fn field_is_continuous() {
        let t = RigidTransform::planar(0.3, 0.0, 0.0, 1.0).unwrap();
        let (m, labels, state, cfg) = fit(&t, 300, 3, 6);
        let field = DeformationField::new(&state, &labels, &m, &cfg).unwrap();
        let base = Point::new(400.0, 300.0, 0.0);
        let mut prev = f64::INFINITY;
        for delta in [1.0, 1e-2, 1e-4, 1e-6] {
            let a = field.sample(&base);
            let b = field.sample(&(base + Point::new(delta, 0.0, 0.0)));
            let diff = (a.displaced - b.displaced).norm();
            assert!(diff <= 2.0 * delta, "{delta}: {diff}");
            assert!(diff <= prev);
            prev = diff;
        }
    }

    #[test]
    fn dropping_a_match_only_changes_its_neighborhood() {
        let t = RigidTransform::planar(0.05, 3.0, 3.0, 1.0).unwrap();
        let (m, labels, state, cfg) = fit(&t, 400, 0, 7);
        let field = DeformationField::new(&state, &labels, &m, &cfg).unwrap();
        let j = 17;
        let mut dropped = state.clone();
        dropped.p[j] = 0.0;
        let field2 = DeformationField::new(&dropped, &labels, &m, &cfg).unwrap();
        let (_, pts) = Bounds::planar(800.0, 600.0).lattice(Dim::Two, 25.0).unwrap();
        let tree = KdTree::new(m.x().to_vec(), 2);
        for p in &pts {
            let uses_j = tree.nearest(p, cfg.n_neighbor).iter().any(|nb| nb.index == j);
            let (a, b) = (field.sample(p), field2.sample(p));
            if !uses_j {
                assert_eq!(a, b);
            }
        }
    }
}
