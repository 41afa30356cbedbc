//! Synthetic match sets with known labels.
//!
//! Inlier targets follow a smooth non-rigid field obtained by blending a few
//! anchored similarity transforms with Gaussian distance weights. Outlier
//! targets are uniform in the bounds and never closer than
//! `min_outlier_offset` to the point the field would have produced.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::seq::index::sample;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dualquat::{blend, DualQuat, RigidDq};
use crate::error::{Error, Result};
use crate::field::Bounds;
use crate::types::{rotation_z, Dim, MatchSet, Point, RigidTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub dim: Dim,
    /// Fraction of outliers, in `[0, 1)`.
    pub outlier_ratio: f64,
    /// Number of local rigid motions blended into the field.
    pub n_anchors: usize,
    /// Largest anchor rotation angle, radians.
    pub max_rotation: f64,
    /// Anchor scales are drawn from `1 +- max_scale_jitter`.
    pub max_scale_jitter: f64,
    /// Largest anchor translation per axis.
    pub max_translation: f64,
    /// Per-coordinate Gaussian noise on inlier targets.
    pub noise_sigma: f64,
    pub bounds: Bounds,
    /// Gaussian radius of the anchor blend. `None` uses the anchor spacing.
    pub blend_radius: Option<f64>,
    pub min_outlier_offset: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 800 x 600 pixel scene with three anchors.
    pub fn planar(n: usize, outlier_ratio: f64, seed: u64) -> Self {
        Self {
            n,
            dim: Dim::Two,
            outlier_ratio,
            n_anchors: 3,
            max_rotation: 0.35,
            max_scale_jitter: 0.1,
            max_translation: 40.0,
            noise_sigma: 2.0,
            bounds: Bounds::planar(800.0, 600.0),
            blend_radius: None,
            min_outlier_offset: 10.0,
            seed,
        }
    }

    /// Cube with 0.1 sides, coordinates in metres.
    pub fn spatial(n: usize, outlier_ratio: f64, seed: u64) -> Self {
        Self {
            n,
            dim: Dim::Three,
            outlier_ratio,
            n_anchors: 3,
            max_rotation: 0.35,
            max_scale_jitter: 0.1,
            max_translation: 0.005,
            noise_sigma: 2.5e-4,
            bounds: Bounds::new(Point::zeros(), Point::repeat(0.1)),
            blend_radius: None,
            min_outlier_offset: 0.0025,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return bad("outlier_ratio must lie in [0, 1)");
        }
        if self.n_anchors == 0 {
            return bad("n_anchors must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if !(self.max_scale_jitter >= 0.0 && self.max_scale_jitter < 1.0) {
            return bad("max_scale_jitter must lie in [0, 1)");
        }
        if !(self.max_rotation >= 0.0 && self.max_translation >= 0.0 && self.min_outlier_offset >= 0.0) {
            return bad("rotation, translation and outlier offset must be non-negative");
        }
        if self.blend_radius.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return bad("blend_radius must be positive");
        }
        for k in 0..self.dim.as_usize() {
            let e = self.bounds.max[k] - self.bounds.min[k];
            if !(e > 0.0 && e.is_finite()) {
                return bad("bounds must have positive extent");
            }
        }
        Ok(())
    }

    fn extent(&self, k: usize) -> f64 {
        self.bounds.max[k] - self.bounds.min[k]
    }

    fn longest_axis(&self) -> usize {
        (0..self.dim.as_usize())
            .max_by(|&a, &b| self.extent(a).total_cmp(&self.extent(b)).then(b.cmp(&a)))
            .unwrap_or(0)
    }
}

/// One anchored similarity transform of the ground-truth field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub center: Point,
    pub transform: RigidTransform,
}

/// Generated scene with everything the oracle knows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub matches: MatchSet,
    pub gt: Vec<bool>,
    /// Noise-free field value at every `x_i`.
    pub truth: Vec<Point>,
    pub anchors: Vec<Anchor>,
    pub blend_radius: f64,
}

impl Scene {
    /// Ground-truth field at an arbitrary point.
    pub fn field_at(&self, p: &Point) -> Point {
        ground_truth(&self.anchors, self.blend_radius, p)
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, b: &Bounds, dim: Dim) -> Point {
    let mut p = Point::zeros();
    for k in 0..dim.as_usize() {
        p[k] = rng.random_range(b.min[k]..=b.max[k]);
    }
    p
}

fn draw_anchors(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Anchor>> {
    let d = spec.dim.as_usize();
    let axis = spec.longest_axis();
    let mid = (spec.bounds.min + spec.bounds.max) / 2.0;
    let mut anchors = Vec::with_capacity(spec.n_anchors);
    for k in 0..spec.n_anchors {
        let mut center = mid;
        center[axis] = spec.bounds.min[axis] + (k as f64 + 0.5) / spec.n_anchors as f64 * spec.extent(axis);
        // Alternating signs make neighbouring anchors disagree.
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let angle = sign * rng.random_range(0.5..=1.0) * spec.max_rotation;
        let rotation = match spec.dim {
            Dim::Two => rotation_z(angle),
            Dim::Three => {
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                let v = Vector3::from_fn(|_, _| normal.sample(rng));
                let axis = Unit::try_new(v, 1e-9).unwrap_or(Vector3::z_axis());
                *Rotation3::from_axis_angle(&axis, angle).matrix()
            }
        };
        let scale = 1.0 + rng.random_range(-1.0..=1.0) * spec.max_scale_jitter;
        let mut shift = Point::zeros();
        for c in 0..d {
            shift[c] = rng.random_range(-1.0..=1.0) * spec.max_translation;
        }
        // y = c + mu R (p - c) + shift, written as mu (R p + t).
        let translation = (center + shift) / scale - rotation * center;
        anchors.push(Anchor {
            center,
            transform: RigidTransform::new(rotation, translation, scale)?,
        });
    }
    Ok(anchors)
}

fn ground_truth(anchors: &[Anchor], radius: f64, p: &Point) -> Point {
    let logs: Vec<f64> = anchors
        .iter()
        .map(|a| -(p - a.center).norm_squared() / (2.0 * radius * radius))
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let dqs: Vec<(f64, DualQuat)> = anchors
        .iter()
        .zip(&weights)
        .map(|(a, &w)| {
            let t = &a.transform;
            (w, DualQuat::from_transform(t.rotation(), t.translation()).expect("valid rotation"))
        })
        .collect();
    let q = blend(&dqs).expect("positive weights");
    let total: f64 = weights.iter().sum();
    let mu = anchors.iter().zip(&weights).map(|(a, w)| w * a.transform.scale()).sum::<f64>() / total;
    q.apply(mu, p)
}

pub fn generate_scene(spec: &SynthSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let anchors = draw_anchors(spec, &mut rng)?;
    let blend_radius = spec
        .blend_radius
        .unwrap_or(spec.extent(spec.longest_axis()) / spec.n_anchors as f64);

    let x: Vec<Point> = (0..spec.n).map(|_| uniform_point(&mut rng, &spec.bounds, spec.dim)).collect();
    let truth: Vec<Point> = x.iter().map(|p| ground_truth(&anchors, blend_radius, p)).collect();

    let n_out = (spec.outlier_ratio * spec.n as f64).round() as usize;
    let mut gt = vec![true; spec.n];
    for i in sample(&mut rng, spec.n, n_out) {
        gt[i] = false;
    }

    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        if gt[i] {
            let mut e = Point::zeros();
            if spec.noise_sigma > 0.0 {
                for k in 0..spec.dim.as_usize() {
                    e[k] = noise.sample(&mut rng);
                }
            }
            y.push(truth[i] + e);
        } else {
            let mut p = uniform_point(&mut rng, &spec.bounds, spec.dim);
            while (p - truth[i]).norm() < spec.min_outlier_offset {
                p = uniform_point(&mut rng, &spec.bounds, spec.dim);
            }
            y.push(p);
        }
    }
    Ok(Scene {
        matches: MatchSet::new(spec.dim, x, y)?,
        gt,
        truth,
        anchors,
        blend_radius,
    })
}

/// Matches plus ground-truth inlier flags.
pub fn generate(spec: &SynthSpec) -> Result<(MatchSet, Vec<bool>)> {
    let s = generate_scene(spec)?;
    Ok((s.matches, s.gt))
}

/// Inliers from `base` plus patches of mutually consistent wrong matches,
/// each displaced from the true field by one pattern period.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatSpec {
    pub base: SynthSpec,
    pub n_patches: usize,
    pub patch_size: usize,
    pub patch_radius: f64,
    pub period: f64,
}

impl RepeatSpec {
    pub fn planar(seed: u64) -> Self {
        Self {
            base: SynthSpec::planar(600, 0.0, seed),
            n_patches: 3,
            patch_size: 40,
            patch_radius: 120.0,
            period: 80.0,
        }
    }
}

pub fn generate_repeating(spec: &RepeatSpec) -> Result<Scene> {
    if spec.n_patches == 0 || spec.patch_size == 0 || !(spec.patch_radius > 0.0) || !(spec.period > 0.0) {
        return Err(Error::InvalidArgument("patches need a positive count, size, radius and period".into()));
    }
    let base = SynthSpec {
        outlier_ratio: 0.0,
        ..spec.base.clone()
    };
    let mut scene = generate_scene(&base)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.base.seed ^ 0x5eed_9a77_e2e5);
    let d = base.dim.as_usize();
    let mut x = scene.matches.x().to_vec();
    let mut y = scene.matches.y().to_vec();
    let b = &base.bounds;
    let inner = Bounds::new(
        b.min + Point::from_fn(|k, _| if k < d { spec.patch_radius.min((b.max[k] - b.min[k]) / 2.0) } else { 0.0 }),
        b.max - Point::from_fn(|k, _| if k < d { spec.patch_radius.min((b.max[k] - b.min[k]) / 2.0) } else { 0.0 }),
    );
    for _ in 0..spec.n_patches {
        let center = uniform_point(&mut rng, &inner, base.dim);
        let mut dir = Point::zeros();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        while dir.norm() < 1e-6 {
            for k in 0..d {
                dir[k] = normal.sample(&mut rng);
            }
        }
        let offset = dir.normalize() * spec.period;
        for _ in 0..spec.patch_size {
            let mut p;
            loop {
                p = center;
                for k in 0..d {
                    p[k] += rng.random_range(-spec.patch_radius..=spec.patch_radius);
                }
                if (p - center).norm() <= spec.patch_radius {
                    break;
                }
            }
            let t = scene.field_at(&p);
            x.push(p);
            y.push(t + offset);
            scene.truth.push(t);
            scene.gt.push(false);
        }
    }
    scene.matches = MatchSet::new(base.dim, x, y)?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, SVD};

    /// Least-squares similarity over all pairs (closed-form SVD fit).
    fn global_fit_max_residual(x: &[Point], y: &[Point]) -> f64 {
        let n = x.len() as f64;
        let cx = x.iter().sum::<Point>() / n;
        let cy = y.iter().sum::<Point>() / n;
        let mut cov = Matrix3::zeros();
        let mut var = 0.0;
        for (a, b) in x.iter().zip(y) {
            cov += (b - cy) * (a - cx).transpose();
            var += (a - cx).norm_squared();
        }
        let svd = SVD::new(cov, true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut s = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            s[(2, 2)] = -1.0;
        }
        let r = u * s * vt;
        let scale = (svd.singular_values[0] + svd.singular_values[1] + s[(2, 2)] * svd.singular_values[2]) / var;
        x.iter()
            .zip(y)
            .map(|(a, b)| (cy + scale * r * (a - cx) - b).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_anchor_is_rigid() {
        let spec = SynthSpec {
            n_anchors: 1,
            noise_sigma: 0.0,
            ..SynthSpec::planar(200, 0.0, 3)
        };
        let s = generate_scene(&spec).unwrap();
        let t = s.anchors[0].transform;
        for (a, b) in s.matches.x().iter().zip(s.matches.y()) {
            assert!((t.apply(a) - b).norm() < 1e-9);
        }
        assert!(s.gt.iter().all(|&g| g));
    }

    #[test]
    fn outlier_fraction_is_exact_and_offset_respected() {
        let s = generate_scene(&SynthSpec::planar(1000, 0.85, 4)).unwrap();
        let n_out = s.gt.iter().filter(|&&g| !g).count();
        assert!((n_out as f64 / 1000.0 - 0.85).abs() <= 0.01);
        for i in (0..1000).filter(|&i| !s.gt[i]) {
            assert!((s.matches.y()[i] - s.truth[i]).norm() >= 10.0);
        }
    }

    #[test]
    fn opposite_anchors_are_not_globally_rigid() {
        let spec = SynthSpec {
            n_anchors: 2,
            noise_sigma: 0.0,
            ..SynthSpec::planar(400, 0.0, 5)
        };
        let s = generate_scene(&spec).unwrap();
        let a = &s.anchors;
        let angle = |t: &RigidTransform| t.rotation()[(1, 0)].atan2(t.rotation()[(0, 0)]);
        assert!(angle(&a[0].transform) * angle(&a[1].transform) < 0.0);
        assert!(global_fit_max_residual(s.matches.x(), s.matches.y()) > 20.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SynthSpec::spatial(300, 0.5, 9)).unwrap();
        let b = generate(&SynthSpec::spatial(300, 0.5, 9)).unwrap();
        let c = generate(&SynthSpec::spatial(300, 0.5, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.0.dim(), Dim::Three);
    }

    #[test]
    fn spec_validation() {
        assert!(generate(&SynthSpec::planar(10, 1.0, 0)).is_err());
        assert!(generate(&SynthSpec { n_anchors: 0, ..SynthSpec::planar(10, 0.1, 0) }).is_err());
        assert!(generate(&SynthSpec::planar(0, 0.1, 0)).is_err());
    }

    #[test]
    fn repeating_patches_are_wrong_but_coherent() {
        let spec = RepeatSpec::planar(6);
        let s = generate_repeating(&spec).unwrap();
        assert_eq!(s.matches.len(), 600 + 120);
        assert_eq!(s.gt.iter().filter(|&&g| !g).count(), 120);
        for i in 600..720 {
            let off = (s.matches.y()[i] - s.truth[i]).norm();
            assert!((off - 80.0).abs() < 1e-9);
        }
    }
}
