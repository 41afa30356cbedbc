//! Shared domain types: match sets, similarity transforms and label results.
//!
//! Points are always stored as `Vector3<f64>`. Planar data keeps `z == 0`
//! so the same storage serves both dimensions.

use std::fmt;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn as_usize(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn from_usize(d: usize) -> Option<Dim> {
        match d {
            2 => Some(Dim::Two),
            3 => Some(Dim::Three),
            _ => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_usize())
    }
}

/// Paired point clouds `x_i -> y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    dim: Dim,
    x: Vec<Point>,
    y: Vec<Point>,
}

impl MatchSet {
    pub fn new(dim: Dim, x: Vec<Point>, y: Vec<Point>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidMatchSet(format!(
                "source has {} points but target has {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidMatchSet("no matches".into()));
        }
        for (i, p) in x.iter().chain(y.iter()).enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidMatchSet(format!(
                    "non-finite coordinate in point {}",
                    i % x.len()
                )));
            }
            if dim == Dim::Two && p.z != 0.0 {
                return Err(Error::InvalidMatchSet(format!(
                    "planar point {} has non-zero z",
                    i % x.len()
                )));
            }
        }
        Ok(Self { dim, x, y })
    }

    pub fn from_2d(x: &[[f64; 2]], y: &[[f64; 2]]) -> Result<Self> {
        let lift = |p: &[f64; 2]| Point::new(p[0], p[1], 0.0);
        Self::new(
            Dim::Two,
            x.iter().map(lift).collect(),
            y.iter().map(lift).collect(),
        )
    }

    pub fn from_3d(x: &[[f64; 3]], y: &[[f64; 3]]) -> Result<Self> {
        let lift = |p: &[f64; 3]| Point::new(p[0], p[1], p[2]);
        Self::new(
            Dim::Three,
            x.iter().map(lift).collect(),
            y.iter().map(lift).collect(),
        )
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[Point] {
        &self.x
    }

    pub fn y(&self) -> &[Point] {
        &self.y
    }

    /// New match set where both clouds go through `f`.
    pub fn map_points(&self, f: impl Fn(&Point) -> Point) -> Result<Self> {
        Self::new(
            self.dim,
            self.x.iter().map(&f).collect(),
            self.y.iter().map(&f).collect(),
        )
    }
}

/// Similarity transform `y = mu * (R x + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        check_rotation(&rotation)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidTransform(format!("scale {scale} is not positive")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Planar transform: rotation by `angle` radians about the z axis.
    pub fn planar(angle: f64, tx: f64, ty: f64, scale: f64) -> Result<Self> {
        Self::new(rotation_z(angle), Vector3::new(tx, ty, 0.0), scale)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, p: &Point) -> Point {
        (self.rotation * p + self.translation) * self.scale
    }
}

pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub(crate) fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidTransform("non-finite rotation".into()));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::InvalidTransform(format!(
            "rotation is not orthonormal (|RtR - I| = {ortho:e}, det = {det})"
        )));
    }
    Ok(())
}

/// Per-match classification.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelResult {
    pub inlier: Vec<bool>,
    pub posterior: Vec<f64>,
    pub residual: Vec<f64>,
}

impl LabelResult {
    pub fn len(&self) -> usize {
        self.inlier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inlier.is_empty()
    }

    pub fn n_inliers(&self) -> usize {
        self.inlier.iter().filter(|&&b| b).count()
    }

    pub fn all_outliers(n: usize) -> Self {
        Self {
            inlier: vec![false; n],
            posterior: vec![0.0; n],
            residual: vec![f64::INFINITY; n],
        }
    }
}

/// RMS spread of both clouds around their centroids.
pub fn scale_estimate(m: &MatchSet) -> Result<f64> {
    if m.len() < 2 {
        return Err(Error::InvalidMatchSet(
            "scale estimate needs at least two matches".into(),
        ));
    }
    let spread = |pts: &[Point]| {
        let mean = pts.iter().sum::<Point>() / pts.len() as f64;
        pts.iter().map(|p| (p - mean).norm_squared()).sum::<f64>()
    };
    let s = ((spread(m.x()) + spread(m.y())) / (2.0 * m.len() as f64)).sqrt();
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::DegenerateScale)
    }
}
