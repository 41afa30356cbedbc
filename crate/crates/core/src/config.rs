//! Algorithm parameters.
//!
//! Planar defaults are in pixels. For 3D input the distance-like parameters
//! are derived from the scene scale `s` (see [`scale_estimate`]) once, when
//! the configuration is built; coordinates are never rescaled.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{scale_estimate, Dim, MatchSet};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Inlier residual threshold `H`.
    pub h: f64,
    /// Minimum support for a hypothesis to be kept.
    pub t_min: usize,
    /// RANSAC confidence `p`.
    pub ransac_p: f64,
    pub n_reweight_iters: usize,
    /// Radius of the distance kernel between matches.
    pub r: f64,
    /// Outlier density.
    pub a: f64,
    pub p_min: f64,
    /// EM stops when the mean absolute posterior change drops below this.
    pub theta: f64,
    pub n_neighbor: usize,
    /// Size of the sample used for re-weighting in the sparse variant.
    /// `None` means `min(N, 200)`.
    pub n_sparse: Option<usize>,
    pub max_em_iters: usize,
    pub seed: u64,
}

pub const DEFAULT_N_SPARSE: usize = 200;

impl Default for Config {
    fn default() -> Self {
        Self::default_2d()
    }
}

impl Config {
    pub fn default_2d() -> Self {
        Self {
            h: 20.0,
            t_min: 5,
            ransac_p: 0.95,
            n_reweight_iters: 3,
            r: 50.0,
            a: 1e-5,
            p_min: 0.5,
            theta: 0.005,
            n_neighbor: 16,
            n_sparse: None,
            max_em_iters: 50,
            seed: 0,
        }
    }

    /// Defaults for a 3D scene of scale `s`.
    pub fn default_3d(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::DegenerateScale);
        }
        Ok(Self {
            h: 0.1 * s,
            r: 0.3 * s,
            a: 20.0 / s,
            n_neighbor: 50,
            ..Self::default_2d()
        })
    }

    /// Defaults appropriate for the dimension of `m`.
    pub fn for_matches(m: &MatchSet) -> Result<Self> {
        match m.dim() {
            Dim::Two => Ok(Self::default_2d()),
            Dim::Three => Self::default_3d(scale_estimate(m)?),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Floor on the EM standard deviation.
    pub fn sigma_floor(&self) -> f64 {
        1e-3 * self.h
    }

    pub fn sparse_count(&self, n: usize) -> usize {
        self.n_sparse.unwrap_or(DEFAULT_N_SPARSE).min(n)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        let unit_open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        positive("H", self.h)?;
        positive("r", self.r)?;
        positive("a", self.a)?;
        positive("theta", self.theta)?;
        unit_open("ransac_p", self.ransac_p)?;
        unit_open("p_min", self.p_min)?;
        if self.t_min < 1 {
            return Err(Error::InvalidConfig("t_min must be at least 1".into()));
        }
        if self.n_neighbor < 1 {
            return Err(Error::InvalidConfig("n_neighbor must be at least 1".into()));
        }
        if self.n_reweight_iters < 1 {
            return Err(Error::InvalidConfig("n_reweight_iters must be at least 1".into()));
        }
        if self.max_em_iters < 1 {
            return Err(Error::InvalidConfig("max_em_iters must be at least 1".into()));
        }
        if self.n_sparse == Some(0) {
            return Err(Error::InvalidConfig("n_sparse must be at least 1".into()));
        }
        Ok(())
    }

    /// Set one parameter by its file/flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        match key.trim() {
            "H" | "h" => self.h = parse(key, value)?,
            "t_min" | "T_min" => self.t_min = parse(key, value)?,
            "ransac_p" | "p" => self.ransac_p = parse(key, value)?,
            "n_reweight_iters" => self.n_reweight_iters = parse(key, value)?,
            "r" => self.r = parse(key, value)?,
            "a" => self.a = parse(key, value)?,
            "p_min" => self.p_min = parse(key, value)?,
            "theta" => self.theta = parse(key, value)?,
            "n_neighbor" | "N_neighbor" => self.n_neighbor = parse(key, value)?,
            "n_sparse" | "N_sparse" => self.n_sparse = Some(parse(key, value)?),
            "max_em_iters" => self.max_em_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_defaults() {
        let c = Config::default_2d();
        assert_eq!(c.h, 20.0);
        assert_eq!(c.t_min, 5);
        assert_eq!(c.ransac_p, 0.95);
        assert_eq!(c.n_reweight_iters, 3);
        assert_eq!(c.r, 50.0);
        assert_eq!(c.a, 1e-5);
        assert_eq!(c.p_min, 0.5);
        assert_eq!(c.theta, 0.005);
        assert_eq!(c.n_neighbor, 16);
        c.validate().unwrap();
    }

    #[test]
    fn spatial_defaults_follow_scale() {
        let c = Config::default_3d(4.0).unwrap();
        assert!((c.h - 0.4).abs() < 1e-15);
        assert!((c.r - 1.2).abs() < 1e-15);
        assert!((c.a - 5.0).abs() < 1e-15);
        assert_eq!(c.n_neighbor, 50);
        assert_eq!(c.t_min, 5);
        assert!(Config::default_3d(0.0).is_err());
    }

    #[test]
    fn validation_rejects_non_positive() {
        for key in ["H", "r", "a", "theta"] {
            for bad in ["0", "-1"] {
                let mut c = Config::default_2d();
                c.set(key, bad).unwrap();
                assert!(c.validate().is_err(), "{key}={bad}");
            }
        }
        let mut c = Config::default_2d();
        c.p_min = 1.0;
        assert!(c.validate().is_err());
        let mut c = Config::default_2d();
        c.t_min = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn key_value_file() {
        let mut c = Config::default_2d();
        c.apply_kv("# comment\nH = 12.5\n\nn_neighbor=8 # trailing\nseed=42\nN_sparse=50\n")
            .unwrap();
        assert_eq!(c.h, 12.5);
        assert_eq!(c.n_neighbor, 8);
        assert_eq!(c.seed, 42);
        assert_eq!(c.n_sparse, Some(50));
        assert!(c.apply_kv("bogus=1").is_err());
        assert!(c.apply_kv("H").is_err());
        assert!(c.apply_kv("H=abc").is_err());
    }

    #[test]
    fn sparse_count_defaults_to_capped_n() {
        let c = Config::default_2d();
        assert_eq!(c.sparse_count(1000), 200);
        assert_eq!(c.sparse_count(50), 50);
    }
}
