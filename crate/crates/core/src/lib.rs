//! Mismatch removal for 2D and 3D feature correspondences under non-rigid
//! deformation.
//!
//! The pipeline has two stages:
//!
//! 1. [`ransac`] extracts a set of locally rigid similarity transforms from the
//!    matches using re-weighted fitting around a single control match per
//!    trial.
//! 2. [`em`] seeds one scaled dual quaternion per match from those transforms
//!    and runs an expectation-maximization loop that alternates between
//!    blending a smooth deformation field and re-estimating inlier
//!    posteriors.
//!
//! The converged field can then be queried anywhere through [`field`].
//!
//! ```
//! use emdq::{pipeline, synth::SynthSpec, Config};
//!
//! let spec = SynthSpec::planar(400, 0.3, 7);
//! let (matches, _gt) = emdq::synth::generate(&spec).unwrap();
//! let cfg = Config::for_matches(&matches).unwrap();
//! let out = pipeline::filter(&matches, &cfg, false).unwrap();
//! assert_eq!(out.labels.inlier.len(), 400);
//! ```

pub mod bench;
pub mod cli;
pub mod config;
pub mod dualquat;
pub mod em;
mod error;
pub mod field;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod ransac;
pub mod spatial;
pub mod svg;
pub mod synth;
pub mod types;

pub use config::Config;
pub use dualquat::{DualQuat, PlanarDualQuat, Quaternion, RigidDq};
pub use error::{Error, Result};
pub use types::{scale_estimate, Dim, LabelResult, MatchSet, Point, RigidTransform};
