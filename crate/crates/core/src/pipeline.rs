//! Hypothesis extraction followed by EM refinement, dispatched on dimension.

use crate::config::Config;
use crate::dualquat::{DualQuat, PlanarDualQuat};
use crate::em::{run_em, EmReport, EmState};
use crate::error::Result;
use crate::field::{Bounds, DeformationField, FieldSample, Grid};
use crate::ransac::{ransac_run, ransac_run_sparse, RansacOutcome};
use crate::types::{Dim, LabelResult, MatchSet, Point};

/// Converged EM state in the encoding matching the data dimension.
#[derive(Debug, Clone)]
pub enum FittedState {
    Planar(EmState<PlanarDualQuat>),
    Spatial(EmState<DualQuat>),
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub ransac: RansacOutcome,
    pub labels: LabelResult,
    pub report: EmReport,
    pub state: FittedState,
}

impl FilterOutput {
    /// Hypothesis extraction found nothing; every match is an outlier.
    pub fn is_empty(&self) -> bool {
        self.ransac.is_empty()
    }

    pub fn field(&self, m: &MatchSet, cfg: &Config) -> Result<Field> {
        Ok(match &self.state {
            FittedState::Planar(s) => Field::Planar(DeformationField::new(s, &self.labels, m, cfg)?),
            FittedState::Spatial(s) => Field::Spatial(DeformationField::new(s, &self.labels, m, cfg)?),
        })
    }
}

/// Label every match. `sparse` re-weights on a sample of `n_sparse`
/// matches instead of all of them.
pub fn filter(m: &MatchSet, cfg: &Config, sparse: bool) -> Result<FilterOutput> {
    cfg.validate()?;
    let ransac = if sparse {
        ransac_run_sparse(m, cfg)?
    } else {
        ransac_run(m, cfg)?
    };
    let (labels, report, state) = match m.dim() {
        Dim::Two => {
            let (l, s, r) = run_em::<PlanarDualQuat>(m, &ransac, cfg)?;
            (l, r, FittedState::Planar(s))
        }
        Dim::Three => {
            let (l, s, r) = run_em::<DualQuat>(m, &ransac, cfg)?;
            (l, r, FittedState::Spatial(s))
        }
    };
    Ok(FilterOutput {
        ransac,
        labels,
        report,
        state,
    })
}

#[derive(Debug, Clone)]
pub enum Field {
    Planar(DeformationField<PlanarDualQuat>),
    Spatial(DeformationField<DualQuat>),
}

impl Field {
    pub fn dim(&self) -> Dim {
        match self {
            Field::Planar(f) => f.dim(),
            Field::Spatial(f) => f.dim(),
        }
    }

    pub fn sample(&self, p: &Point) -> FieldSample {
        match self {
            Field::Planar(f) => f.sample(p),
            Field::Spatial(f) => f.sample(p),
        }
    }

    pub fn query(&self, pts: &[Point]) -> Vec<FieldSample> {
        match self {
            Field::Planar(f) => f.query(pts),
            Field::Spatial(f) => f.query(pts),
        }
    }

    pub fn grid(&self, bounds: &Bounds, step: f64) -> Result<Grid> {
        match self {
            Field::Planar(f) => f.grid(bounds, step),
            Field::Spatial(f) => f.grid(bounds, step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::compute_metrics;
    use crate::synth::{generate, SynthSpec};

    #[test]
    fn planar_scene_is_cleaned() {
        let (m, gt) = generate(&SynthSpec::planar(600, 0.5, 1)).unwrap();
        let cfg = Config::for_matches(&m).unwrap();
        let out = filter(&m, &cfg, false).unwrap();
        assert!(matches!(out.state, FittedState::Planar(_)));
        let met = compute_metrics(&out.labels.inlier, &gt).unwrap();
        assert!(met.fscore > 0.95, "{met:?}");
    }

    #[test]
    fn spatial_scene_is_cleaned() {
        let (m, gt) = generate(&SynthSpec::spatial(600, 0.5, 2)).unwrap();
        let cfg = Config::for_matches(&m).unwrap();
        let out = filter(&m, &cfg, false).unwrap();
        assert!(matches!(out.state, FittedState::Spatial(_)));
        let met = compute_metrics(&out.labels.inlier, &gt).unwrap();
        assert!(met.fscore > 0.93, "{met:?}");
        let f = out.field(&m, &cfg).unwrap();
        assert_eq!(f.dim(), Dim::Three);
    }

    #[test]
    fn unstructured_input_gives_empty_outcome() {
        let x: Vec<[f64; 2]> = (0..8).map(|i| [i as f64 * 100.0, (i * 37 % 5) as f64 * 120.0]).collect();
        let y: Vec<[f64; 2]> = (0..8).map(|i| [(i * 53 % 8) as f64 * 100.0, (i * 29 % 7) as f64 * 90.0]).collect();
        let m = MatchSet::from_2d(&x, &y).unwrap();
        let out = filter(&m, &Config::default_2d(), false).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.labels.n_inliers(), 0);
    }
}
