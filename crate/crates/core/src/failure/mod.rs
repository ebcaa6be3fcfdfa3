//! Failure probabilities: indicator quantities, selective refinement of
//! individual samples, small-probability estimators and the two-level
//! rare-event estimator.

mod estimators;
mod refine;

pub use estimators::{biased_p, trinomial_moments, BiasedProbabilityEstimate};
pub use refine::AuditSummary;
pub use refine::{
    run_mlmc_sr, selective_refine, selective_refine_sample, sr_cost_exponent, two_level_estimate,
    SelectiveRefinementTrace, SrConfig, SrError, SrSampler, TwoLevelResult,
};

use serde::{Deserialize, Serialize};

use crate::engine::{LevelModel, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    FailBelow,
    FailAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureCriterion {
    pub threshold: f64,
    pub orientation: Orientation,
}

impl FailureCriterion {
    pub fn below(threshold: f64) -> Self {
        Self {
            threshold,
            orientation: Orientation::FailBelow,
        }
    }

    pub fn above(threshold: f64) -> Self {
        Self {
            threshold,
            orientation: Orientation::FailAbove,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("indicator of a NaN value")]
pub struct NanValue;

/// `1` on the failure side of the threshold; a tie is not a failure.
pub fn indicator(value: f64, criterion: &FailureCriterion) -> Result<u8, NanValue> {
    if value.is_nan() {
        return Err(NanValue);
    }
    let failed = match criterion.orientation {
        Orientation::FailBelow => value < criterion.threshold,
        Orientation::FailAbove => value > criterion.threshold,
    };
    Ok(failed as u8)
}

/// Wraps a model so that its quantity of interest is the failure indicator.
pub struct IndicatorModel<'a, M: LevelModel> {
    pub inner: &'a M,
    pub criterion: FailureCriterion,
}

impl<M: LevelModel> LevelModel for IndicatorModel<'_, M> {
    type Sample = M::Sample;

    fn max_level(&self) -> usize {
        self.inner.max_level()
    }

    fn dof_count(&self, level: usize) -> usize {
        self.inner.dof_count(level)
    }

    fn draw(&self, seed: u64) -> Self::Sample {
        self.inner.draw(seed)
    }

    fn solve(&self, sample: &mut Self::Sample, level: usize) -> Result<f64, ModelError> {
        let v = self.inner.solve(sample, level)?;
        indicator(v, &self.criterion)
            .map(f64::from)
            .map_err(|_| ModelError::NonFinite { level })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_examples() {
        assert_eq!(indicator(5.0, &FailureCriterion::below(6.0)), Ok(1));
        assert_eq!(indicator(6.0, &FailureCriterion::below(6.0)), Ok(0));
        assert_eq!(indicator(278.59, &FailureCriterion::below(272.47)), Ok(0));
        assert_eq!(indicator(7.0, &FailureCriterion::above(6.0)), Ok(1));
        assert_eq!(indicator(6.0, &FailureCriterion::above(6.0)), Ok(0));
        assert!(indicator(f64::NAN, &FailureCriterion::below(1.0)).is_err());
    }
}
