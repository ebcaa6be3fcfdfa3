use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::cosserat::StrengthConfig;
use crate::engine::synthetic::{SyntheticLadder, SyntheticModel};
use crate::engine::{CostModel, EstimatorConfig};
use crate::failure::{FailureCriterion, Orientation, SrConfig};
use crate::plate::PlateConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    CosseratStrength,
    PlateBuckling,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Mc,
    Mlmc,
    MlmcSr,
    TwoLevel,
}

/// Closed-form models: Gaussian level noise, or a monotone eigenvalue ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticConfig {
    Levels(SyntheticModel),
    Ladder(SyntheticLadder),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig::Levels(SyntheticModel::reference())
    }
}

/// Failure event `Q < threshold` (or `>`), in the units of the model's QoI:
/// kN for the plate, MPa for the strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureSection {
    /// Defaults to the plate's `lambda_star_kn`; required for other models.
    pub threshold: Option<f64>,
    pub orientation: Orientation,
    /// Offset of the biased probability estimates.
    pub k: u64,
    /// Rate assumed in the per-sample stopping test.
    pub alpha: f64,
    pub one_sided: bool,
    pub audit_fraction: f64,
}

impl Default for FailureSection {
    fn default() -> Self {
        let sr = SrConfig::default();
        Self {
            threshold: None,
            orientation: Orientation::FailBelow,
            k: sr.k,
            alpha: sr.alpha,
            one_sided: sr.one_sided,
            audit_fraction: sr.audit_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    /// Level sampled by the `mc` estimator (default: the finest level).
    pub level: Option<usize>,
    /// Fixed sample count; otherwise `N = V̂/e_s²` from a pilot.
    pub samples: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoLevelSection {
    pub fine_level: usize,
}

impl Default for TwoLevelSection {
    fn default() -> Self {
        Self { fine_level: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesSection {
    /// Pairs per level `0, 1, …`; the last entry repeats for finer levels.
    pub samples: Vec<u64>,
    /// Finest level of the study (default: the model's finest level).
    pub max_level: Option<usize>,
}

impl Default for RatesSection {
    fn default() -> Self {
        Self {
            samples: vec![200, 100, 50, 25, 12],
            max_level: None,
        }
    }
}

/// One experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub estimator: EstimatorId,
    /// Root-mean-square error targets.
    pub tolerances: Vec<f64>,
    /// Read `tolerances` as fractions of the reference value.
    pub relative: bool,
    /// Reference for relative tolerances; a pilot estimate when absent.
    pub reference: Option<f64>,
    pub pilot_samples: u64,
    pub theta: f64,
    pub n_initial: u64,
    pub m: f64,
    pub alpha: Option<f64>,
    /// Cap on the level hierarchy (default: the model's finest level).
    pub max_level: Option<usize>,
    pub seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub cost: CostModel,
    /// Direct finest-level solves timed for the MC cost comparison.
    pub mc_timing_samples: u64,
    pub out: PathBuf,
    pub plate: PlateConfig,
    pub strength: StrengthConfig,
    pub synthetic: SyntheticConfig,
    pub failure: Option<FailureSection>,
    pub mc: McSection,
    pub two_level: TwoLevelSection,
    pub rates: RatesSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            model: ModelId::Synthetic,
            estimator: EstimatorId::Mlmc,
            tolerances: vec![e.tolerance],
            relative: false,
            reference: None,
            pilot_samples: 200,
            theta: e.theta,
            n_initial: e.n_initial,
            m: e.m,
            alpha: None,
            max_level: None,
            seed: 0,
            workers: 0,
            cost: CostModel::Analytic { gamma: 1.0 },
            mc_timing_samples: 3,
            out: PathBuf::from("out"),
            plate: PlateConfig::default(),
            strength: StrengthConfig::default(),
            synthetic: SyntheticConfig::default(),
            failure: None,
            mc: McSection::default(),
            two_level: TwoLevelSection::default(),
            rates: RatesSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.tolerances.is_empty()
            || self.tolerances.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        {
            return bad(format!(
                "tolerances must be a non-empty list of positive numbers, got {:?}",
                self.tolerances
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta = {} outside (0, 1)", self.theta));
        }
        if self.n_initial < 2 || !(self.m > 1.0) {
            return bad("n_initial must be ≥ 2 and m > 1".into());
        }
        if self.alpha.is_some_and(|a| !(a > 0.0)) {
            return bad("alpha must be positive".into());
        }
        if self.relative && self.reference.is_none() && self.pilot_samples < 2 {
            return bad(
                "relative tolerances need a reference value or at least 2 pilot samples".into(),
            );
        }
        if let CostModel::Analytic { gamma } = self.cost {
            if !(gamma >= 0.0) {
                return bad(format!("cost exponent {gamma} must be non-negative"));
            }
        }
        match self.model {
            ModelId::PlateBuckling => self.plate.validate().map_err(HarnessError::Config)?,
            ModelId::CosseratStrength => self.strength.validate().map_err(HarnessError::Config)?,
            ModelId::Synthetic => {}
        }
        let needs_failure = matches!(self.estimator, EstimatorId::MlmcSr | EstimatorId::TwoLevel);
        if needs_failure && self.criterion().is_none() {
            return bad(format!(
                "estimator {:?} needs a [failure] threshold",
                self.estimator
            ));
        }
        if let Some(f) = &self.failure {
            if !(f.alpha > 0.0) || !(0.0..=1.0).contains(&f.audit_fraction) {
                return bad("failure.alpha must be positive and audit_fraction in [0, 1]".into());
            }
        }
        if self.estimator == EstimatorId::TwoLevel && self.two_level.fine_level == 0 {
            return bad("two_level.fine_level must be at least 1".into());
        }
        if let ModelId::Synthetic = self.model {
            if let SyntheticConfig::Levels(s) = &self.synthetic {
                if s.m < 2 || s.m0 == 0 {
                    return bad("synthetic m must be ≥ 2 and m0 ≥ 1".into());
                }
            }
        }
        Ok(())
    }

    /// The failure event, when the QoI is an indicator.
    pub fn criterion(&self) -> Option<FailureCriterion> {
        let f = self
            .failure
            .or_else(|| match (self.model, self.estimator) {
                (ModelId::PlateBuckling, EstimatorId::MlmcSr | EstimatorId::TwoLevel) => {
                    Some(FailureSection::default())
                }
                _ => None,
            })?;
        let threshold = f.threshold.or(match self.model {
            ModelId::PlateBuckling => Some(self.plate.lambda_star_kn),
            _ => None,
        })?;
        Some(FailureCriterion {
            threshold,
            orientation: f.orientation,
        })
    }

    pub fn sr_config(&self) -> Option<SrConfig> {
        let criterion = self.criterion()?;
        let f = self.failure.unwrap_or_default();
        Some(SrConfig {
            criterion,
            m: self.m,
            alpha: f.alpha,
            k: f.k,
            one_sided: f.one_sided,
            audit_fraction: f.audit_fraction,
        })
    }

    pub fn estimator_config(&self, tolerance: f64, max_level: usize) -> EstimatorConfig {
        EstimatorConfig {
            tolerance,
            theta: self.theta,
            n_initial: self.n_initial,
            m: self.m,
            alpha_assumed: self.alpha,
            max_level,
            base_seed: self.seed,
            cost_model: self.cost,
        }
    }
}
