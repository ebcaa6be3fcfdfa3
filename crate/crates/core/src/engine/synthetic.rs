//! Closed-form level models with known rates, for testing and calibration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LevelModel, ModelError};

/// `Q_ℓ = q∞ + s₀ ξ₀ − b M_ℓ^−α + c M_ℓ^−β/2 η_ℓ` with independent standard
/// normal `ξ₀, η_0, η_1, …`; `M_ℓ = M₀ m^ℓ`.
///
/// Hence `E[Q_ℓ] = q∞ − b M_ℓ^−α`, `|E[Y_ℓ]| ∝ M_ℓ^−α` and
/// `V[Y_ℓ] = c² (M_ℓ^−β + M_{ℓ−1}^−β) ∝ M_ℓ^−β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticModel {
    pub q_inf: f64,
    pub s0: f64,
    pub b: f64,
    pub alpha: f64,
    pub c: f64,
    pub beta: f64,
    pub m0: usize,
    pub m: usize,
    pub max_level: usize,
}

impl SyntheticModel {
    /// `Q_ℓ = 1 − M_ℓ^−1 + M_ℓ^−1/2 η_ℓ` on `M₀ = 16`.
    pub fn reference() -> Self {
        Self {
            q_inf: 1.0,
            s0: 0.0,
            b: 1.0,
            alpha: 1.0,
            c: 1.0,
            beta: 1.0,
            m0: 16,
            m: 4,
            max_level: 8,
        }
    }

    pub fn expected(&self, level: usize) -> f64 {
        self.q_inf - self.b * (self.dof_count(level) as f64).powf(-self.alpha)
    }
}

impl LevelModel for SyntheticModel {
    type Sample = (f64, Vec<f64>);

    fn max_level(&self) -> usize {
        self.max_level
    }

    fn dof_count(&self, level: usize) -> usize {
        self.m0 * self.m.pow(level as u32)
    }

    fn draw(&self, seed: u64) -> Self::Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi0: f64 = StandardNormal.sample(&mut rng);
        let eta = (0..=self.max_level)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        (xi0, eta)
    }

    fn solve(&self, sample: &mut Self::Sample, level: usize) -> Result<f64, ModelError> {
        let mm = self.dof_count(level) as f64;
        Ok(
            self.q_inf + self.s0 * sample.0 - self.b * mm.powf(-self.alpha)
                + self.c * mm.powf(-self.beta / 2.0) * sample.1[level],
        )
    }
}

/// A monotone eigenvalue-like ladder `λ_ℓ = λ∞ + a M_ℓ^−α` with
/// `λ∞ ~ N(mean, sd²)` and `a = |N(a_mean, a_sd²)|`.
///
/// The per-sample bias bound `|λ_ℓ − λ| = |λ_ℓ − λ_{ℓ−1}| / (m^α − 1)` holds
/// with equality, and `λ_ℓ ≤ λ_{ℓ−1}` for every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticLadder {
    pub mean: f64,
    pub sd: f64,
    pub a_mean: f64,
    pub a_sd: f64,
    pub alpha: f64,
    pub m0: usize,
    pub m: usize,
    pub max_level: usize,
}

impl SyntheticLadder {
    pub fn buckling_like() -> Self {
        Self {
            mean: 285.0,
            sd: 6.0,
            a_mean: 9.0e4,
            a_sd: 1.0e4,
            alpha: 1.0,
            m0: 3267,
            m: 4,
            max_level: 6,
        }
    }

    /// `(λ∞, a)` of a draw.
    pub fn limit_and_amplitude(&self, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: f64 = StandardNormal.sample(&mut rng);
        let w: f64 = StandardNormal.sample(&mut rng);
        (self.mean + self.sd * z, (self.a_mean + self.a_sd * w).abs())
    }
}

impl LevelModel for SyntheticLadder {
    type Sample = (f64, f64);

    fn max_level(&self) -> usize {
        self.max_level
    }

    fn dof_count(&self, level: usize) -> usize {
        self.m0 * self.m.pow(level as u32)
    }

    fn draw(&self, seed: u64) -> Self::Sample {
        self.limit_and_amplitude(seed)
    }

    fn solve(&self, sample: &mut Self::Sample, level: usize) -> Result<f64, ModelError> {
        Ok(sample.0 + sample.1 * (self.dof_count(level) as f64).powf(-self.alpha))
    }
}
