use serde::{Deserialize, Serialize};

use super::EngineError;

/// Per-level summary used to fit convergence and cost rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelPoint {
    pub dof_count: usize,
    pub mean_y: f64,
    pub var_y: f64,
    pub cost: f64,
}

/// `|E[Y_ℓ]| ~ M^−α`, `V[Y_ℓ] ~ M^−β`, `C_ℓ ~ M^γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Indices (into the input) left out of the α fit because `mean_Y = 0`.
    pub excluded: Vec<usize>,
}

/// Least-squares log-log slopes over the supplied levels (normally ℓ ≥ 1).
pub fn estimate_rates(points: &[LevelPoint]) -> Result<Rates, EngineError> {
    if points.len() < 3 {
        return Err(EngineError::Invalid(format!(
            "rate fit needs at least 3 levels, got {}",
            points.len()
        )));
    }
    let excluded: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.mean_y == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !excluded.is_empty() {
        log::warn!("levels {excluded:?} have zero mean difference and are excluded from the α fit");
    }
    let fit = |f: &dyn Fn(&LevelPoint) -> f64| -> Result<f64, EngineError> {
        let xy: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| f(p) > 0.0 && f(p).is_finite())
            .map(|p| ((p.dof_count as f64).ln(), f(p).ln()))
            .collect();
        slope(&xy).ok_or_else(|| {
            EngineError::Invalid("fewer than two usable levels for a rate fit".into())
        })
    };
    Ok(Rates {
        alpha: -fit(&|p| p.mean_y.abs())?,
        beta: -fit(&|p| p.var_y)?,
        gamma: fit(&|p| p.cost)?,
        excluded,
    })
}

pub(crate) fn slope(xy: &[(f64, f64)]) -> Option<f64> {
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// β > γ: work dominated by the coarsest level.
    VarianceDominated,
    /// β = γ: work spread evenly, with an extra (log e)² factor.
    Balanced,
    /// β < γ: work dominated by the finest level.
    CostDominated,
}

/// MLMC cost exponent `2 + max(0, (γ − β)/α)` in `Cost ~ e^−exponent`.
pub fn complexity_regime(alpha: f64, beta: f64, gamma: f64) -> (Regime, f64) {
    let regime = if (beta - gamma).abs() <= 1e-9 * beta.abs().max(gamma.abs()).max(1.0) {
        Regime::Balanced
    } else if beta > gamma {
        Regime::VarianceDominated
    } else {
        Regime::CostDominated
    };
    let exponent = match regime {
        Regime::CostDominated => 2.0 + (gamma - beta) / alpha,
        _ => 2.0,
    };
    (regime, exponent)
}
