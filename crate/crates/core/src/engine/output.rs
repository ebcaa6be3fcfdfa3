use std::io::Write;

use serde::Serialize;

use super::mlmc::MLMCResult;
use super::rates::Rates;
use crate::failure::biased_p;

#[derive(Serialize)]
struct LevelRow {
    level: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "mean_Y")]
    mean_y: f64,
    #[serde(rename = "var_Y")]
    var_y: f64,
    #[serde(rename = "mean_Q")]
    mean_q: f64,
    #[serde(rename = "var_Q")]
    var_q: f64,
    cost_total_s: f64,
    cost_per_sample_s: f64,
}

#[derive(Serialize)]
struct SrLevelRow {
    level: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "mean_Y")]
    mean_y: f64,
    #[serde(rename = "var_Y")]
    var_y: f64,
    #[serde(rename = "mean_Q")]
    mean_q: f64,
    #[serde(rename = "var_Q")]
    var_q: f64,
    cost_total_s: f64,
    cost_per_sample_s: f64,
    x_plus: u64,
    x_minus: u64,
    p_tilde_plus: f64,
    p_tilde_minus: f64,
    /// `;`-separated counts of samples whose ladder reached levels 0..=ℓ.
    solves_reaching_level: String,
}

/// Per-level CSV. With `sr_k = Some(k)` the indicator columns are appended,
/// using the biased probability estimates with offset `k`.
pub fn write_level_csv<W: Write>(
    out: W,
    result: &MLMCResult,
    sr_k: Option<u64>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &result.levels {
        let base = LevelRow {
            level: s.level,
            m: s.dof_count,
            n: s.n,
            mean_y: s.mean_y(),
            var_y: s.var_y(),
            mean_q: s.mean_q(),
            var_q: s.var_q(),
            cost_total_s: s.cost_s,
            cost_per_sample_s: s.cost_per_sample(),
        };
        match sr_k {
            None => w.serialize(base)?,
            Some(k) => w.serialize(SrLevelRow {
                level: base.level,
                m: base.m,
                n: base.n,
                mean_y: base.mean_y,
                var_y: base.var_y,
                mean_q: base.mean_q,
                var_q: base.var_q,
                cost_total_s: base.cost_total_s,
                cost_per_sample_s: base.cost_per_sample_s,
                x_plus: s.x_plus,
                x_minus: s.x_minus,
                p_tilde_plus: biased_p(s.x_plus, s.n, k).p_tilde,
                p_tilde_minus: biased_p(s.x_minus, s.n, k).p_tilde,
                solves_reaching_level: s
                    .solves_reaching
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            })?,
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsonSummary {
    pub estimate: f64,
    pub bias: f64,
    pub sampling_error: f64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub converged: bool,
}

impl JsonSummary {
    pub fn new(result: &MLMCResult, rates: Option<&Rates>) -> Self {
        Self {
            estimate: result.estimate,
            bias: result.bias_estimate,
            sampling_error: result.sampling_error,
            alpha: rates.map_or(result.alpha, |r| r.alpha),
            beta: rates.map(|r| r.beta),
            gamma: rates.map(|r| r.gamma),
            converged: result.converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_mlmc, synthetic::SyntheticModel, EstimatorConfig};

    #[test]
    fn csv_has_expected_columns() {
        let r = run_mlmc(
            &SyntheticModel::reference(),
            &EstimatorConfig {
                tolerance: 2e-2,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_level_csv(&mut buf, &r, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "level,M,N,mean_Y,var_Y,mean_Q,var_Q,cost_total_s,cost_per_sample_s"
        );
        assert_eq!(text.lines().count(), r.levels.len() + 1);

        let mut buf = Vec::new();
        write_level_csv(&mut buf, &r, Some(1)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .ends_with("x_plus,x_minus,p_tilde_plus,p_tilde_minus,solves_reaching_level"));
        let json = serde_json::to_value(JsonSummary::new(&r, None)).unwrap();
        for key in [
            "estimate",
            "bias",
            "sampling_error",
            "alpha",
            "beta",
            "gamma",
            "converged",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
