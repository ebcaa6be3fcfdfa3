use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EstimatorId, HarnessError, ModelId};
use crate::engine::{LevelStatistics, Rates, Regime};
use crate::failure::{biased_p, AuditSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub dof_count: usize,
    pub n: u64,
    pub failed: u64,
    pub mean_y: f64,
    pub var_y: f64,
    pub mean_q: f64,
    pub var_q: f64,
    /// `V_ℓ` used by the allocation (biased trinomial moments under SR).
    pub allocation_variance: f64,
    pub work: f64,
    pub cost_s: f64,
    pub cost_per_sample_s: f64,
    pub x_plus: u64,
    pub x_minus: u64,
    pub p_tilde_plus: Option<f64>,
    pub p_tilde_minus: Option<f64>,
    pub solves_reaching: Vec<u64>,
}

impl LevelRow {
    pub fn new(s: &LevelStatistics, allocation_variance: f64, sr_k: Option<u64>) -> Self {
        Self {
            level: s.level,
            dof_count: s.dof_count,
            n: s.n,
            failed: s.failed,
            mean_y: s.mean_y(),
            var_y: s.var_y(),
            mean_q: s.mean_q(),
            var_q: s.var_q(),
            allocation_variance,
            work: s.work,
            cost_s: s.cost_s,
            cost_per_sample_s: s.cost_per_sample(),
            x_plus: s.x_plus,
            x_minus: s.x_minus,
            p_tilde_plus: sr_k.map(|k| biased_p(s.x_plus, s.n, k).p_tilde),
            p_tilde_minus: sr_k.map(|k| biased_p(s.x_minus, s.n, k).p_tilde),
            solves_reaching: s.solves_reaching.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// `κ` in `Cost ~ e^−κ`.
    pub cost_exponent: f64,
}

/// Wall-clock side of the MC comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallComparison {
    pub per_sample_s: f64,
    pub mc_cost_s: f64,
    pub method_cost_s: f64,
    pub saving: f64,
}

/// Plain Monte Carlo on the finest level at the same sampling error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub level: usize,
    /// `V[Q_L]` (or `p̂(1 − p̂)` for an indicator).
    pub variance: f64,
    pub samples: f64,
    pub work: f64,
    /// MC work / method work.
    pub saving_work: f64,
    /// The MC figures are a projection, not a run.
    pub extrapolated: bool,
    pub wall: WallComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceReport {
    pub tolerance: f64,
    pub relative_tolerance: Option<f64>,
    pub estimate: f64,
    pub sampling_error: f64,
    pub bias_estimate: Option<f64>,
    pub converged: bool,
    pub diagnostic: Option<String>,
    pub finest_level: usize,
    pub alpha_used: Option<f64>,
    /// `Σ V_ℓ / N_ℓ` on the recorded statistics.
    pub sampling_variance: f64,
    pub allocation_satisfied: bool,
    pub total_work: f64,
    pub total_cost_s: f64,
    pub levels: Vec<LevelRow>,
    pub rates: Option<Rates>,
    pub regime: Option<RegimeReport>,
    pub mc: McComparison,
    pub audit: Option<AuditSummary>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotReport {
    pub level: usize,
    pub samples: u64,
    pub estimate: f64,
    pub cost_s: f64,
}

/// Everything a run produced. Fields ending in `_s`, and the `wall` blocks,
/// are timings; the rest is reproducible from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: ModelId,
    pub estimator: EstimatorId,
    pub seed: u64,
    pub theta: f64,
    pub reference: Option<f64>,
    pub pilot: Option<PilotReport>,
    pub entries: Vec<ToleranceReport>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub levels: Vec<LevelRow>,
    pub rates: Option<Rates>,
    pub regime: Option<RegimeReport>,
    pub elapsed_s: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    tolerance: f64,
    relative_tolerance: Option<f64>,
    estimate: f64,
    sampling_error: f64,
    bias_estimate: Option<f64>,
    converged: bool,
    finest_level: usize,
    total_work: f64,
    total_cost_s: f64,
    mc_samples: f64,
    mc_work: f64,
    mc_cost_s: f64,
    saving_work: f64,
    saving_wall: f64,
    mc_extrapolated: bool,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Serialize)]
struct CsvLevelRow<'a> {
    level: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: u64,
    failed: u64,
    #[serde(rename = "mean_Y")]
    mean_y: f64,
    #[serde(rename = "var_Y")]
    var_y: f64,
    #[serde(rename = "mean_Q")]
    mean_q: f64,
    #[serde(rename = "var_Q")]
    var_q: f64,
    allocation_variance: f64,
    work: f64,
    cost_total_s: f64,
    cost_per_sample_s: f64,
    x_plus: u64,
    x_minus: u64,
    p_tilde_plus: Option<f64>,
    p_tilde_minus: Option<f64>,
    solves_reaching_level: &'a str,
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn write_levels_csv(path: &Path, rows: &[LevelRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    for r in rows {
        let reach = r
            .solves_reaching
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(CsvLevelRow {
            level: r.level,
            m: r.dof_count,
            n: r.n,
            failed: r.failed,
            mean_y: r.mean_y,
            var_y: r.var_y,
            mean_q: r.mean_q,
            var_q: r.var_q,
            allocation_variance: r.allocation_variance,
            work: r.work,
            cost_total_s: r.cost_s,
            cost_per_sample_s: r.cost_per_sample_s,
            x_plus: r.x_plus,
            x_minus: r.x_minus,
            p_tilde_plus: r.p_tilde_plus,
            p_tilde_minus: r.p_tilde_minus,
            solves_reaching_level: &reach,
        })
        .map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// `summary.csv` and `levels_<i>.csv` from a report.
pub fn render_report(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    for e in &report.entries {
        w.serialize(SummaryRow {
            tolerance: e.tolerance,
            relative_tolerance: e.relative_tolerance,
            estimate: e.estimate,
            sampling_error: e.sampling_error,
            bias_estimate: e.bias_estimate,
            converged: e.converged,
            finest_level: e.finest_level,
            total_work: e.total_work,
            total_cost_s: e.total_cost_s,
            mc_samples: e.mc.samples,
            mc_work: e.mc.work,
            mc_cost_s: e.mc.wall.mc_cost_s,
            saving_work: e.mc.saving_work,
            saving_wall: e.mc.wall.saving,
            mc_extrapolated: e.mc.extrapolated,
            alpha: e.rates.as_ref().map(|r| r.alpha),
            beta: e.rates.as_ref().map(|r| r.beta),
            gamma: e.rates.as_ref().map(|r| r.gamma),
        })
        .map_err(|err| io(&path, err))?;
    }
    w.flush().map_err(|e| io(&path, e))?;
    for (i, e) in report.entries.iter().enumerate() {
        write_levels_csv(&dir.join(format!("levels_{i}.csv")), &e.levels)?;
    }
    Ok(())
}

/// `report.json` plus the CSV tables.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| io(&path, e))?;
    fs::write(&path, json).map_err(|e| io(&path, e))?;
    render_report(report, dir)
}

pub fn read_report(path: &Path) -> Result<RunReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

pub fn write_rate_study(study: &RateStudy, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_levels_csv(&dir.join("rates_levels.csv"), &study.levels)?;
    let path = dir.join("rates.json");
    let json = serde_json::to_string_pretty(study).map_err(|e| io(&path, e))?;
    fs::write(&path, json).map_err(|e| io(&path, e))
}
