//! Experiment orchestration: configuration, estimator runs per tolerance,
//! comparison against plain Monte Carlo, rate studies and result files.

mod config;
mod report;

pub use config::{
    EstimatorId, ExperimentConfig, FailureSection, McSection, ModelId, RatesSection,
    SyntheticConfig, TwoLevelSection,
};
pub use report::{
    read_report, render_report, write_levels_csv, write_outputs, write_rate_study, LevelRow,
    McComparison, PilotReport, RateStudy, RegimeReport, RunReport, ToleranceReport, WallComparison,
};

use std::collections::HashMap;
use std::time::Instant;

use crate::cosserat::StrengthModel;
use crate::engine::{
    complexity_regime, estimate_rates, extend_level, mc_estimate_with, run_adaptive, sample_seed,
    CostModel, EngineError, LevelModel, LevelPoint, LevelSampler, LevelStatistics, MLMCResult,
    PairSampler, Stream,
};
use crate::failure::{biased_p, two_level_estimate, IndicatorModel, SrSampler};
use crate::field::{FieldSample, KlBasis};
use crate::plate::BucklingModel;

const PILOT_STREAM: Stream = Stream::Custom(0x9170);
const TIMING_STREAM: Stream = Stream::Custom(0x7133);
const RATES_STREAM: Stream = Stream::Custom(0x4a7e);

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] EngineError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration and output problems, 4 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Solver(_) => 4,
        }
    }
}

/// Linear-interpolated order statistic at position `q (n − 1)` of the sorted
/// samples (the "type 7" convention). `NaN` for an empty input.
pub fn empirical_percentile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Plain MC cost of estimating a probability `p` to sampling error `e_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McExtrapolation {
    /// `N = p(1 − p)/e_s²`.
    pub samples: f64,
    pub cost: f64,
    pub extrapolated: bool,
}

pub fn mc_cost_extrapolate(p: f64, e_s: f64, cost_per_sample: f64) -> McExtrapolation {
    let samples = p * (1.0 - p) / (e_s * e_s);
    McExtrapolation {
        samples,
        cost: samples * cost_per_sample,
        extrapolated: true,
    }
}

/// Runs the configured estimator once per tolerance.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    match cfg.model {
        ModelId::Synthetic => match &cfg.synthetic {
            SyntheticConfig::Levels(m) => dispatch(m, cfg),
            SyntheticConfig::Ladder(m) => dispatch(m, cfg),
        },
        ModelId::PlateBuckling => dispatch(
            &BucklingModel::new(cfg.plate.clone()).map_err(HarnessError::Config)?,
            cfg,
        ),
        ModelId::CosseratStrength => dispatch(
            &StrengthModel::new(cfg.strength.clone()).map_err(HarnessError::Config)?,
            cfg,
        ),
    }
}

fn dispatch<M: LevelModel>(model: &M, cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    match (cfg.estimator, cfg.criterion()) {
        (EstimatorId::Mc | EstimatorId::Mlmc, Some(criterion)) => Runner::new(
            &IndicatorModel {
                inner: model,
                criterion,
            },
            cfg,
            true,
        )
        .run(),
        (EstimatorId::Mc | EstimatorId::Mlmc, None) => Runner::new(model, cfg, false).run(),
        _ => Runner::new(model, cfg, true).run(),
    }
}

struct Runner<'a, M: LevelModel> {
    model: &'a M,
    cfg: &'a ExperimentConfig,
    /// The QoI is a failure indicator.
    indicator: bool,
    finest: usize,
    timings: HashMap<usize, (f64, f64)>,
}

impl<'a, M: LevelModel> Runner<'a, M> {
    fn new(model: &'a M, cfg: &'a ExperimentConfig, indicator: bool) -> Self {
        let finest = cfg.max_level.unwrap_or(usize::MAX).min(model.max_level());
        Self {
            model,
            cfg,
            indicator,
            finest,
            timings: HashMap::new(),
        }
    }

    fn run(mut self) -> Result<RunReport, HarnessError> {
        let t0 = Instant::now();
        let (reference, pilot) = self.reference()?;
        let mut entries = Vec::new();
        for &tol in &self.cfg.tolerances {
            let (tolerance, relative) = match reference {
                Some(r) => (tol * r.abs(), Some(tol)),
                None => (tol, None),
            };
            log::info!(
                "{:?} on {:?}: tolerance {tolerance:.4e}",
                self.cfg.estimator,
                self.cfg.model
            );
            let start = Instant::now();
            let mut entry = match self.cfg.estimator {
                EstimatorId::Mc => self.run_mc(tolerance)?,
                EstimatorId::Mlmc => self.run_levels(tolerance, &PairSampler(self.model), None)?,
                EstimatorId::MlmcSr => {
                    let sampler =
                        SrSampler::new(self.model, self.cfg.sr_config().expect("validated"));
                    let k = Some(sampler_k(self.cfg));
                    let mut e = self.run_levels(tolerance, &sampler, k)?;
                    e.audit = Some(sampler.audit());
                    e
                }
                EstimatorId::TwoLevel => self.run_two_level(tolerance)?,
            };
            entry.relative_tolerance = relative;
            entry.elapsed_s = start.elapsed().as_secs_f64();
            entries.push(entry);
        }
        Ok(RunReport {
            model: self.cfg.model,
            estimator: self.cfg.estimator,
            seed: self.cfg.seed,
            theta: self.cfg.theta,
            reference,
            pilot,
            entries,
            elapsed_s: t0.elapsed().as_secs_f64(),
        })
    }

    /// Reference value for relative tolerances: configured, or a pilot MC
    /// estimate on level `min(1, L)`.
    fn reference(&self) -> Result<(Option<f64>, Option<PilotReport>), HarnessError> {
        if !self.cfg.relative {
            return Ok((None, None));
        }
        if let Some(r) = self.cfg.reference {
            return Ok((Some(r), None));
        }
        let level = self.finest.min(1);
        let seed = sample_seed(self.cfg.seed, PILOT_STREAM, 0, 0);
        let n = self.cfg.pilot_samples;
        let (estimate, stats) = match (self.cfg.estimator, self.cfg.criterion()) {
            (EstimatorId::MlmcSr | EstimatorId::TwoLevel, Some(criterion)) => mc_estimate_with(
                &IndicatorModel {
                    inner: self.model,
                    criterion,
                },
                level,
                n,
                seed,
                self.cfg.cost,
            )?,
            _ => mc_estimate_with(self.model, level, n, seed, self.cfg.cost)?,
        };
        if estimate == 0.0 {
            return Err(HarnessError::Config(format!(
                "pilot estimate on level {level} is zero ({n} samples); set `reference` for relative tolerances"
            )));
        }
        log::info!("pilot reference {estimate:.5} from {n} samples on level {level}");
        Ok((
            Some(estimate),
            Some(PilotReport {
                level,
                samples: stats.n,
                estimate,
                cost_s: stats.cost_s,
            }),
        ))
    }

    /// Mean wall time and work of one direct solve on `level`.
    fn fine_cost(&mut self, level: usize) -> Result<(f64, f64), HarnessError> {
        if let Some(&c) = self.timings.get(&level) {
            return Ok(c);
        }
        let n = self.cfg.mc_timing_samples.max(1);
        let mut wall = 0.0;
        for i in 0..n {
            let e = self
                .model
                .evaluate(level, sample_seed(self.cfg.seed, TIMING_STREAM, level, i))
                .map_err(|source| EngineError::Model {
                    level,
                    index: i,
                    source,
                })?;
            wall += e.cost_s;
        }
        let wall = wall / n as f64;
        let c = (
            wall,
            self.cfg.cost.work([self.model.dof_count(level)], wall),
        );
        self.timings.insert(level, c);
        Ok(c)
    }

    fn mc_comparison(
        &mut self,
        level: usize,
        variance: f64,
        e_s: f64,
        method_work: f64,
        method_s: f64,
    ) -> Result<McComparison, HarnessError> {
        let (wall, work) = self.fine_cost(level)?;
        let samples = variance / (e_s * e_s);
        let (method_work, method_s) = (method_work.max(f64::MIN_POSITIVE), method_s.max(1e-12));
        Ok(McComparison {
            level,
            variance,
            samples,
            work: samples * work,
            saving_work: samples * work / method_work,
            extrapolated: true,
            wall: WallComparison {
                per_sample_s: wall,
                mc_cost_s: samples * wall,
                method_cost_s: method_s,
                saving: samples * wall / method_s,
            },
        })
    }

    /// `V[Q_L]` entering the MC sample count.
    fn mc_variance(&self, estimate: f64, fine: &LevelStatistics) -> f64 {
        if self.indicator {
            let p = estimate.clamp(0.0, 1.0);
            p * (1.0 - p)
        } else {
            fine.var_q()
        }
    }

    fn run_levels<S: LevelSampler>(
        &mut self,
        tolerance: f64,
        sampler: &S,
        sr_k: Option<u64>,
    ) -> Result<ToleranceReport, HarnessError> {
        let ecfg = self.cfg.estimator_config(tolerance, self.finest);
        let r = run_adaptive(sampler, &ecfg)?;
        let rows: Vec<LevelRow> = r
            .levels
            .iter()
            .map(|s| LevelRow::new(s, sampler.allocation_variance(s), sr_k))
            .collect();
        let sampling_variance: f64 = rows
            .iter()
            .map(|r| r.allocation_variance / r.n as f64)
            .sum();
        let e_s = ecfg.sampling_tolerance();
        let fine = r.levels.last().expect("at least one level");
        let variance = self.mc_variance(r.estimate, fine);
        let mc = self.mc_comparison(
            r.finest_level(),
            variance,
            e_s,
            r.total_work,
            r.total_cost_s,
        )?;
        let (rates, regime) = fit_rates(&r.levels);
        Ok(ToleranceReport {
            tolerance,
            relative_tolerance: None,
            estimate: r.estimate,
            sampling_error: r.sampling_error,
            bias_estimate: Some(r.bias_estimate),
            converged: r.converged,
            diagnostic: r.diagnostic.clone(),
            finest_level: r.finest_level(),
            alpha_used: Some(r.alpha),
            sampling_variance,
            allocation_satisfied: allocation_ok(sampling_variance, e_s, r.converged),
            total_work: r.total_work,
            total_cost_s: r.total_cost_s,
            levels: rows,
            rates,
            regime,
            mc,
            audit: None,
            elapsed_s: 0.0,
        })
    }

    fn run_mc(&mut self, tolerance: f64) -> Result<ToleranceReport, HarnessError> {
        let level = self
            .cfg
            .mc
            .level
            .unwrap_or(self.finest)
            .min(self.model.max_level());
        let e_s = self.cfg.theta.sqrt() * tolerance;
        let sampler = McSampler(self.model);
        let mut stats = LevelStatistics::new(level, self.model.dof_count(level));
        let variance = |s: &LevelStatistics| {
            if self.indicator {
                let p = biased_p(s.sum_q.round() as u64, s.n, 1).p_tilde;
                p * (1.0 - p)
            } else {
                s.var_q()
            }
        };
        match self.cfg.mc.samples {
            Some(n) => extend_level(
                &sampler,
                &mut stats,
                n,
                self.cfg.seed,
                Stream::MonteCarlo,
                self.cfg.cost,
            )?,
            None => {
                extend_level(
                    &sampler,
                    &mut stats,
                    self.cfg.n_initial,
                    self.cfg.seed,
                    Stream::MonteCarlo,
                    self.cfg.cost,
                )?;
                let target =
                    ((variance(&stats) / (e_s * e_s)).ceil() as u64).max(self.cfg.n_initial);
                if target > stats.n {
                    let add = target - stats.n;
                    extend_level(
                        &sampler,
                        &mut stats,
                        add,
                        self.cfg.seed,
                        Stream::MonteCarlo,
                        self.cfg.cost,
                    )?;
                }
            }
        }
        let v = variance(&stats);
        let sampling_variance = v / stats.n as f64;
        let wall = stats.cost_per_sample();
        Ok(ToleranceReport {
            tolerance,
            relative_tolerance: None,
            estimate: stats.mean_q(),
            sampling_error: sampling_variance.sqrt(),
            bias_estimate: None,
            converged: sampling_variance <= e_s * e_s * (1.0 + 1e-10),
            diagnostic: None,
            finest_level: level,
            alpha_used: None,
            sampling_variance,
            allocation_satisfied: allocation_ok(sampling_variance, e_s, true),
            total_work: stats.work,
            total_cost_s: stats.cost_s,
            mc: McComparison {
                level,
                variance: v,
                samples: stats.n as f64,
                work: stats.work,
                saving_work: 1.0,
                extrapolated: false,
                wall: WallComparison {
                    per_sample_s: wall,
                    mc_cost_s: stats.cost_s,
                    method_cost_s: stats.cost_s,
                    saving: 1.0,
                },
            },
            levels: vec![LevelRow::new(&stats, v, None)],
            rates: None,
            regime: None,
            audit: None,
            elapsed_s: 0.0,
        })
    }

    fn run_two_level(&mut self, tolerance: f64) -> Result<ToleranceReport, HarnessError> {
        let fine_level = self.cfg.two_level.fine_level.min(self.finest);
        let ecfg = self.cfg.estimator_config(tolerance, fine_level);
        let sr = self.cfg.sr_config().expect("validated");
        let r = two_level_estimate(self.model, &ecfg, &sr, fine_level)?;
        let e_s = ecfg.sampling_tolerance();
        let variance = self.mc_variance(r.estimate, &r.y);
        let mc = self.mc_comparison(fine_level, variance, e_s, r.total_work, r.total_cost_s)?;
        let k = Some(sr.k);
        let p0 = biased_p(r.q0.sum_q.round() as u64, r.q0.n, sr.k).p_tilde;
        let rows = vec![
            LevelRow::new(&r.q0, p0 * (1.0 - p0), k),
            LevelRow::new(&r.y, r.y.var_y(), k),
        ];
        let sampling_variance = r.sampling_error.powi(2);
        Ok(ToleranceReport {
            tolerance,
            relative_tolerance: None,
            estimate: r.estimate,
            sampling_error: r.sampling_error,
            bias_estimate: Some(r.bias_estimate),
            converged: r.converged,
            diagnostic: (!r.converged).then(|| {
                format!(
                    "bias estimate {:.4e} above e_b on fine level {fine_level}",
                    r.bias_estimate
                )
            }),
            finest_level: fine_level,
            alpha_used: Some(ecfg.alpha_assumed.unwrap_or(sr.alpha)),
            sampling_variance,
            allocation_satisfied: allocation_ok(sampling_variance, e_s, true),
            total_work: r.total_work,
            total_cost_s: r.total_cost_s,
            levels: rows,
            rates: None,
            regime: None,
            mc,
            audit: None,
            elapsed_s: 0.0,
        })
    }
}

fn sampler_k(cfg: &ExperimentConfig) -> u64 {
    cfg.sr_config().map_or(1, |s| s.k)
}

fn allocation_ok(sampling_variance: f64, e_s: f64, converged: bool) -> bool {
    !converged || sampling_variance <= e_s * e_s * (1.0 + 1e-10)
}

/// Rates over levels `ℓ ≥ 1` from raw level means, variances and wall cost.
fn fit_rates(levels: &[LevelStatistics]) -> (Option<crate::engine::Rates>, Option<RegimeReport>) {
    if levels.len() < 4 {
        return (None, None);
    }
    let points: Vec<LevelPoint> = levels[1..]
        .iter()
        .map(|s| LevelPoint {
            dof_count: s.dof_count,
            mean_y: s.mean_y(),
            var_y: s.var_y(),
            cost: s.cost_per_sample(),
        })
        .collect();
    match estimate_rates(&points) {
        Ok(r) => {
            let (regime, exponent) = complexity_regime(r.alpha, r.beta, r.gamma);
            (
                Some(r),
                Some(RegimeReport {
                    regime,
                    cost_exponent: exponent,
                }),
            )
        }
        Err(e) => {
            log::debug!("no rate fit: {e}");
            (None, None)
        }
    }
}

struct McSampler<'a, M: LevelModel>(&'a M);

impl<M: LevelModel> LevelSampler for McSampler<'_, M> {
    fn max_level(&self) -> usize {
        self.0.max_level()
    }

    fn dof_count(&self, level: usize) -> usize {
        self.0.dof_count(level)
    }

    fn sample(
        &self,
        level: usize,
        seed: u64,
        cost: CostModel,
    ) -> Result<crate::engine::SampleRecord, crate::engine::ModelError> {
        let e = self.0.evaluate(level, seed)?;
        Ok(crate::engine::SampleRecord {
            y: e.q,
            q: e.q,
            cost_s: e.cost_s,
            work: cost.work([self.0.dof_count(level)], e.cost_s),
            top_level: level,
        })
    }
}

/// Level-difference statistics from a fixed number of samples per level.
pub fn rate_study(cfg: &ExperimentConfig) -> Result<RateStudy, HarnessError> {
    cfg.validate()?;
    match cfg.model {
        ModelId::Synthetic => match &cfg.synthetic {
            SyntheticConfig::Levels(m) => rate_dispatch(m, cfg),
            SyntheticConfig::Ladder(m) => rate_dispatch(m, cfg),
        },
        ModelId::PlateBuckling => rate_dispatch(
            &BucklingModel::new(cfg.plate.clone()).map_err(HarnessError::Config)?,
            cfg,
        ),
        ModelId::CosseratStrength => rate_dispatch(
            &StrengthModel::new(cfg.strength.clone()).map_err(HarnessError::Config)?,
            cfg,
        ),
    }
}

fn rate_dispatch<M: LevelModel>(
    model: &M,
    cfg: &ExperimentConfig,
) -> Result<RateStudy, HarnessError> {
    match (cfg.estimator, cfg.criterion()) {
        (EstimatorId::MlmcSr | EstimatorId::TwoLevel, _) => {
            let sr = cfg.sr_config().expect("validated");
            rate_levels(&SrSampler::new(model, sr), cfg, Some(sr.k))
        }
        (_, Some(criterion)) => rate_levels(
            &PairSampler(&IndicatorModel {
                inner: model,
                criterion,
            }),
            cfg,
            None,
        ),
        (_, None) => rate_levels(&PairSampler(model), cfg, None),
    }
}

fn rate_levels<S: LevelSampler>(
    sampler: &S,
    cfg: &ExperimentConfig,
    sr_k: Option<u64>,
) -> Result<RateStudy, HarnessError> {
    let finest = cfg
        .rates
        .max_level
        .or(cfg.max_level)
        .unwrap_or(usize::MAX)
        .min(sampler.max_level());
    let t0 = Instant::now();
    let mut levels = Vec::new();
    for l in 0..=finest {
        let n = cfg
            .rates
            .samples
            .get(l)
            .or(cfg.rates.samples.last())
            .copied()
            .unwrap_or(cfg.n_initial);
        let mut s = LevelStatistics::new(l, sampler.dof_count(l));
        extend_level(sampler, &mut s, n, cfg.seed, RATES_STREAM, cfg.cost)?;
        log::info!(
            "level {l}: {n} samples, mean Y {:.4e}, var Y {:.4e}",
            s.mean_y(),
            s.var_y()
        );
        levels.push(s);
    }
    let (rates, regime) = fit_rates(&levels);
    Ok(RateStudy {
        levels: levels
            .iter()
            .map(|s| LevelRow::new(s, sampler.allocation_variance(s), sr_k))
            .collect(),
        rates,
        regime,
        elapsed_s: t0.elapsed().as_secs_f64(),
    })
}

/// One realisation of the misalignment field on a `grid × grid` lattice of
/// the strength domain, using the truncation of `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub n_terms: usize,
    pub coords: Vec<[f64; 2]>,
    /// Radians, aligned with `coords`.
    pub values: Vec<f64>,
    /// Truncated pointwise variance at each point.
    pub target_variance: Vec<f64>,
}

pub fn sample_field(
    basis: &KlBasis,
    seed: u64,
    n_terms: usize,
    grid: usize,
) -> Result<FieldSnapshot, HarnessError> {
    let grid = grid.max(2);
    let (lx, ly) = (basis.spec.lx, basis.spec.ly);
    let xs: Vec<f64> = (0..grid)
        .map(|i| lx * i as f64 / (grid - 1) as f64)
        .collect();
    let ys: Vec<f64> = (0..grid)
        .map(|j| ly * j as f64 / (grid - 1) as f64)
        .collect();
    let sample = FieldSample::draw(seed, n_terms);
    let values = basis
        .evaluate_grid(&sample.xi, n_terms, &xs, &ys)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let coords: Vec<[f64; 2]> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| [x, y]))
        .collect();
    let target_variance = coords
        .iter()
        .map(|&p| basis.pointwise_variance(n_terms, p))
        .collect();
    Ok(FieldSnapshot {
        n_terms,
        coords,
        values,
        target_variance,
    })
}

/// Summary of an [`MLMCResult`] as a report entry, for callers running the
/// engine directly.
pub fn level_rows(result: &MLMCResult) -> Vec<LevelRow> {
    result
        .levels
        .iter()
        .map(|s| LevelRow::new(s, s.var_y(), None))
        .collect()
}
