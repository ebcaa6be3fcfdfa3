use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rates::{estimate_rates, LevelPoint};
use super::stats::LevelStatistics;
use super::{sample_seed, EngineError, LevelModel, ModelError, Stream};

/// How the per-sample cost `C_ℓ` entering the sample allocation is measured.
///
/// `Analytic` charges `M_j^γ` for every level `j` solved, which keeps the
/// allocation (and therefore the whole result) independent of machine load
/// and worker count. Wall-clock time is recorded in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    Analytic { gamma: f64 },
    Measured,
}

impl CostModel {
    pub fn work(&self, solved_dofs: impl IntoIterator<Item = usize>, wall_s: f64) -> f64 {
        match *self {
            CostModel::Analytic { gamma } => solved_dofs
                .into_iter()
                .map(|m| (m as f64).powf(gamma))
                .sum(),
            CostModel::Measured => wall_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Root-mean-square error target `e`, in units of the quantity of interest.
    pub tolerance: f64,
    /// Share of the squared error given to sampling: `e_s² = θ e²`.
    pub theta: f64,
    /// Warm-up samples `N*` on each new level.
    pub n_initial: u64,
    pub m: f64,
    pub alpha_assumed: Option<f64>,
    pub max_level: usize,
    pub base_seed: u64,
    pub cost_model: CostModel,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-2,
            theta: 0.5,
            n_initial: 50,
            m: 4.0,
            alpha_assumed: None,
            max_level: 10,
            base_seed: 0,
            cost_model: CostModel::Analytic { gamma: 1.0 },
        }
    }
}

impl EstimatorConfig {
    pub fn sampling_tolerance(&self) -> f64 {
        self.theta.sqrt() * self.tolerance
    }

    pub fn bias_tolerance(&self) -> f64 {
        (1.0 - self.theta).sqrt() * self.tolerance
    }

    fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Invalid(m.to_string()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0, 1)");
        }
        if self.n_initial < 2 {
            return bad("at least two warm-up samples are needed to estimate a variance");
        }
        if !(self.m > 1.0) {
            return bad("refinement factor must exceed 1");
        }
        if let Some(a) = self.alpha_assumed {
            if !(a > 0.0) {
                return bad("alpha must be positive");
            }
        }
        if let CostModel::Analytic { gamma } = self.cost_model {
            if !(gamma >= 0.0) {
                return bad("cost exponent must be non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MLMCResult {
    pub estimate: f64,
    pub levels: Vec<LevelStatistics>,
    pub bias_estimate: f64,
    pub sampling_error: f64,
    pub total_cost_s: f64,
    pub total_work: f64,
    pub converged: bool,
    /// Rate used in the bias test of the final iteration.
    pub alpha: f64,
    /// Bias constant `c` of the over-estimate, fixed at 1.
    pub bias_constant: f64,
    pub diagnostic: Option<String>,
}

impl MLMCResult {
    pub fn finest_level(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn sample_counts(&self) -> Vec<u64> {
        self.levels.iter().map(|s| s.n).collect()
    }
}

/// One realisation of `Y_ℓ` on some level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub y: f64,
    /// The fine member `Q_ℓ`.
    pub q: f64,
    pub cost_s: f64,
    pub work: f64,
    /// Highest level actually solved for this sample.
    pub top_level: usize,
}

/// The per-level sampling strategy driven by [`run_adaptive`].
pub trait LevelSampler: Sync {
    fn max_level(&self) -> usize;
    fn dof_count(&self, level: usize) -> usize;
    fn sample(&self, level: usize, seed: u64, cost: CostModel) -> Result<SampleRecord, ModelError>;

    /// Variance `V_ℓ` used for the sample allocation.
    fn allocation_variance(&self, stats: &LevelStatistics) -> f64 {
        stats.var_y()
    }

    /// Estimate of `|E[Y_L]|` used in the bias test.
    fn bias_magnitude(&self, stats: &LevelStatistics) -> f64 {
        stats.mean_y().abs()
    }
}

/// Plain MLMC: `Y_ℓ = Q_ℓ − Q_{ℓ−1}` from one shared draw.
pub struct PairSampler<'a, M: LevelModel>(pub &'a M);

impl<M: LevelModel> LevelSampler for PairSampler<'_, M> {
    fn max_level(&self) -> usize {
        self.0.max_level()
    }

    fn dof_count(&self, level: usize) -> usize {
        self.0.dof_count(level)
    }

    fn sample(&self, level: usize, seed: u64, cost: CostModel) -> Result<SampleRecord, ModelError> {
        let p = self.0.evaluate_pair(level, seed)?;
        let solved = (level.saturating_sub(1)..=level).map(|l| self.0.dof_count(l));
        Ok(SampleRecord {
            y: p.y(),
            q: p.fine,
            cost_s: p.cost_s,
            work: cost.work(solved, p.cost_s),
            top_level: level,
        })
    }
}

/// `N_ℓ = ⌈e_s⁻² (Σ_k √(V_k C_k)) √(V_ℓ/C_ℓ)⌉`, at least 1.
pub fn optimal_samples(
    variances: &[f64],
    costs: &[f64],
    e_s: f64,
) -> Result<Vec<u64>, EngineError> {
    if variances.is_empty() || variances.len() != costs.len() {
        return Err(EngineError::Invalid(
            "variances and costs must be non-empty and of equal length".into(),
        ));
    }
    if variances.iter().any(|v| !(*v >= 0.0)) || costs.iter().any(|c| !(*c > 0.0)) || !(e_s > 0.0) {
        return Err(EngineError::Invalid("need V ≥ 0, C > 0 and e_s > 0".into()));
    }
    let total: f64 = variances
        .iter()
        .zip(costs)
        .map(|(v, c)| (v * c).sqrt())
        .sum();
    Ok(variances
        .iter()
        .zip(costs)
        .map(|(v, c)| {
            let x = total * (v / c).sqrt() / (e_s * e_s);
            // guard against ceil() of a value that is integral up to rounding
            ((x * (1.0 - 1e-12)).ceil() as u64).max(1)
        })
        .collect())
}

/// Over-estimate of the discretisation bias on the finest level,
/// `|Ȳ_L| / (m^α − 1)`.
pub fn estimate_bias(mean_y_l: f64, m: f64, alpha: f64) -> Result<f64, EngineError> {
    let d = m.powf(alpha) - 1.0;
    if !(d > 0.0) || !(alpha > 0.0) {
        return Err(EngineError::Invalid(format!(
            "m^α must exceed 1 (m = {m}, α = {alpha})"
        )));
    }
    Ok(mean_y_l.abs() / d)
}

/// Standard Monte Carlo on one level; work is wall-clock time.
pub fn mc_estimate<M: LevelModel>(
    model: &M,
    level: usize,
    n: u64,
    seed: u64,
) -> Result<(f64, LevelStatistics), EngineError> {
    mc_estimate_with(model, level, n, seed, CostModel::Measured)
}

pub fn mc_estimate_with<M: LevelModel>(
    model: &M,
    level: usize,
    n: u64,
    seed: u64,
    cost: CostModel,
) -> Result<(f64, LevelStatistics), EngineError> {
    if n == 0 {
        return Err(EngineError::Invalid("N must be at least 1".into()));
    }
    let sampler = SingleLevel(model);
    let mut stats = LevelStatistics::new(level, model.dof_count(level));
    extend_level(&sampler, &mut stats, n, seed, Stream::MonteCarlo, cost)?;
    Ok((stats.mean_y(), stats))
}

struct SingleLevel<'a, M: LevelModel>(&'a M);

impl<M: LevelModel> LevelSampler for SingleLevel<'_, M> {
    fn max_level(&self) -> usize {
        self.0.max_level()
    }

    fn dof_count(&self, level: usize) -> usize {
        self.0.dof_count(level)
    }

    fn sample(&self, level: usize, seed: u64, cost: CostModel) -> Result<SampleRecord, ModelError> {
        let e = self.0.evaluate(level, seed)?;
        Ok(SampleRecord {
            y: e.q,
            q: e.q,
            cost_s: e.cost_s,
            work: cost.work([self.0.dof_count(level)], e.cost_s),
            top_level: level,
        })
    }
}

/// Largest fraction of failed samples on a level that a run tolerates.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Draws samples `stats.n .. stats.n + count` on `stats.level` in parallel and
/// merges them in index order.
///
/// A failed sample is logged and skipped. Once failures exceed
/// [`MAX_FAILURE_FRACTION`] of the samples attempted on the level, the first
/// failure of this batch is returned as the error.
pub fn extend_level<S: LevelSampler + ?Sized>(
    sampler: &S,
    stats: &mut LevelStatistics,
    count: u64,
    base_seed: u64,
    stream: Stream,
    cost: CostModel,
) -> Result<(), EngineError> {
    let level = stats.level;
    let start = stats.n + stats.failed;
    let records: Vec<_> = (start..start + count)
        .into_par_iter()
        .map(|j| sampler.sample(level, sample_seed(base_seed, stream, level, j), cost))
        .collect();
    let mut first = None;
    for (offset, r) in records.into_iter().enumerate() {
        match r {
            Ok(r) => stats.push(r.y, r.q, r.cost_s, r.work, r.top_level),
            Err(source) => {
                let index = start + offset as u64;
                log::warn!("sample {index} on level {level} failed and is skipped: {source}");
                stats.failed += 1;
                first.get_or_insert(EngineError::Model {
                    level,
                    index,
                    source,
                });
            }
        }
    }
    check_failures(stats, first)
}

pub(crate) fn check_failures(
    stats: &LevelStatistics,
    first: Option<EngineError>,
) -> Result<(), EngineError> {
    match first {
        Some(e) if stats.failed as f64 > MAX_FAILURE_FRACTION * (stats.n + stats.failed) as f64 => {
            Err(e)
        }
        _ => Ok(()),
    }
}

/// Multilevel Monte Carlo with on-the-fly level extension.
pub fn run_mlmc<M: LevelModel>(
    model: &M,
    config: &EstimatorConfig,
) -> Result<MLMCResult, EngineError> {
    run_adaptive(&PairSampler(model), config)
}

/// The adaptive multilevel loop: add a level, warm it up with `N*` samples,
/// top every level up to the optimal allocation, and stop once the bias
/// estimate on the finest level is within `e_b`.
pub fn run_adaptive<S: LevelSampler + ?Sized>(
    sampler: &S,
    config: &EstimatorConfig,
) -> Result<MLMCResult, EngineError> {
    config.validate()?;
    let e_s = config.sampling_tolerance();
    let e_b = config.bias_tolerance();
    let finest = config.max_level.min(sampler.max_level());
    let mut levels: Vec<LevelStatistics> = Vec::new();
    let mut converged = false;
    let mut bias = f64::INFINITY;
    let mut alpha = config.alpha_assumed.unwrap_or(1.0);
    let mut diagnostic = None;

    for l in 0..=finest {
        let mut stats = LevelStatistics::new(l, sampler.dof_count(l));
        extend_level(
            sampler,
            &mut stats,
            config.n_initial,
            config.base_seed,
            Stream::Multilevel,
            config.cost_model,
        )?;
        levels.push(stats);
        top_up(sampler, &mut levels, config, e_s)?;

        if l == 0 {
            continue;
        }
        alpha = config
            .alpha_assumed
            .unwrap_or_else(|| estimated_alpha(sampler, &levels));
        bias = estimate_bias(sampler.bias_magnitude(&levels[l]), config.m, alpha)?;
        log::info!(
            "level {l} added: N = {:?}, bias estimate {bias:.4e} (e_b = {e_b:.4e}, α = {alpha:.3})",
            levels.iter().map(|s| s.n).collect::<Vec<_>>()
        );
        if bias <= e_b {
            converged = true;
            break;
        }
    }
    if !converged {
        diagnostic = Some(format!(
            "finest available level {finest} reached with bias estimate {bias:.4e} > e_b = {e_b:.4e}"
        ));
    }
    Ok(summarise(
        sampler, levels, bias, alpha, converged, diagnostic,
    ))
}

fn top_up<S: LevelSampler + ?Sized>(
    sampler: &S,
    levels: &mut [LevelStatistics],
    config: &EstimatorConfig,
    e_s: f64,
) -> Result<(), EngineError> {
    // Variances move as samples are added, so re-allocate until the sampling
    // constraint holds on the recorded statistics.
    for _ in 0..100 {
        let vars: Vec<f64> = levels
            .iter()
            .map(|s| sampler.allocation_variance(s))
            .collect();
        let costs: Vec<f64> = levels
            .iter()
            .map(|s| s.work_per_sample().max(f64::MIN_POSITIVE))
            .collect();
        let target = optimal_samples(&vars, &costs, e_s)?;
        log::debug!("allocation target {target:?}");
        for (stats, &n_hat) in levels.iter_mut().zip(&target) {
            let n_hat = n_hat.max(2);
            if stats.n < n_hat {
                extend_level(
                    sampler,
                    stats,
                    n_hat - stats.n,
                    config.base_seed,
                    Stream::Multilevel,
                    config.cost_model,
                )?;
            }
        }
        if sampling_variance(sampler, levels) <= e_s * e_s * (1.0 + 1e-10) {
            return Ok(());
        }
    }
    log::warn!("sample allocation did not settle after 100 rounds");
    Ok(())
}

fn sampling_variance<S: LevelSampler + ?Sized>(sampler: &S, levels: &[LevelStatistics]) -> f64 {
    levels
        .iter()
        .map(|s| sampler.allocation_variance(s) / s.n as f64)
        .sum()
}

fn estimated_alpha<S: LevelSampler + ?Sized>(sampler: &S, levels: &[LevelStatistics]) -> f64 {
    if levels.len() < 4 {
        return 1.0;
    }
    let points: Vec<LevelPoint> = levels[1..]
        .iter()
        .map(|s| LevelPoint {
            dof_count: s.dof_count,
            mean_y: sampler.bias_magnitude(s),
            var_y: sampler.allocation_variance(s),
            cost: s.work_per_sample(),
        })
        .collect();
    match estimate_rates(&points) {
        Ok(r) if r.alpha.is_finite() => r.alpha.clamp(0.25, 4.0),
        _ => 1.0,
    }
}

fn summarise<S: LevelSampler + ?Sized>(
    sampler: &S,
    levels: Vec<LevelStatistics>,
    bias: f64,
    alpha: f64,
    converged: bool,
    diagnostic: Option<String>,
) -> MLMCResult {
    MLMCResult {
        estimate: levels.iter().map(|s| s.mean_y()).sum(),
        sampling_error: sampling_variance(sampler, &levels).sqrt(),
        total_cost_s: levels.iter().map(|s| s.cost_s).sum(),
        total_work: levels.iter().map(|s| s.work).sum(),
        bias_estimate: bias,
        levels,
        converged,
        alpha,
        bias_constant: 1.0,
        diagnostic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::synthetic::SyntheticModel;
    use proptest::prelude::*;

    struct Constant(f64);

    impl LevelModel for Constant {
        type Sample = ();
        fn max_level(&self) -> usize {
            3
        }
        fn dof_count(&self, level: usize) -> usize {
            10 << (2 * level)
        }
        fn draw(&self, _: u64) {}
        fn solve(&self, _: &mut (), _: usize) -> Result<f64, ModelError> {
            Ok(self.0)
        }
    }

    /// Fails on every sample whose seed is divisible by `every`.
    struct Flaky(u64);

    impl LevelModel for Flaky {
        type Sample = u64;
        fn max_level(&self) -> usize {
            0
        }
        fn dof_count(&self, _: usize) -> usize {
            1
        }
        fn draw(&self, seed: u64) -> u64 {
            seed
        }
        fn solve(&self, s: &mut u64, level: usize) -> Result<f64, ModelError> {
            if *s % self.0 == 0 {
                Err(ModelError::NonFinite { level })
            } else {
                Ok(1.0)
            }
        }
    }

    #[test]
    fn rare_failures_are_skipped_frequent_ones_abort() {
        let (est, stats) = mc_estimate(&Flaky(1000), 0, 2000, 3).unwrap();
        assert_eq!(est, 1.0);
        assert!(stats.failed <= 20);
        assert_eq!(stats.n + stats.failed, 2000);
        assert!(matches!(
            mc_estimate(&Flaky(10), 0, 2000, 3),
            Err(EngineError::Model { .. })
        ));
    }

    #[test]
    fn constant_model_mc() {
        let (est, stats) = mc_estimate(&Constant(7.0), 0, 10, 1).unwrap();
        assert_eq!(est, 7.0);
        assert_eq!(stats.var_y(), 0.0);
    }

    #[test]
    fn noise_free_model_converges_at_level_one() {
        let r = run_mlmc(
            &Constant(3.5),
            &EstimatorConfig {
                tolerance: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.levels.len(), 2);
        assert_eq!(r.levels[1].mean_y(), 0.0);
        assert_eq!(r.estimate, 3.5);
    }

    #[test]
    fn optimal_samples_examples() {
        let n = optimal_samples(&[1.0, 0.25], &[1.0, 4.0], 0.1).unwrap();
        assert_eq!(n, vec![200, 50]);
        let sv: f64 = [1.0, 0.25].iter().zip(&n).map(|(v, n)| v / *n as f64).sum();
        assert!((sv - 0.01).abs() < 1e-15);
        assert_eq!(optimal_samples(&[2.0], &[3.0], 0.1).unwrap(), vec![200]);
        assert_eq!(
            optimal_samples(&[1.0, 0.0], &[1.0, 4.0], 0.1).unwrap()[1],
            1
        );
        assert!(optimal_samples(&[], &[], 0.1).is_err());
    }

    #[test]
    fn bias_examples() {
        assert!((estimate_bias(0.03, 4.0, 1.0).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(estimate_bias(0.0, 4.0, 0.7).unwrap(), 0.0);
        assert!((estimate_bias(0.09, 2.0, 1.0).unwrap() - 0.09).abs() < 1e-15);
        assert!(estimate_bias(0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn mc_is_deterministic_per_seed() {
        let m = SyntheticModel::reference();
        let a = mc_estimate_with(&m, 2, 500, 9, CostModel::Analytic { gamma: 1.0 }).unwrap();
        let b = mc_estimate_with(&m, 2, 500, 9, CostModel::Analytic { gamma: 1.0 }).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.sum_y2.to_bits(), b.1.sum_y2.to_bits());
    }

    #[test]
    fn sampling_constraint_holds_after_convergence() {
        let m = SyntheticModel::reference();
        for seed in 0..5 {
            let cfg = EstimatorConfig {
                tolerance: 5e-3,
                base_seed: seed,
                ..Default::default()
            };
            let r = run_mlmc(&m, &cfg).unwrap();
            let sv: f64 = r.levels.iter().map(|s| s.var_y() / s.n as f64).sum();
            assert!(sv <= cfg.theta * cfg.tolerance.powi(2) * (1.0 + 1e-9));
            assert!((r.sampling_error.powi(2) - sv).abs() <= 1e-12 * sv.max(1e-300));
            assert!((r.estimate - r.levels.iter().map(|s| s.mean_y()).sum::<f64>()).abs() == 0.0);
        }
    }

    fn cost_of(n: &[u64], c: &[f64]) -> f64 {
        n.iter().zip(c).map(|(n, c)| *n as f64 * c).sum()
    }

    proptest! {
        #[test]
        fn allocation_meets_constraint_and_is_near_optimal(
            raw in proptest::collection::vec((1e-4f64..10.0, 0.1f64..100.0), 1..6),
            e_s in 0.01f64..0.5,
        ) {
            let (v, c): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let n = optimal_samples(&v, &c, e_s).unwrap();
            let sv: f64 = v.iter().zip(&n).map(|(v, n)| v / *n as f64).sum();
            prop_assert!(sv <= e_s * e_s * (1.0 + 1e-9));
            let base = cost_of(&n, &c);
            // remove one sample from a level and add the fewest samples elsewhere that restore feasibility
            for i in 0..n.len() {
                if n[i] <= 1 { continue; }
                for k in 0..n.len() {
                    if k == i { continue; }
                    let mut p = n.clone();
                    p[i] -= 1;
                    let cap = 1000 * n[k] + 1000;
                    while v.iter().zip(&p).map(|(v, n)| v / *n as f64).sum::<f64>() > e_s * e_s && p[k] < cap {
                        p[k] += 1;
                    }
                    if p[k] >= cap { continue; }
                    let max_c = c.iter().cloned().fold(0.0, f64::max);
                    prop_assert!(cost_of(&p, &c) >= base - max_c * (1.0 + 1e-9));
                }
            }
        }
    }
}
