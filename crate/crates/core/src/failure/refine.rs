use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimators::{biased_p, trinomial_moments};
use super::{indicator, FailureCriterion};
use crate::engine::{
    check_failures, estimate_bias, extend_level, optimal_samples, run_adaptive, sample_seed,
    CostModel, EngineError, EstimatorConfig, LevelModel, LevelSampler, LevelStatistics, MLMCResult,
    ModelError, SampleRecord, Stream,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrConfig {
    pub criterion: FailureCriterion,
    pub m: f64,
    /// Convergence rate used in the per-sample stopping test.
    pub alpha: f64,
    /// Offset of the biased probability estimates.
    pub k: u64,
    /// Treat `Y_ℓ = −1` as impossible (monotone convergence from above) as
    /// long as none has been observed.
    pub one_sided: bool,
    /// Fraction of early-stopped samples re-solved unconditionally to check
    /// the stopping test.
    pub audit_fraction: f64,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            criterion: FailureCriterion::below(0.0),
            m: 4.0,
            alpha: 1.0,
            k: 1,
            one_sided: false,
            audit_fraction: 0.01,
        }
    }
}

impl SrConfig {
    fn divisor(&self) -> f64 {
        self.m.powf(self.alpha) - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectiveRefinementTrace {
    /// `λ_0 … λ_stop`
    pub lambdas: Vec<f64>,
    pub stop_level: usize,
    /// Whether the stopping test fired (as opposed to reaching the requested level).
    pub fired: bool,
    pub lambda_eff: f64,
    pub cost_s: f64,
}

impl SelectiveRefinementTrace {
    pub fn indicator(&self, criterion: &FailureCriterion) -> u8 {
        indicator(self.lambda_eff, criterion).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("selective refinement aborted on level {}: {source}", trace.lambdas.len())]
pub struct SrError {
    pub trace: SelectiveRefinementTrace,
    pub source: ModelError,
}

/// Solves one sample on levels `0, 1, …, level` until, for some `j > 1`,
/// `|λ_j − λ*| ≥ |λ_j − λ_{j−1}| / (m^α − 1)`.
pub fn selective_refine<M: LevelModel>(
    model: &M,
    level: usize,
    criterion: &FailureCriterion,
    m: f64,
    alpha: f64,
    seed: u64,
) -> Result<SelectiveRefinementTrace, SrError> {
    let mut sample = model.draw(seed);
    selective_refine_sample(model, &mut sample, level, criterion, m, alpha)
}

/// [`selective_refine`] on an already drawn sample, which keeps its solver
/// state so that the ladder can be continued past the stopping level.
pub fn selective_refine_sample<M: LevelModel>(
    model: &M,
    sample: &mut M::Sample,
    level: usize,
    criterion: &FailureCriterion,
    m: f64,
    alpha: f64,
) -> Result<SelectiveRefinementTrace, SrError> {
    ladder(
        model,
        sample,
        level,
        criterion.threshold,
        m.powf(alpha) - 1.0,
        Instant::now(),
    )
}

fn ladder<M: LevelModel>(
    model: &M,
    sample: &mut M::Sample,
    level: usize,
    threshold: f64,
    divisor: f64,
    start: Instant,
) -> Result<SelectiveRefinementTrace, SrError> {
    let mut trace = SelectiveRefinementTrace {
        lambdas: Vec::with_capacity(level + 1),
        stop_level: 0,
        fired: false,
        lambda_eff: f64::NAN,
        cost_s: 0.0,
    };
    for j in 0..=level {
        let lam = match model
            .solve(sample, j)
            .and_then(|v| crate::engine::finite(v, j))
        {
            Ok(v) => v,
            Err(source) => {
                trace.cost_s = start.elapsed().as_secs_f64();
                return Err(SrError { trace, source });
            }
        };
        trace.lambdas.push(lam);
        trace.stop_level = j;
        trace.lambda_eff = lam;
        if j > 1 && (lam - threshold).abs() >= (lam - trace.lambdas[j - 1]).abs() / divisor {
            trace.fired = true;
            break;
        }
    }
    trace.cost_s = start.elapsed().as_secs_f64();
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditSummary {
    pub checked: u64,
    pub mismatches: u64,
}

/// Level sampler routing every sample through the selective-refinement ladder.
pub struct SrSampler<'a, M: LevelModel> {
    model: &'a M,
    cfg: SrConfig,
    checked: AtomicU64,
    mismatches: AtomicU64,
}

impl<'a, M: LevelModel> SrSampler<'a, M> {
    pub fn new(model: &'a M, cfg: SrConfig) -> Self {
        Self {
            model,
            cfg,
            checked: AtomicU64::new(0),
            mismatches: AtomicU64::new(0),
        }
    }

    pub fn audit(&self) -> AuditSummary {
        AuditSummary {
            checked: self.checked.load(Ordering::Relaxed),
            mismatches: self.mismatches.load(Ordering::Relaxed),
        }
    }

    fn audited(&self, seed: u64) -> bool {
        // deterministic selection from the sample seed
        let u = (seed.rotate_left(17) ^ 0xa5a5_5a5a_d00d_f00d).wrapping_mul(0x2545_f491_4f6c_dd1d)
            >> 11;
        (u as f64 / (1u64 << 53) as f64) < self.cfg.audit_fraction
    }

    fn ind(&self, v: f64) -> f64 {
        f64::from(indicator(v, &self.cfg.criterion).unwrap_or(0))
    }

    fn p_minus(&self, stats: &LevelStatistics) -> f64 {
        if self.cfg.one_sided && stats.x_minus == 0 {
            0.0
        } else {
            biased_p(stats.x_minus, stats.n, self.cfg.k).p_tilde
        }
    }

    fn p_plus(&self, stats: &LevelStatistics) -> f64 {
        biased_p(stats.x_plus, stats.n, self.cfg.k).p_tilde
    }

    fn p_level0(&self, stats: &LevelStatistics) -> f64 {
        biased_p(stats.sum_q.round() as u64, stats.n, self.cfg.k).p_tilde
    }
}

impl<M: LevelModel> LevelSampler for SrSampler<'_, M> {
    fn max_level(&self) -> usize {
        self.model.max_level()
    }

    fn dof_count(&self, level: usize) -> usize {
        self.model.dof_count(level)
    }

    fn sample(&self, level: usize, seed: u64, cost: CostModel) -> Result<SampleRecord, ModelError> {
        let start = Instant::now();
        let mut sample = self.model.draw(seed);
        let trace = ladder(
            self.model,
            &mut sample,
            level,
            self.cfg.criterion.threshold,
            self.cfg.divisor(),
            start,
        )
        .map_err(|e| e.source)?;
        let fine = self.ind(trace.lambda_eff);
        let coarse = match level {
            0 => 0.0,
            l if trace.stop_level < l => fine,
            l => self.ind(trace.lambdas[l - 1]),
        };
        let work = cost.work(
            (0..=trace.stop_level).map(|j| self.model.dof_count(j)),
            trace.cost_s,
        );

        if trace.stop_level < level && self.audited(seed) {
            let mut lam = trace.lambda_eff;
            for j in trace.stop_level + 1..=level {
                lam = self.model.solve(&mut sample, j)?;
            }
            self.checked.fetch_add(1, Ordering::Relaxed);
            if self.ind(lam) != fine {
                self.mismatches.fetch_add(1, Ordering::Relaxed);
                log::warn!("selective refinement audit mismatch on level {level} (seed {seed})");
            }
        }
        Ok(SampleRecord {
            y: fine - coarse,
            q: fine,
            cost_s: trace.cost_s,
            work,
            top_level: trace.stop_level,
        })
    }

    fn allocation_variance(&self, stats: &LevelStatistics) -> f64 {
        if stats.level == 0 {
            let p = self.p_level0(stats);
            p * (1.0 - p)
        } else {
            let (pp, pm) = (self.p_plus(stats), self.p_minus(stats));
            trinomial_moments(pp, pm).1.max(0.0)
        }
    }

    fn bias_magnitude(&self, stats: &LevelStatistics) -> f64 {
        if stats.level == 0 {
            stats.mean_y().abs()
        } else {
            self.p_plus(stats).max(self.p_minus(stats))
        }
    }
}

/// The adaptive multilevel estimator with every sample evaluated by selective
/// refinement and small probabilities replaced by their biased estimates in
/// the allocation and bias test.
pub fn run_mlmc_sr<M: LevelModel>(
    model: &M,
    config: &EstimatorConfig,
    sr: &SrConfig,
) -> Result<MLMCResult, EngineError> {
    let sampler = SrSampler::new(model, *sr);
    let result = run_adaptive(&sampler, config)?;
    let audit = sampler.audit();
    if audit.mismatches > 0 {
        log::warn!(
            "{} of {} audited early stops disagreed with the full solve",
            audit.mismatches,
            audit.checked
        );
    }
    Ok(result)
}

/// Per-sample expected cost exponent: log-log slope of `(M_ℓ, cost)`.
pub fn sr_cost_exponent(per_level_costs: &[(usize, f64)]) -> f64 {
    let xy: Vec<(f64, f64)> = per_level_costs
        .iter()
        .filter(|(_, c)| *c > 0.0)
        .map(|&(m, c)| ((m as f64).ln(), c.ln()))
        .collect();
    crate::engine::rates_slope(&xy).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLevelResult {
    pub estimate: f64,
    pub fine_level: usize,
    /// Samples of `Q_0`.
    pub q0: LevelStatistics,
    /// Samples of `Y_{L,0} = Q_L − Q_0`, with `Q_L` by selective refinement.
    pub y: LevelStatistics,
    /// `Y_{L,L−1}` from the same ladders, used for the bias estimate.
    pub y_top: LevelStatistics,
    pub bias_estimate: f64,
    pub sampling_error: f64,
    pub converged: bool,
    pub total_cost_s: f64,
    pub total_work: f64,
}

struct CoarseSampler<'a, M: LevelModel>(&'a SrSampler<'a, M>);

impl<M: LevelModel> LevelSampler for CoarseSampler<'_, M> {
    fn max_level(&self) -> usize {
        0
    }
    fn dof_count(&self, level: usize) -> usize {
        self.0.model.dof_count(level)
    }
    fn sample(&self, level: usize, seed: u64, cost: CostModel) -> Result<SampleRecord, ModelError> {
        self.0.sample(level, seed, cost)
    }
}

/// `E[Q] ≈ Q̂_0 + Ŷ_{L,0}` with independent sample sets for the two terms.
pub fn two_level_estimate<M: LevelModel>(
    model: &M,
    config: &EstimatorConfig,
    sr: &SrConfig,
    fine_level: usize,
) -> Result<TwoLevelResult, EngineError> {
    if fine_level < 1 || fine_level > model.max_level() {
        return Err(EngineError::Invalid(format!(
            "fine level must lie in 1..={}",
            model.max_level()
        )));
    }
    if !(config.tolerance > 0.0
        && config.theta > 0.0
        && config.theta < 1.0
        && config.n_initial >= 2)
    {
        return Err(EngineError::Invalid(
            "invalid estimator configuration".into(),
        ));
    }
    let sampler = SrSampler::new(model, *sr);
    let e_s = config.sampling_tolerance();
    let mut q0 = LevelStatistics::new(0, model.dof_count(0));
    let mut y = LevelStatistics::new(fine_level, model.dof_count(fine_level));
    let mut y_top = LevelStatistics::new(fine_level, model.dof_count(fine_level));

    let coarse = CoarseSampler(&sampler);
    extend_level(
        &coarse,
        &mut q0,
        config.n_initial,
        config.base_seed,
        Stream::TwoLevelCoarse,
        config.cost_model,
    )?;
    extend_pairs(&sampler, &mut y, &mut y_top, config.n_initial, config)?;

    let variance = |q0: &LevelStatistics, y: &LevelStatistics| {
        let p = sampler.p_level0(q0);
        [
            p * (1.0 - p),
            trinomial_moments(sampler.p_plus(y), sampler.p_minus(y))
                .1
                .max(0.0),
        ]
    };
    for _ in 0..100 {
        let v = variance(&q0, &y);
        let c = [
            q0.work_per_sample().max(f64::MIN_POSITIVE),
            y.work_per_sample().max(f64::MIN_POSITIVE),
        ];
        let target = optimal_samples(&v, &c, e_s)?;
        if q0.n < target[0].max(2) {
            let add = target[0].max(2) - q0.n;
            extend_level(
                &coarse,
                &mut q0,
                add,
                config.base_seed,
                Stream::TwoLevelCoarse,
                config.cost_model,
            )?;
        }
        if y.n < target[1].max(2) {
            let add = target[1].max(2) - y.n;
            extend_pairs(&sampler, &mut y, &mut y_top, add, config)?;
        }
        let v = variance(&q0, &y);
        if v[0] / q0.n as f64 + v[1] / y.n as f64 <= e_s * e_s * (1.0 + 1e-10) {
            break;
        }
    }
    let v = variance(&q0, &y);
    let alpha = config.alpha_assumed.unwrap_or(sr.alpha);
    let bias_estimate = estimate_bias(sampler.bias_magnitude(&y_top), config.m, alpha)?;
    Ok(TwoLevelResult {
        estimate: q0.mean_q() + y.mean_y(),
        fine_level,
        sampling_error: (v[0] / q0.n as f64 + v[1] / y.n as f64).sqrt(),
        converged: bias_estimate <= config.bias_tolerance(),
        total_cost_s: q0.cost_s + y.cost_s,
        total_work: q0.work + y.work,
        bias_estimate,
        q0,
        y,
        y_top,
    })
}

fn extend_pairs<M: LevelModel>(
    sampler: &SrSampler<'_, M>,
    y: &mut LevelStatistics,
    y_top: &mut LevelStatistics,
    count: u64,
    config: &EstimatorConfig,
) -> Result<(), EngineError> {
    let level = y.level;
    let start = y.n + y.failed;
    let model = sampler.model;
    let records: Vec<_> = (start..start + count)
        .into_par_iter()
        .map(|j| {
            let seed = sample_seed(config.base_seed, Stream::TwoLevelPair, level, j);
            let t0 = Instant::now();
            let mut s = model.draw(seed);
            ladder(
                model,
                &mut s,
                level,
                sampler.cfg.criterion.threshold,
                sampler.cfg.divisor(),
                t0,
            )
            .map_err(|e| e.source)
        })
        .collect();
    let mut first = None;
    for (offset, r) in records.into_iter().enumerate() {
        let trace = match r {
            Ok(t) => t,
            Err(source) => {
                let index = start + offset as u64;
                log::warn!("pair {index} on level {level} failed and is skipped: {source}");
                y.failed += 1;
                y_top.failed += 1;
                first.get_or_insert(EngineError::Model {
                    level,
                    index,
                    source,
                });
                continue;
            }
        };
        let fine = sampler.ind(trace.lambda_eff);
        let q0 = sampler.ind(trace.lambdas[0]);
        let below = if trace.stop_level < level {
            fine
        } else {
            sampler.ind(trace.lambdas[level - 1])
        };
        let work = config.cost_model.work(
            (0..=trace.stop_level).map(|j| model.dof_count(j)),
            trace.cost_s,
        );
        y.push(fine - q0, fine, trace.cost_s, work, trace.stop_level);
        y_top.push(fine - below, fine, 0.0, 0.0, trace.stop_level);
    }
    check_failures(y, first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::synthetic::SyntheticLadder;
    use crate::engine::{mc_estimate_with, LevelModel};

    /// Replays a fixed λ ladder.
    struct Trace(Vec<f64>);

    impl LevelModel for Trace {
        type Sample = ();
        fn max_level(&self) -> usize {
            self.0.len() - 1
        }
        fn dof_count(&self, level: usize) -> usize {
            100 << (2 * level)
        }
        fn draw(&self, _: u64) {}
        fn solve(&self, _: &mut (), level: usize) -> Result<f64, ModelError> {
            Ok(self.0[level])
        }
    }

    #[test]
    fn stops_when_far_from_threshold() {
        let t = selective_refine(
            &Trace(vec![10.0, 9.7, 9.5, 9.4]),
            3,
            &FailureCriterion::below(9.0),
            4.0,
            1.0,
            0,
        )
        .unwrap();
        assert_eq!(t.stop_level, 2);
        assert!(t.fired);
        assert_eq!(t.lambda_eff, 9.5);
    }

    #[test]
    fn continues_near_threshold() {
        // |λ_2 − λ*| = 0.05 < 0.2/3
        let t = selective_refine(
            &Trace(vec![10.0, 9.7, 9.5, 9.45]),
            3,
            &FailureCriterion::below(9.45),
            4.0,
            1.0,
            0,
        )
        .unwrap();
        assert_eq!(t.stop_level, 3);
        assert_eq!(t.lambdas.len(), 4);
    }

    #[test]
    fn never_tests_before_level_two() {
        let t = selective_refine(
            &Trace(vec![100.0, 50.0, 49.0]),
            1,
            &FailureCriterion::below(0.0),
            4.0,
            1.0,
            0,
        )
        .unwrap();
        assert_eq!(t.stop_level, 1);
        assert!(!t.fired);
    }

    #[test]
    fn sr_matches_full_solves_on_monotone_ladder() {
        let model = SyntheticLadder::buckling_like();
        let crit = FailureCriterion::below(283.0);
        for seed in 0..500 {
            let t = selective_refine(&model, 5, &crit, 4.0, 1.0, seed).unwrap();
            let mut s = model.draw(seed);
            let full = model.solve(&mut s, 5).unwrap();
            assert_eq!(t.indicator(&crit), indicator(full, &crit).unwrap());
        }
    }

    #[test]
    fn never_failing_criterion_gives_zero() {
        let model = SyntheticLadder::buckling_like();
        let sr = SrConfig {
            criterion: FailureCriterion::below(100.0),
            one_sided: true,
            ..Default::default()
        };
        let cfg = EstimatorConfig {
            tolerance: 0.05,
            alpha_assumed: Some(1.0),
            ..Default::default()
        };
        let r = run_mlmc_sr(&model, &cfg, &sr).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.converged);
        assert_eq!(r.levels.len(), 2);
    }

    #[test]
    fn sr_and_mc_agree() {
        let model = SyntheticLadder::buckling_like();
        let sr = SrConfig {
            criterion: FailureCriterion::below(283.0),
            one_sided: true,
            audit_fraction: 0.2,
            ..Default::default()
        };
        let cfg = EstimatorConfig {
            tolerance: 0.01,
            alpha_assumed: Some(1.0),
            base_seed: 3,
            ..Default::default()
        };
        let sampler = SrSampler::new(&model, sr);
        let r = run_adaptive(&sampler, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(sampler.audit().mismatches, 0);
        assert!(r.levels.iter().all(|s| s.x_minus == 0));
        let level = r.finest_level();
        let ind = crate::failure::IndicatorModel {
            inner: &model,
            criterion: sr.criterion,
        };
        let (p_mc, st) = mc_estimate_with(&ind, level, 20_000, 11, CostModel::Measured).unwrap();
        let se_mc = (st.var_q() / st.n as f64).sqrt();
        let tol = 1.96 * (se_mc.powi(2) + r.sampling_error.powi(2)).sqrt() + r.bias_estimate;
        assert!(
            (r.estimate - p_mc).abs() <= tol,
            "{} vs {p_mc} (tol {tol})",
            r.estimate
        );
    }

    #[test]
    fn two_level_matches_multilevel() {
        let model = SyntheticLadder::buckling_like();
        let sr = SrConfig {
            criterion: FailureCriterion::below(283.0),
            one_sided: true,
            ..Default::default()
        };
        let cfg = EstimatorConfig {
            tolerance: 0.01,
            alpha_assumed: Some(1.0),
            base_seed: 5,
            ..Default::default()
        };
        let a = run_mlmc_sr(&model, &cfg, &sr).unwrap();
        let b = two_level_estimate(&model, &cfg, &sr, a.finest_level()).unwrap();
        let tol = 3.0 * (a.sampling_error.powi(2) + b.sampling_error.powi(2)).sqrt();
        assert!(
            (a.estimate - b.estimate).abs() <= tol,
            "{} vs {}",
            a.estimate,
            b.estimate
        );
        assert_eq!(b.y.x_minus, 0);
    }

    #[test]
    fn two_level_on_deterministic_ladder_is_exact() {
        let model = Trace(vec![10.0, 9.2, 8.9, 8.8]);
        let sr = SrConfig {
            criterion: FailureCriterion::below(9.0),
            ..Default::default()
        };
        let cfg = EstimatorConfig {
            tolerance: 0.1,
            ..Default::default()
        };
        let r = two_level_estimate(&model, &cfg, &sr, 3).unwrap();
        assert_eq!(r.estimate, 1.0);
    }

    #[test]
    fn cost_exponent_of_plateau_and_full_ladders() {
        let flat: Vec<(usize, f64)> = (2..6).map(|l| (100usize << (2 * l), 5.0)).collect();
        assert!(sr_cost_exponent(&flat).abs() < 1e-12);
        let growing: Vec<(usize, f64)> = (2..6)
            .map(|l| {
                (
                    100usize << (2 * l),
                    ((100usize << (2 * l)) as f64).powf(1.17),
                )
            })
            .collect();
        assert!((sr_cost_exponent(&growing) - 1.17).abs() < 1e-12);
    }
}
