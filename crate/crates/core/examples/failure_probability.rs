//! Buckling failure probability `P(λ < λ*)` by MLMC with selective refinement.
//! Usage: `failure_probability [relative-tolerance] [max-level]`.
use mlmc_composite::engine::{mc_estimate_with, CostModel, EstimatorConfig};
use mlmc_composite::failure::{run_mlmc_sr, FailureCriterion, IndicatorModel, SrConfig};
use mlmc_composite::plate::{BucklingModel, PlateConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let e_rel: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let max_level: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    env_logger::init();
    let cfg = PlateConfig {
        max_level,
        ..Default::default()
    };
    let criterion = FailureCriterion::below(cfg.lambda_star_kn);
    let model = BucklingModel::new(cfg).expect("valid plate");
    let cost = CostModel::Analytic { gamma: 1.15 };

    let pilot = mc_estimate_with(
        &IndicatorModel {
            inner: &model,
            criterion,
        },
        1,
        200,
        77,
        cost,
    )
    .expect("pilot")
    .0;
    let tolerance = e_rel * pilot.max(1e-3);
    println!("pilot P ≈ {pilot:.4} on level 1, tolerance {tolerance:.2e}");
    let ecfg = EstimatorConfig {
        tolerance,
        base_seed: 11,
        cost_model: cost,
        max_level,
        ..Default::default()
    };
    let r = run_mlmc_sr(
        &model,
        &ecfg,
        &SrConfig {
            criterion,
            ..Default::default()
        },
    )
    .expect("mlmc-sr");
    println!(
        "P(λ < {:.2} kN) = {:.4} ± {:.4}, converged {}",
        criterion.threshold, r.estimate, r.sampling_error, r.converged
    );
    for s in &r.levels {
        println!(
            "  level {} (M = {}): N = {}, x+ = {}, x- = {}, {:.3} s/sample, reached {:?}",
            s.level,
            s.dof_count,
            s.n,
            s.x_plus,
            s.x_minus,
            s.cost_per_sample(),
            s.solves_reaching
        );
    }
}
