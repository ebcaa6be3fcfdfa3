//! Plain Monte Carlo on the finest level against MLMC at the same tolerance.
use mlmc_composite::engine::synthetic::SyntheticModel;
use mlmc_composite::engine::{mc_estimate_with, run_mlmc, CostModel, EstimatorConfig, LevelModel};

fn main() {
    // smooth random input plus level noise decaying faster than the cost grows
    let model = SyntheticModel {
        s0: 1.0,
        beta: 2.0,
        ..SyntheticModel::reference()
    };
    let cost = CostModel::Analytic { gamma: 1.0 };
    for tol in [2e-2, 1e-2, 5e-3] {
        let cfg = EstimatorConfig {
            tolerance: tol,
            base_seed: 3,
            cost_model: cost,
            ..Default::default()
        };
        let ml = run_mlmc(&model, &cfg).expect("mlmc");
        let level = ml.finest_level();
        let pilot = mc_estimate_with(&model, level, 200, 9, cost)
            .expect("pilot")
            .1;
        let n = (pilot.var_q() / cfg.sampling_tolerance().powi(2)).ceil() as u64;
        let (mc, stats) = mc_estimate_with(&model, level, n, 9, cost).expect("mc");
        println!(
            "e = {tol:.0e}: MLMC {:.4} (work {:.2e}), MC {:.4} with N = {n} on level {level} (work {:.2e}), saving {:.1}",
            ml.estimate,
            ml.total_work,
            mc,
            stats.work,
            stats.work / ml.total_work
        );
        assert_eq!(stats.dof_count, model.dof_count(level));
    }
}
