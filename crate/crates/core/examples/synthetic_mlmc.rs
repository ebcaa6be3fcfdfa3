//! Adaptive MLMC on a model with known mean, for a sweep of tolerances.
use mlmc_composite::engine::synthetic::SyntheticModel;
use mlmc_composite::engine::{run_mlmc, CostModel, EstimatorConfig};

fn main() {
    let model = SyntheticModel {
        s0: 0.3,
        ..SyntheticModel::reference()
    };
    let truth = model.q_inf;
    for tol in [4e-2, 2e-2, 1e-2, 5e-3] {
        let cfg = EstimatorConfig {
            tolerance: tol,
            base_seed: 42,
            cost_model: CostModel::Analytic { gamma: 1.0 },
            ..Default::default()
        };
        let r = run_mlmc(&model, &cfg).expect("synthetic model cannot fail");
        println!(
            "e = {tol:.0e}: estimate {:.5} (error {:+.2e}), L = {}, N = {:?}, work {:.3e}",
            r.estimate,
            r.estimate - truth,
            r.finest_level(),
            r.sample_counts(),
            r.total_work
        );
    }
}
