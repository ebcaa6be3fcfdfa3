//! The two-level rare-event estimator `Q̂_0 + Ŷ_{L,0}` on a synthetic ladder.
use mlmc_composite::engine::synthetic::SyntheticLadder;
use mlmc_composite::engine::{CostModel, EstimatorConfig};
use mlmc_composite::failure::{two_level_estimate, FailureCriterion, SrConfig};

fn main() {
    let model = SyntheticLadder::buckling_like();
    let sr = SrConfig {
        criterion: FailureCriterion::below(272.0),
        ..Default::default()
    };
    for fine in [2, 4, 6] {
        let cfg = EstimatorConfig {
            tolerance: 1e-3,
            base_seed: 5,
            cost_model: CostModel::Analytic { gamma: 1.0 },
            ..Default::default()
        };
        let r = two_level_estimate(&model, &cfg, &sr, fine).expect("two-level");
        println!(
            "L = {fine}: P = {:.5} ± {:.5}, bias {:.2e} (converged {}), N0 = {}, N_L = {}, work {:.3e}",
            r.estimate, r.sampling_error, r.bias_estimate, r.converged, r.q0.n, r.y.n, r.total_work
        );
    }
}
