//! Convergence and cost rates from level statistics, and the resulting
//! complexity regime.
use mlmc_composite::engine::synthetic::SyntheticModel;
use mlmc_composite::engine::{
    complexity_regime, estimate_rates, CostModel, LevelModel, LevelPoint,
};

fn main() {
    for (beta, gamma) in [(2.0, 1.0), (1.0, 1.0), (0.74, 1.2)] {
        let model = SyntheticModel {
            alpha: 0.8,
            beta,
            ..SyntheticModel::reference()
        };
        let cost = CostModel::Analytic { gamma };
        let points: Vec<LevelPoint> = (1..=5)
            .map(|l| {
                // pair statistics from the shared draws of levels l and l−1
                let ys: Vec<f64> = (0..4000)
                    .map(|i| {
                        model
                            .evaluate_pair(l, 1000 * l as u64 + i)
                            .expect("pair")
                            .y()
                    })
                    .collect();
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
                let work = cost.work([model.dof_count(l), model.dof_count(l - 1)], 0.0);
                LevelPoint {
                    dof_count: model.dof_count(l),
                    mean_y: mean,
                    var_y: var,
                    cost: work,
                }
            })
            .collect();
        let r = estimate_rates(&points).expect("fit");
        let (regime, kappa) = complexity_regime(r.alpha, r.beta, r.gamma);
        println!("true (0.8, {beta}, {gamma}) -> fitted ({:.2}, {:.2}, {:.2}): {regime:?}, cost ~ e^-{kappa:.2}", r.alpha, r.beta, r.gamma);
    }
}
