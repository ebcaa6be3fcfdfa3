//! Compressive strength under random fibre waviness: mean and 10th
//! percentile against the kinking model for several misalignment levels.
//! Usage: `strength_study [samples] [level]`.
use std::time::Instant;

use mlmc_composite::cosserat::{StrengthConfig, StrengthModel};
use mlmc_composite::engine::LevelModel;
use mlmc_composite::harness::empirical_percentile;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let level: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    for s_phi in [0.01, 0.02, 0.035, 0.06] {
        let mut cfg = StrengthConfig::default();
        cfg.field.s_phi = s_phi;
        cfg.domain.max_level = level;
        let model = StrengthModel::new(cfg.clone()).expect("valid config");
        let tau_y = cfg.material.tau_y_mpa;
        let t0 = Instant::now();
        let sigma: Vec<f64> = (0..n)
            .map(|seed| model.evaluate(level, seed).expect("solve").q)
            .collect();
        let secs = t0.elapsed().as_secs_f64() / n as f64;
        let mean = sigma.iter().sum::<f64>() / n as f64;
        let p10 = empirical_percentile(&sigma, 0.1);
        let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
        let bud = cfg.budiansky(s_phi).expect("material") / 1e6;
        println!(
            "s_phi {s_phi:.3}: mean {:.2} p10 {:.2} min {:.2} budiansky {:.2} (sigma/tau_y), {secs:.3}s per sample",
            mean / tau_y,
            p10 / tau_y,
            min / tau_y,
            bud / tau_y
        );
    }
}
