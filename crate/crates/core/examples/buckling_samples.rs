//! Perturbed-laminate buckling loads on a few consecutive levels, with
//! per-solve timings. Usage: `buckling_samples [samples] [max_level]`.
use std::time::Instant;

use mlmc_composite::engine::LevelModel;
use mlmc_composite::plate::{BucklingModel, PlateConfig};

fn main() {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let max_level: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let cfg = PlateConfig {
        max_level,
        ..PlateConfig::default()
    };
    let model = BucklingModel::new(cfg).expect("valid config");
    let mut time = vec![0.0; max_level + 1];
    for seed in 0..n {
        let mut sample = model.draw(seed);
        let mut row = Vec::new();
        for level in 0..=max_level {
            let t0 = Instant::now();
            row.push(model.solve(&mut sample, level).expect("solve"));
            time[level] += t0.elapsed().as_secs_f64();
        }
        let txt: Vec<String> = row.iter().map(|l| format!("{l:.4}")).collect();
        println!("sample {seed}: {}", txt.join(" "));
    }
    for (level, t) in time.iter().enumerate() {
        println!("level {level}: {:.4} s per solve", t / n as f64);
    }
}
