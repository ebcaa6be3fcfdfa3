use mlmc_composite::cosserat::{StrengthConfig, StrengthModel};
use mlmc_composite::engine::LevelModel;
use mlmc_composite::harness::empirical_percentile;

fn model(s_phi: f64, level: usize) -> StrengthModel {
    let mut cfg = StrengthConfig::default();
    cfg.field.s_phi = s_phi;
    cfg.domain.max_level = level;
    StrengthModel::new(cfg).unwrap()
}

fn samples(m: &StrengthModel, level: usize, n: u64) -> Vec<f64> {
    (0..n)
        .map(|seed| m.evaluate(level, seed).unwrap().q)
        .collect()
}

#[test]
fn percentile_sits_below_mean() {
    let m = model(0.035, 1);
    let s = samples(&m, 1, 400);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    assert!(empirical_percentile(&s, 0.1) < mean);
    assert!(s.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn more_waviness_means_lower_strength() {
    let means: Vec<f64> = [0.01, 0.035, 0.06]
        .iter()
        .map(|&s| {
            let m = model(s, 1);
            let v = samples(&m, 1, 60);
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn same_draw_shares_field_across_levels() {
    let m = model(0.035, 2);
    let pairs: Vec<(f64, f64)> = (0..40)
        .map(|seed| {
            let mut s = m.draw(seed);
            (m.solve(&mut s, 0).unwrap(), m.solve(&mut s, 2).unwrap())
        })
        .collect();
    let n = pairs.len() as f64;
    let (ma, mb) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let cov: f64 = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum();
    let va: f64 = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum();
    let vb: f64 = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum();
    // coarse and fine see the same leading KL coefficients, so they correlate
    let rho = cov / (va * vb).sqrt();
    assert!(rho > 0.3, "correlation {rho}");
}
