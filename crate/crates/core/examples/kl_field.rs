//! KL basis of the misalignment field on the strength domain: spectrum,
//! captured variance per level and one sampled realisation.
//! Usage: `kl_field [seed] [csv-path]`.
use std::io::Write;

use mlmc_composite::cosserat::StrengthConfig;
use mlmc_composite::field::{build_kl_basis, level_truncation, DEFAULT_MAX_MODES};
use mlmc_composite::harness::sample_field;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = StrengthConfig::default();
    let spec = cfg.covariance().expect("valid");
    let basis = build_kl_basis(spec, DEFAULT_MAX_MODES).expect("basis");
    println!(
        "domain {:.3} mm square, omega = ({:.1}, {:.1}) µm",
        spec.lx * 1e3,
        spec.omega1 * 1e6,
        spec.omega2 * 1e6
    );
    for (i, m) in basis.modes.iter().take(8).enumerate() {
        println!("mode {i}: mu = {:.4e} ({}, {})", m.eigenvalue, m.ix, m.iy);
    }
    for level in 0..=4 {
        let n = level_truncation(level, DEFAULT_MAX_MODES);
        let centre = [0.5 * spec.lx, 0.5 * spec.ly];
        println!(
            "level {level}: {n} terms, {:.1}% of the variance, centre sd {:.4} rad (target {:.4})",
            100.0 * basis.captured_fraction(n),
            basis.pointwise_variance(n, centre).sqrt(),
            spec.s_phi
        );
    }
    let f = sample_field(&basis, seed, basis.len(), 41).expect("sample");
    let max = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!(
        "sample {seed}: max |phi| = {max:.4} rad over {} points",
        f.values.len()
    );
    if let Some(path) = args.next() {
        let mut out = std::fs::File::create(&path).expect("create csv");
        writeln!(out, "x,y,phi").unwrap();
        for (p, v) in f.coords.iter().zip(&f.values) {
            writeln!(out, "{},{},{v}", p[0], p[1]).unwrap();
        }
        println!("wrote {path}");
    }
}
