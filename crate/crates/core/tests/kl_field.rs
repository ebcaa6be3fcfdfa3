use mlmc_composite::cosserat::StrengthConfig;
use mlmc_composite::field::{build_kl_basis, solve_1d_eigenpairs, CovarianceSpec, FieldSample};
use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvalues of the midpoint-rule Nyström discretisation of `exp(-|x-y|/ω)` on `[0, L]`.
fn nystrom(omega: f64, length: f64, points: usize) -> Vec<f64> {
    let h = length / points as f64;
    let x: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) * h).collect();
    let k = DMatrix::from_fn(points, points, |i, j| {
        (-(x[i] - x[j]).abs() / omega).exp() * h
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn analytic_eigenvalues_match_nystrom() {
    let spec = StrengthConfig::default().covariance().unwrap();
    for (omega, len) in [(spec.omega1, spec.lx), (spec.omega2, spec.ly)] {
        let oracle = nystrom(omega, len, 500);
        let modes = solve_1d_eigenpairs(omega, len, 20).unwrap();
        for (i, m) in modes.iter().enumerate() {
            let rel = (m.eigenvalue - oracle[i]).abs() / oracle[i];
            // three significant figures; the O(h²) oracle error is ~1e-3 at mode 20
            assert!(
                rel < 5e-3,
                "ω = {omega:e}, mode {i}: {} vs {}",
                m.eigenvalue,
                oracle[i]
            );
        }
    }
}

#[test]
fn empirical_covariance_matches_truncated_kernel() {
    let spec = CovarianceSpec {
        s_phi: 0.05,
        omega1: 0.4,
        omega2: 0.2,
        lx: 1.0,
        ly: 1.0,
    };
    let n_terms = 200;
    let basis = build_kl_basis(spec, n_terms).unwrap();
    let p = [0.5, 0.5];
    let q = [0.6, 0.55];
    let samples = 4000;
    let (mut spp, mut spq) = (0.0, 0.0);
    for seed in 0..samples {
        let s = FieldSample::draw(seed, n_terms);
        let v = basis.evaluate(&s.xi, n_terms, &[p, q]).unwrap();
        spp += v[0] * v[0];
        spq += v[0] * v[1];
    }
    let n = samples as f64;
    let var = basis.pointwise_variance(n_terms, p);
    // Var of the sample variance estimator is 2σ⁴/N
    assert!(
        (spp / n - var).abs() < 4.0 * var * (2.0 / n).sqrt(),
        "{} vs {var}",
        spp / n
    );
    let cov = spec.kernel(p, q);
    assert!((spq / n - cov).abs() < 0.1 * var, "{} vs {cov}", spq / n);
    // truncation keeps most of the pointwise variance
    assert!(var > 0.9 * spec.s_phi * spec.s_phi);
}

#[test]
fn coefficient_prefix_is_stable_under_truncation_growth() {
    let a = FieldSample::draw(17, 50);
    let b = FieldSample::draw(17, 400);
    assert_eq!(a.xi[..], b.xi[..50]);
}
