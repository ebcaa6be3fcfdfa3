use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasedProbabilityEstimate {
    pub p_tilde: f64,
    pub k: u64,
    /// `N p̂(1−p̂) / (N p̂ + k)²` with `p̂ = max(x, 1)/N`.
    pub relative_variance_bound: f64,
}

/// `p̃ = (x + k)/(N + k)`: never zero, and an upper bound on the probability
/// when too few samples have been drawn to observe it.
pub fn biased_p(x: u64, n: u64, k: u64) -> BiasedProbabilityEstimate {
    debug_assert!(x <= n && k >= 1);
    let p_tilde = (x + k) as f64 / (n + k) as f64;
    let relative_variance_bound = if n == 0 {
        0.0
    } else {
        let nf = n as f64;
        let p_hat = x.max(1) as f64 / nf;
        nf * p_hat * (1.0 - p_hat) / (nf * p_hat + k as f64).powi(2)
    };
    BiasedProbabilityEstimate {
        p_tilde,
        k,
        relative_variance_bound,
    }
}

/// Mean and variance of a `{−1, 0, +1}` variable with `P(+1) = p₊`, `P(−1) = p₋`.
pub fn trinomial_moments(p_plus: f64, p_minus: f64) -> (f64, f64) {
    let mean = p_plus - p_minus;
    (mean, p_plus + p_minus - mean * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(biased_p(0, 100, 1).p_tilde, 1.0 / 101.0);
        assert_eq!(biased_p(40, 40, 3).p_tilde, 1.0);
        assert_eq!(trinomial_moments(0.0, 0.0), (0.0, 0.0));
        let (m, v) = trinomial_moments(0.1, 0.0);
        assert!((m - 0.1).abs() < 1e-15 && (v - 0.09).abs() < 1e-15);
        assert_eq!(trinomial_moments(0.5, 0.5), (0.0, 1.0));
    }

    #[test]
    fn moments_match_enumeration() {
        for &(pp, pm) in &[(0.2f64, 0.1f64), (0.05, 0.3), (0.6, 0.4)] {
            let p0 = 1.0 - pp - pm;
            let mean = pp - pm;
            let var = pp * (1.0 - mean).powi(2) + pm * (-1.0 - mean).powi(2) + p0 * mean * mean;
            let (m, v) = trinomial_moments(pp, pm);
            assert!((m - mean).abs() < 1e-14 && (v - var).abs() < 1e-14);
        }
    }

    #[test]
    fn relative_variance_bound_below_one() {
        for n in 1..=50u64 {
            for k in [1u64, 2, 5] {
                for i in 1..=99 {
                    let p = i as f64 / 100.0;
                    let nf = n as f64;
                    assert!(nf * p * (1.0 - p) / (nf * p + k as f64).powi(2) < 1.0);
                }
                for x in 0..=n {
                    assert!(biased_p(x, n, k).relative_variance_bound < 1.0);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_in_x_and_k(n in 1u64..500, x in 0u64..500, k in 1u64..10) {
            let x = x.min(n - 1);
            let p = biased_p(x, n, k).p_tilde;
            prop_assert!(biased_p(x + 1, n, k).p_tilde > p);
            prop_assert!(biased_p(x, n, k + 1).p_tilde > p);
            prop_assert!(p >= x as f64 / n as f64);
            prop_assert!(p >= k as f64 / (n + k) as f64);
        }
    }
}
