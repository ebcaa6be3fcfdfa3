//! Analytic eigenpairs of the 1D exponential kernel `exp(-|x - y| / ω)` on `[0, L]`.
//!
//! With `a = L/2`, `c = 1/ω` and the interval shifted to `[-a, a]`, the
//! eigenfunctions are `cos(w x)` (even) or `sin(w x)` (odd) with eigenvalue
//! `2c / (w² + c²)`, where `w` solves `c cos(wa) = w sin(wa)` (even) or
//! `w cos(wa) = -c sin(wa)` (odd). The `n`-th root overall (0-based) lies in
//! `(nπ/2a, (n+1)π/2a)` and has parity `n mod 2`, so the roots interlace and
//! every bracket holds exactly one sign change.

use std::f64::consts::PI;

use super::FieldError;

const ROOT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parity {
    Even,
    Odd,
}

/// One 1D eigenpair on `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode1d {
    pub eigenvalue: f64,
    pub frequency: f64,
    pub parity: Parity,
    /// L²-normalisation factor of the trigonometric eigenfunction.
    pub scale: f64,
    half_length: f64,
}

impl Mode1d {
    /// Eigenfunction at `x ∈ [0, L]`.
    pub fn eval(&self, x: f64) -> f64 {
        let s = x - self.half_length;
        match self.parity {
            Parity::Even => self.scale * (self.frequency * s).cos(),
            Parity::Odd => self.scale * (self.frequency * s).sin(),
        }
    }
}

/// The `n` largest eigenpairs of `∫_0^L exp(-|x-y|/ω) φ(y) dy = μ φ(x)`,
/// in decreasing order of `μ`.
pub fn solve_1d_eigenpairs(omega: f64, length: f64, n: usize) -> Result<Vec<Mode1d>, FieldError> {
    if !(omega > 0.0) || !(length > 0.0) {
        return Err(FieldError::InvalidSpec(format!(
            "correlation length {omega} and extent {length} must be positive"
        )));
    }
    let a = 0.5 * length;
    let c = 1.0 / omega;
    (0..n)
        .map(|k| {
            let parity = if k % 2 == 0 {
                Parity::Even
            } else {
                Parity::Odd
            };
            let f = |w: f64| match parity {
                Parity::Even => c * (w * a).cos() - w * (w * a).sin(),
                Parity::Odd => w * (w * a).cos() + c * (w * a).sin(),
            };
            let lo = k as f64 * PI / (2.0 * a);
            let hi = (k + 1) as f64 * PI / (2.0 * a);
            let w = bisect(f, lo, hi)?;
            let s2 = (2.0 * w * a).sin() / (2.0 * w);
            let norm2 = match parity {
                Parity::Even => a + s2,
                Parity::Odd => a - s2,
            };
            Ok(Mode1d {
                eigenvalue: 2.0 * c / (w * w + c * c),
                frequency: w,
                parity,
                scale: norm2.sqrt().recip(),
                half_length: a,
            })
        })
        .collect()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64, FieldError> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(FieldError::Bracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= ROOT_RTOL * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partial_sums_rise_towards_trace() {
        let modes = solve_1d_eigenpairs(0.3, 2.0, 400).unwrap();
        let mut sum = 0.0;
        for m in &modes {
            sum += m.eigenvalue;
            assert!(sum < 2.0);
        }
        assert!(sum > 0.99 * 2.0, "{sum}");
        assert!(modes.windows(2).all(|p| p[0].eigenvalue > p[1].eigenvalue));
    }

    #[test]
    fn long_correlation_is_nearly_constant() {
        let modes = solve_1d_eigenpairs(1e4, 1.0, 3).unwrap();
        assert_relative_eq!(modes[0].eigenvalue, 1.0, max_relative = 1e-3);
        assert!(modes[1].eigenvalue / modes[0].eigenvalue < 1e-3);
    }

    #[test]
    fn eigenfunctions_are_normalised_and_orthogonal() {
        let len = 3.0;
        let modes = solve_1d_eigenpairs(0.7, len, 12).unwrap();
        // composite Gauss–Legendre, 4 points on each of 400 cells
        let g = [
            (-0.861136311594053, 0.347854845137454),
            (-0.339981043584856, 0.652145154862546),
            (0.339981043584856, 0.652145154862546),
            (0.861136311594053, 0.347854845137454),
        ];
        let cells = 400;
        let h = len / cells as f64;
        let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
            (0..cells)
                .map(|c| {
                    g.iter()
                        .map(|(x, w)| w * f((c as f64 + 0.5 + 0.5 * x) * h))
                        .sum::<f64>()
                        * 0.5
                        * h
                })
                .sum()
        };
        for (i, mi) in modes.iter().enumerate() {
            for (j, mj) in modes.iter().enumerate() {
                let v = integrate(&|x| mi.eval(x) * mj.eval(x));
                assert!(
                    (v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8,
                    "{i} {j} {v}"
                );
            }
        }
    }

    #[test]
    fn satisfies_the_integral_equation() {
        let len = 1.5;
        let omega = 0.4;
        let modes = solve_1d_eigenpairs(omega, len, 6).unwrap();
        for m in &modes {
            let x0 = 0.37;
            // integrate analytically-split at x0 with fine midpoint rule
            let n = 200_000;
            let h = len / n as f64;
            let lhs: f64 = (0..n)
                .map(|i| (i as f64 + 0.5) * h)
                .map(|y| (-(x0 - y as f64).abs() / omega).exp() * m.eval(y))
                .sum::<f64>()
                * h;
            assert_relative_eq!(lhs, m.eigenvalue * m.eval(x0), epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(solve_1d_eigenpairs(0.0, 1.0, 1).is_err());
        assert!(solve_1d_eigenpairs(1.0, -1.0, 1).is_err());
    }
}
