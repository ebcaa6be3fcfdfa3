//! Misalignment random field: truncated Karhunen–Loève expansion of the
//! separable exponential covariance
//! `k(x, y) = s² exp(-|x₁ - y₁|/ω₁ - |x₂ - y₂|/ω₂)` on `[0, Lx] × [0, Ly]`.

mod kl1d;

pub use kl1d::{solve_1d_eigenpairs, Mode1d, Parity};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::{sample_seed, Stream};

/// Default cap on the number of retained modes.
pub const DEFAULT_MAX_MODES: usize = 400;
const XI_STREAM: Stream = Stream::Custom(0x4b4c);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("invalid covariance: {0}")]
    InvalidSpec(String),
    #[error("root not bracketed in [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("{given} coefficients supplied, basis needs {needed}")]
    TooFewCoefficients { given: usize, needed: usize },
}

/// Correlation length at which the autocorrelation has dropped to 0.1,
/// converted to the exponential-kernel length scale: `ω = ω* / ln 10`.
pub fn convert_correlation_length(omega_star: f64) -> Result<f64, FieldError> {
    if !(omega_star > 0.0) || !omega_star.is_finite() {
        return Err(FieldError::InvalidSpec(format!(
            "correlation length {omega_star} must be positive"
        )));
    }
    Ok(-omega_star / 0.1f64.ln())
}

/// Modes retained on level `ℓ`: `50 + 50ℓ`, capped at `cap`.
pub fn level_truncation(level: usize, cap: usize) -> usize {
    (50 + 50 * level).min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    /// Standard deviation (radians).
    pub s_phi: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub lx: f64,
    pub ly: f64,
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<(), FieldError> {
        let all = [self.s_phi, self.omega1, self.omega2, self.lx, self.ly];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(FieldError::InvalidSpec(format!(
                "{self:?}: all parameters must be positive"
            )))
        }
    }

    pub fn kernel(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        self.s_phi.powi(2)
            * (-(p[0] - q[0]).abs() / self.omega1 - (p[1] - q[1]).abs() / self.omega2).exp()
    }

    /// `∫ k(x, x) dx = s² Lx Ly`, the sum of all eigenvalues.
    pub fn trace(&self) -> f64 {
        self.s_phi.powi(2) * self.lx * self.ly
    }
}

/// One 2D mode `√μ φx(x) φy(y)` as indices into the 1D mode tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlMode {
    pub eigenvalue: f64,
    pub ix: usize,
    pub iy: usize,
}

/// Leading 2D eigenpairs, ordered by decreasing eigenvalue (ties by `(ix, iy)`).
#[derive(Debug, Clone)]
pub struct KlBasis {
    pub spec: CovarianceSpec,
    pub modes: Vec<KlMode>,
    pub x_modes: Vec<Mode1d>,
    pub y_modes: Vec<Mode1d>,
}

pub fn build_kl_basis(spec: CovarianceSpec, n_kl: usize) -> Result<KlBasis, FieldError> {
    spec.validate()?;
    if n_kl == 0 {
        return Err(FieldError::InvalidSpec("at least one mode required".into()));
    }
    // the k-th largest product never uses a 1D index beyond k
    let x_modes = solve_1d_eigenpairs(spec.omega1, spec.lx, n_kl)?;
    let y_modes = solve_1d_eigenpairs(spec.omega2, spec.ly, n_kl)?;
    let s2 = spec.s_phi * spec.s_phi;
    let mut modes = Vec::with_capacity(n_kl * 4);
    for (ix, mx) in x_modes.iter().enumerate() {
        for (iy, my) in y_modes.iter().enumerate() {
            // (ix+1)(iy+1) > n_kl products are dominated by at least n_kl others
            if (ix + 1) * (iy + 1) > n_kl {
                break;
            }
            modes.push(KlMode {
                eigenvalue: s2 * mx.eigenvalue * my.eigenvalue,
                ix,
                iy,
            });
        }
    }
    modes.sort_by(|a, b| {
        b.eigenvalue
            .total_cmp(&a.eigenvalue)
            .then((a.ix, a.iy).cmp(&(b.ix, b.iy)))
    });
    modes.truncate(n_kl);
    Ok(KlBasis {
        spec,
        modes,
        x_modes,
        y_modes,
    })
}

impl KlBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalue_sum(&self, n: usize) -> f64 {
        self.modes.iter().take(n).map(|m| m.eigenvalue).sum()
    }

    /// Fraction of the total variance `s² Lx Ly` captured by the first `n` modes.
    pub fn captured_fraction(&self, n: usize) -> f64 {
        self.eigenvalue_sum(n) / self.spec.trace()
    }

    /// Truncated pointwise variance `Σ μₙ φₙ(x)²` over the first `n` modes.
    pub fn pointwise_variance(&self, n: usize, p: [f64; 2]) -> f64 {
        self.modes
            .iter()
            .take(n)
            .map(|m| {
                m.eigenvalue
                    * (self.x_modes[m.ix].eval(p[0]) * self.y_modes[m.iy].eval(p[1])).powi(2)
            })
            .sum()
    }

    fn check_point(&self, p: [f64; 2]) -> Result<(), FieldError> {
        let tol = 1e-12 * (self.spec.lx + self.spec.ly);
        let inside = |v: f64, l: f64| v >= -tol && v <= l + tol;
        if inside(p[0], self.spec.lx) && inside(p[1], self.spec.ly) {
            Ok(())
        } else {
            Err(FieldError::OutsideDomain { x: p[0], y: p[1] })
        }
    }

    /// `Φ(x) = Σ_{n<N} √μₙ φₙ(x) ξₙ` using the first `n_terms` modes.
    pub fn evaluate(
        &self,
        xi: &[f64],
        n_terms: usize,
        points: &[[f64; 2]],
    ) -> Result<Vec<f64>, FieldError> {
        let n = n_terms.min(self.len());
        if xi.len() < n {
            return Err(FieldError::TooFewCoefficients {
                given: xi.len(),
                needed: n,
            });
        }
        points
            .iter()
            .map(|&p| {
                self.check_point(p)?;
                Ok(self.modes[..n]
                    .iter()
                    .zip(xi)
                    .map(|(m, x)| {
                        m.eigenvalue.sqrt()
                            * self.x_modes[m.ix].eval(p[0])
                            * self.y_modes[m.iy].eval(p[1])
                            * x
                    })
                    .sum())
            })
            .collect()
    }

    /// Field on the tensor grid `xs × ys` (`ys` fastest), exploiting separability.
    pub fn evaluate_grid(
        &self,
        xi: &[f64],
        n_terms: usize,
        xs: &[f64],
        ys: &[f64],
    ) -> Result<Vec<f64>, FieldError> {
        let n = n_terms.min(self.len());
        if xi.len() < n {
            return Err(FieldError::TooFewCoefficients {
                given: xi.len(),
                needed: n,
            });
        }
        for &x in xs {
            self.check_point([x, 0.0])?;
        }
        for &y in ys {
            self.check_point([0.0, y])?;
        }
        let used_x = self.modes[..n]
            .iter()
            .map(|m| m.ix)
            .max()
            .map_or(0, |m| m + 1);
        let used_y = self.modes[..n]
            .iter()
            .map(|m| m.iy)
            .max()
            .map_or(0, |m| m + 1);
        let fx: Vec<Vec<f64>> = (0..used_x)
            .map(|i| xs.iter().map(|&x| self.x_modes[i].eval(x)).collect())
            .collect();
        let fy: Vec<Vec<f64>> = (0..used_y)
            .map(|j| ys.iter().map(|&y| self.y_modes[j].eval(y)).collect())
            .collect();
        // collapse over x-modes first: g[ix][y] = Σ_{modes with ix} √μ ξ φy(y)
        let mut g = vec![vec![0.0; ys.len()]; used_x];
        for (m, x) in self.modes[..n].iter().zip(xi) {
            let c = m.eigenvalue.sqrt() * x;
            g[m.ix]
                .iter_mut()
                .zip(&fy[m.iy])
                .for_each(|(g, f)| *g += c * f);
        }
        let mut out = vec![0.0; xs.len() * ys.len()];
        for (ix, gi) in g.iter().enumerate() {
            for (a, fxa) in fx[ix].iter().enumerate() {
                out[a * ys.len()..(a + 1) * ys.len()]
                    .iter_mut()
                    .zip(gi)
                    .for_each(|(o, g)| *o += fxa * g);
            }
        }
        Ok(out)
    }
}

/// Standard normal KL coefficients of one realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub seed: u64,
    pub xi: Vec<f64>,
}

impl FieldSample {
    /// Coefficient `n` depends only on `(seed, n)`, so enlarging the
    /// truncation extends a realisation without redrawing its leading terms.
    pub fn draw(seed: u64, n_kl: usize) -> Self {
        let xi = (0..n_kl as u64)
            .map(|n| {
                ChaCha8Rng::seed_from_u64(sample_seed(seed, XI_STREAM, 0, n)).sample(StandardNormal)
            })
            .collect();
        Self { seed, xi }
    }
}
