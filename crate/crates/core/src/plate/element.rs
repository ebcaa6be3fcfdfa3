//! Bilinear Reissner–Mindlin plate element with nodal fields `(w, θx, θy)`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::fem::element::{gauss_rule, shape_at, ElementMatrix};
use crate::fem::FemError;

/// Quadrature of the transverse-shear energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShearIntegration {
    /// 2×2 Gauss: conforming, but locks as `h/t` grows.
    Full,
    /// 1-point: lock-free, but admits zero-energy-like hourglass modes.
    OnePoint,
    /// `γx` on a 1×2 rule and `γy` on a 2×1 rule (assumed shear strain with
    /// edge-midpoint tying on rectangles): lock-free and stable.
    #[default]
    Directional,
}

/// Bending `(θx,x, θy,y, θx,y + θy,x)` with stiffness `D*` plus transverse
/// shear `(w,x − θx, w,y − θy)` with stiffness `ks` per unit area.
pub fn stiffness(
    coords: &[[f64; 2]; 4],
    d_star: &Matrix3<f64>,
    ks: f64,
    shear: ShearIntegration,
) -> Result<ElementMatrix, FemError> {
    let mut k = ElementMatrix::zeros();
    for (xi, eta, w) in gauss_rule(2, 2) {
        let s = shape_at(coords, xi, eta)?;
        let mut b = nalgebra::SMatrix::<f64, 3, 12>::zeros();
        for a in 0..4 {
            b[(0, 3 * a + 1)] = s.dndx[a];
            b[(1, 3 * a + 2)] = s.dndy[a];
            b[(2, 3 * a + 1)] = s.dndy[a];
            b[(2, 3 * a + 2)] = s.dndx[a];
        }
        k += b.transpose() * d_star * b * (w * s.det_j);
    }
    let mut add_shear = |rule: Vec<(f64, f64, f64)>, component: usize| -> Result<(), FemError> {
        for (xi, eta, w) in rule {
            let s = shape_at(coords, xi, eta)?;
            let mut g = nalgebra::SMatrix::<f64, 1, 12>::zeros();
            for a in 0..4 {
                g[3 * a] = if component == 0 { s.dndx[a] } else { s.dndy[a] };
                g[3 * a + 1 + component] = -s.n[a];
            }
            k += g.transpose() * g * (ks * w * s.det_j);
        }
        Ok(())
    };
    match shear {
        ShearIntegration::Full => {
            add_shear(gauss_rule(2, 2), 0)?;
            add_shear(gauss_rule(2, 2), 1)?;
        }
        ShearIntegration::OnePoint => {
            add_shear(gauss_rule(1, 1), 0)?;
            add_shear(gauss_rule(1, 1), 1)?;
        }
        ShearIntegration::Directional => {
            add_shear(gauss_rule(1, 2), 0)?;
            add_shear(gauss_rule(2, 1), 1)?;
        }
    }
    Ok(k)
}

/// `∫ ∇w · σ ∇ŵ` for a uniform in-plane stress `σ` (force per unit length).
pub fn geometric(
    coords: &[[f64; 2]; 4],
    sigma: &nalgebra::Matrix2<f64>,
) -> Result<ElementMatrix, FemError> {
    let mut g = ElementMatrix::zeros();
    for (xi, eta, w) in gauss_rule(2, 2) {
        let s = shape_at(coords, xi, eta)?;
        for a in 0..4 {
            let ga = nalgebra::Vector2::new(s.dndx[a], s.dndy[a]);
            for b in 0..4 {
                let gb = nalgebra::Vector2::new(s.dndx[b], s.dndy[b]);
                g[(3 * a, 3 * b)] += ga.dot(&(sigma * gb)) * w * s.det_j;
            }
        }
    }
    Ok(g)
}
