//! Classical laminate theory.

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaminateError {
    #[error("non-physical ply constants: {0}")]
    Material(String),
    #[error("invalid stack: {0}")]
    Stack(String),
    #[error("extensional stiffness A is singular")]
    SingularA,
}

/// Orthotropic ply constants. Moduli in MPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlyMaterial {
    pub e11: f64,
    pub e22: f64,
    pub g12: f64,
    pub nu12: f64,
}

impl PlyMaterial {
    /// IM7/8552.
    pub fn im7_8552() -> Self {
        Self {
            e11: 130.0e3,
            e22: 9.25e3,
            g12: 5.13e3,
            nu12: 0.36,
        }
    }
}

/// Plane-stress reduced stiffness in Voigt form `(11, 22, 12)` with
/// engineering shear strain.
pub fn ply_stiffness(
    e11: f64,
    e22: f64,
    g12: f64,
    nu12: f64,
) -> Result<Matrix3<f64>, LaminateError> {
    if !(e11 > 0.0 && e22 > 0.0 && g12 > 0.0) {
        return Err(LaminateError::Material("moduli must be positive".into()));
    }
    if !(nu12 > 0.0 && nu12 < 0.5) {
        return Err(LaminateError::Material(format!(
            "Poisson ratio {nu12} outside (0, 0.5)"
        )));
    }
    let nu21 = nu12 * e22 / e11;
    let d = 1.0 - nu12 * nu21;
    if !(d > 0.0) {
        return Err(LaminateError::Material(
            "1 − ν12 ν21 must be positive".into(),
        ));
    }
    Ok(Matrix3::new(
        e11 / d,
        nu12 * e22 / d,
        0.0,
        nu12 * e22 / d,
        e22 / d,
        0.0,
        0.0,
        0.0,
        g12,
    ))
}

/// Reduced stiffness of a ply whose fibres make angle `psi_deg` with the x axis.
pub fn rotate_ply(q: &Matrix3<f64>, psi_deg: f64) -> Matrix3<f64> {
    let (s, c) = psi_deg.to_radians().sin_cos();
    // strain transformation (engineering shear) from global to ply axes
    let t = Matrix3::new(
        c * c,
        s * s,
        s * c,
        s * s,
        c * c,
        -s * c,
        -2.0 * s * c,
        2.0 * s * c,
        c * c - s * s,
    );
    t.transpose() * q * t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ply {
    /// Nominal angle ψ in degrees.
    pub angle: f64,
    /// Perturbation φ in degrees.
    #[serde(default)]
    pub perturbation: f64,
    pub thickness: f64,
}

impl Ply {
    pub fn effective_angle(&self) -> f64 {
        self.angle + self.perturbation
    }
}

/// Ordered ply stack; ply 0 is the bottom (`z = −t/2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Laminate {
    pub material: PlyMaterial,
    pub plies: Vec<Ply>,
}

/// The fully uncoupled eight-ply stack.
pub const WINCKLER_STACK: [f64; 8] = [45.0, -45.0, -45.0, 45.0, -45.0, 45.0, 45.0, -45.0];

impl Laminate {
    pub fn new(
        material: PlyMaterial,
        angles: &[f64],
        ply_thickness: f64,
    ) -> Result<Self, LaminateError> {
        if angles.is_empty() {
            return Err(LaminateError::Stack("no plies".into()));
        }
        if !(ply_thickness > 0.0) {
            return Err(LaminateError::Stack(
                "ply thickness must be positive".into(),
            ));
        }
        let plies = angles
            .iter()
            .map(|&angle| Ply {
                angle,
                perturbation: 0.0,
                thickness: ply_thickness,
            })
            .collect();
        Ok(Self { material, plies })
    }

    pub fn thickness(&self) -> f64 {
        self.plies.iter().map(|p| p.thickness).sum()
    }

    /// Interface coordinates `z_0 = −t/2 < z_1 < … < z_K = t/2`.
    pub fn interfaces(&self) -> Vec<f64> {
        let mut z = vec![-0.5 * self.thickness()];
        for p in &self.plies {
            z.push(z.last().copied().unwrap_or(0.0) + p.thickness);
        }
        z
    }

    /// Copy with perturbations `φ_i`.
    pub fn with_perturbations(&self, phi: &[f64]) -> Self {
        let mut out = self.clone();
        for (p, &f) in out.plies.iter_mut().zip(phi) {
            p.perturbation = f;
        }
        out
    }
}

/// Independent `φ_i ~ N(0, σ²)` (degrees), constant over each ply.
pub fn perturb_stacking<R: Rng + ?Sized>(
    laminate: &Laminate,
    sigma_deg: f64,
    rng: &mut R,
) -> Laminate {
    let phi: Vec<f64> = match Normal::new(0.0, sigma_deg) {
        Ok(d) if sigma_deg > 0.0 => laminate.plies.iter().map(|_| d.sample(rng)).collect(),
        _ => vec![0.0; laminate.plies.len()],
    };
    laminate.with_perturbations(&phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbdMatrices {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub d: Matrix3<f64>,
    /// `D* = D − Bᵀ A⁻¹ B`
    pub d_star: Matrix3<f64>,
}

pub fn abd(laminate: &Laminate) -> Result<AbdMatrices, LaminateError> {
    let m = laminate.material;
    let q = ply_stiffness(m.e11, m.e22, m.g12, m.nu12)?;
    let z = laminate.interfaces();
    let mut a = Matrix3::zeros();
    let mut b = Matrix3::zeros();
    let mut d = Matrix3::zeros();
    for (k, ply) in laminate.plies.iter().enumerate() {
        let qb = rotate_ply(&q, ply.effective_angle());
        let (z0, z1) = (z[k], z[k + 1]);
        a += qb * (z1 - z0);
        b += qb * (0.5 * (z1 * z1 - z0 * z0));
        d += qb * ((z1.powi(3) - z0.powi(3)) / 3.0);
    }
    let a_inv = a.try_inverse().ok_or(LaminateError::SingularA)?;
    let d_star = d - b.transpose() * a_inv * b;
    Ok(AbdMatrices { a, b, d, d_star })
}
