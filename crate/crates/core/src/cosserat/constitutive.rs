//! Homogenised Cosserat constitutive tensors for a unidirectional ply and
//! their rotation into the global frame.
//!
//! Strain ordering is `(ε11, ε22, ε12, ε21)` with `ε12 = u1,2 + θ3` and
//! `ε21 = u2,1 − θ3`; curvature is `(κ31, κ32) = ∇θ3`. Axis 1 is the fibre.

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

/// Micro-constituent data. Moduli in GPa, fibre diameter in µm, strength in MPa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroMaterial {
    pub v_f: f64,
    pub e_f_gpa: f64,
    pub e_m_gpa: f64,
    pub g_f_gpa: f64,
    pub g_m_gpa: f64,
    pub nu_f: f64,
    pub nu_m: f64,
    pub d_um: f64,
    pub tau_y_mpa: f64,
    /// Transverse-to-shear yield strength ratio.
    pub r_ratio: f64,
}

impl Default for MicroMaterial {
    /// AS4/8552.
    fn default() -> Self {
        Self {
            v_f: 0.59,
            e_f_gpa: 230.0,
            e_m_gpa: 9.25,
            g_f_gpa: 95.83,
            g_m_gpa: 5.13,
            nu_f: 0.2,
            nu_m: 0.35,
            d_um: 7.0,
            tau_y_mpa: 114.0,
            r_ratio: 2.0,
        }
    }
}

impl MicroMaterial {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            self.e_f_gpa,
            self.e_m_gpa,
            self.g_f_gpa,
            self.g_m_gpa,
            self.d_um,
            self.tau_y_mpa,
            self.r_ratio,
        ];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(format!("material constants must be positive: {self:?}"));
        }
        if !(self.v_f > 0.0 && self.v_f <= 1.0) {
            return Err(format!("fibre volume fraction {} outside (0, 1]", self.v_f));
        }
        if !(0.0..0.5).contains(&self.nu_f) || !(0.0..0.5).contains(&self.nu_m) {
            return Err("Poisson ratios must lie in [0, 0.5)".into());
        }
        Ok(())
    }

    pub fn d_m(&self) -> f64 {
        self.d_um * 1e-6
    }

    pub fn tau_y_pa(&self) -> f64 {
        self.tau_y_mpa * 1e6
    }
}

/// Optional replacements for any homogenised quantity (SI units: Pa, N).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstitutiveOverrides {
    pub e1_gpa: Option<f64>,
    pub e2_gpa: Option<f64>,
    pub g12_gpa: Option<f64>,
    pub nu12: Option<f64>,
    pub nu23: Option<f64>,
    /// Modulus of the skew (rotational) strain `ε12 − ε21`.
    pub couple_gpa: Option<f64>,
    /// Bending moduli of `D` (N, i.e. Pa·m²).
    pub d11: Option<f64>,
    pub d22: Option<f64>,
    /// Full 4×4 `C` (Pa), row-major; supersedes the scalar entries.
    pub c: Option<[[f64; 4]; 4]>,
    /// Full 2×2 `D` (N), row-major.
    pub d: Option<[[f64; 2]; 2]>,
}

/// Ply-frame tensors `σ = C ε`, `m = D κ` (Pa and N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosseratConstitutive {
    pub c: Matrix4<f64>,
    pub d: Matrix2<f64>,
    /// Engineering constants the tensors were built from (Pa).
    pub e1: f64,
    pub e2: f64,
    pub g12: f64,
    pub nu12: f64,
}

/// Rule-of-mixtures homogenisation under plane strain.
///
/// `E1`, `ν12`, `ν23` by the direct rule, `E2` and `G12` by the inverse
/// rule. The skew modulus defaults to `G12`. `D11 = v_f E_f d²/16` is the
/// bending stiffness of the fibres per unit area and `D22 = E2 d²/16` its
/// transverse analogue.
pub fn homogenize(
    micro: &MicroMaterial,
    ov: &ConstitutiveOverrides,
) -> Result<CosseratConstitutive, String> {
    micro.validate()?;
    let vf = micro.v_f;
    let vm = 1.0 - vf;
    let inverse = |f: f64, m: f64| {
        if vm == 0.0 {
            f
        } else {
            1.0 / (vf / f + vm / m)
        }
    };
    let e1 = ov.e1_gpa.unwrap_or(vf * micro.e_f_gpa + vm * micro.e_m_gpa) * 1e9;
    let e2 = ov.e2_gpa.unwrap_or(inverse(micro.e_f_gpa, micro.e_m_gpa)) * 1e9;
    let g12 = ov.g12_gpa.unwrap_or(inverse(micro.g_f_gpa, micro.g_m_gpa)) * 1e9;
    let nu12 = ov.nu12.unwrap_or(vf * micro.nu_f + vm * micro.nu_m);
    let nu23 = ov.nu23.unwrap_or(vf * micro.nu_f + vm * micro.nu_m);
    let gc = ov.couple_gpa.map_or(g12, |g| g * 1e9);

    let c = match ov.c {
        Some(m) => Matrix4::from_fn(|i, j| m[i][j]),
        None => {
            // transversely isotropic compliance, ε33 = 0 eliminated
            let (s11, s12, s13, s22, s23, s33) = (
                1.0 / e1,
                -nu12 / e1,
                -nu12 / e1,
                1.0 / e2,
                -nu23 / e2,
                1.0 / e2,
            );
            let r = Matrix2::new(
                s11 - s13 * s13 / s33,
                s12 - s13 * s23 / s33,
                s12 - s13 * s23 / s33,
                s22 - s23 * s23 / s33,
            );
            let n = r.try_inverse().ok_or("singular plane-strain compliance")?;
            let mut c = Matrix4::zeros();
            c.fixed_view_mut::<2, 2>(0, 0).copy_from(&n);
            c[(2, 2)] = g12 + gc;
            c[(3, 3)] = g12 + gc;
            c[(2, 3)] = g12 - gc;
            c[(3, 2)] = g12 - gc;
            c
        }
    };
    let d = match ov.d {
        Some(m) => Matrix2::from_fn(|i, j| m[i][j]),
        None => {
            let d2 = micro.d_m().powi(2) / 16.0;
            Matrix2::new(
                ov.d11.unwrap_or(vf * micro.e_f_gpa * 1e9 * d2),
                0.0,
                0.0,
                ov.d22.unwrap_or(e2 * d2),
            )
        }
    };
    if c.cholesky().is_none() || d.cholesky().is_none() {
        return Err("constitutive tensors must be symmetric positive definite".into());
    }
    Ok(CosseratConstitutive {
        c,
        d,
        e1,
        e2,
        g12,
        nu12,
    })
}

/// Global-to-fibre rotation for fibres at angle `phi` to the x-axis.
fn frame(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// `(T_ε, T_κ)` mapping global strain/curvature to the fibre frame:
/// `ε' = R ε Rᵀ` on the 4-vector `(ε11, ε22, ε12, ε21)` and `κ' = R κ`.
pub fn rotation_matrices(phi: f64) -> (Matrix4<f64>, Matrix2<f64>) {
    let r = frame(phi);
    let idx = [(0, 0), (1, 1), (0, 1), (1, 0)];
    let t = Matrix4::from_fn(|p, q| {
        let (i, j) = idx[p];
        let (a, b) = idx[q];
        r[(i, a)] * r[(j, b)]
    });
    (t, r)
}

/// Tensor of a strain/stress 4-vector.
pub fn as_tensor(v: &nalgebra::Vector4<f64>) -> Matrix2<f64> {
    Matrix2::new(v[0], v[2], v[3], v[1])
}

impl CosseratConstitutive {
    /// Global-frame tensors `C* = T_ε⁻¹ C T_ε`, `D* = T_κ⁻¹ D T_κ` for fibres at `phi`.
    ///
    /// Both transformations are orthogonal, so the inverses are transposes and
    /// the rotated tensors stay symmetric positive definite.
    pub fn rotated(&self, phi: f64) -> (Matrix4<f64>, Matrix2<f64>) {
        let (te, tk) = rotation_matrices(phi);
        (te.transpose() * self.c * te, tk.transpose() * self.d * tk)
    }
}
