//! Compressive strength of a unidirectional composite with random fibre
//! waviness: a plane-strain Cosserat continuum under end-shortening, with
//! the misalignment angle drawn from a KL random field.

mod constitutive;

pub use constitutive::{
    as_tensor, homogenize, rotation_matrices, ConstitutiveOverrides, CosseratConstitutive,
    MicroMaterial,
};

use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::engine::{LevelModel, ModelError};
use crate::fem::element::{gauss_rule, shape_at, ElementMatrix};
use crate::fem::{
    solve_linear, Assembler, DofMap, FemError, LinearSolver, MeshHierarchy, QuadMesh,
};
use crate::field::{
    build_kl_basis, convert_correlation_length, level_truncation, CovarianceSpec, FieldSample,
    KlBasis, DEFAULT_MAX_MODES,
};

/// `τ_e = √(σ12² + (σ22/R)²)`.
pub fn effective_stress(s22: f64, s12: f64, r: f64) -> f64 {
    s12.hypot(s22 / r)
}

/// Kinking strength `G / (1 + |Φ|/γ_y)`.
pub fn budiansky_strength(g: f64, phi: f64, gamma_y: f64) -> f64 {
    g / (1.0 + phi.abs() / gamma_y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Standard deviation of the misalignment (rad).
    pub s_phi: f64,
    /// Lags at which the autocorrelation falls to 0.1, in fibre diameters.
    pub omega1_star_d: f64,
    pub omega2_star_d: f64,
    pub max_modes: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        let ln10 = std::f64::consts::LN_10;
        Self {
            s_phi: 0.035,
            omega1_star_d: 229.0 * ln10,
            omega2_star_d: 61.0 * ln10,
            max_modes: DEFAULT_MAX_MODES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    /// Side of the square domain in units of `ω1`.
    pub length_factor: f64,
    /// Side of the centred evaluation window in units of `ω1`.
    pub window_factor: f64,
    pub nx0: usize,
    pub max_level: usize,
    /// End-shortening as a fraction of the side length.
    pub delta_fraction: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            length_factor: 2.5,
            window_factor: 1.25,
            nx0: 8,
            max_level: 4,
            delta_fraction: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrengthConfig {
    pub material: MicroMaterial,
    pub overrides: ConstitutiveOverrides,
    pub field: FieldConfig,
    pub domain: DomainConfig,
}

impl StrengthConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.material.validate()?;
        let d = &self.domain;
        if !(d.length_factor > 0.0) || !(d.window_factor > 0.0) || d.window_factor > d.length_factor
        {
            return Err(format!(
                "window {} must fit inside domain {}",
                d.window_factor, d.length_factor
            ));
        }
        if d.nx0 == 0 || !(d.delta_fraction > 0.0) {
            return Err("nx0 and delta_fraction must be positive".into());
        }
        if !(self.field.s_phi > 0.0) || self.field.max_modes == 0 {
            return Err("s_phi and max_modes must be positive".into());
        }
        Ok(())
    }

    /// Correlation lengths `(ω1, ω2)` in metres.
    pub fn omegas(&self) -> Result<(f64, f64), String> {
        let d = self.material.d_m();
        let w1 =
            convert_correlation_length(self.field.omega1_star_d * d).map_err(|e| e.to_string())?;
        let w2 =
            convert_correlation_length(self.field.omega2_star_d * d).map_err(|e| e.to_string())?;
        Ok((w1, w2))
    }

    pub fn side(&self) -> Result<f64, String> {
        Ok(self.domain.length_factor * self.omegas()?.0)
    }

    pub fn covariance(&self) -> Result<CovarianceSpec, String> {
        let (omega1, omega2) = self.omegas()?;
        let l = self.side()?;
        Ok(CovarianceSpec {
            s_phi: self.field.s_phi,
            omega1,
            omega2,
            lx: l,
            ly: l,
        })
    }

    pub fn modes(&self, level: usize) -> usize {
        level_truncation(level, self.field.max_modes)
    }

    /// Shear strain at yield `τ_y / G12`.
    pub fn gamma_y(&self) -> Result<f64, String> {
        Ok(self.material.tau_y_pa() / homogenize(&self.material, &self.overrides)?.g12)
    }

    /// Kinking strength (Pa) for a uniform misalignment `phi`.
    pub fn budiansky(&self, phi: f64) -> Result<f64, String> {
        let c = homogenize(&self.material, &self.overrides)?;
        Ok(budiansky_strength(
            c.g12,
            phi,
            self.material.tau_y_pa() / c.g12,
        ))
    }
}

/// Strain–displacement operators at a point: `ε = B d`, `κ = Bκ d` with nodal
/// DOFs `(u, v, θ3)`.
fn strain_operators(
    n: &[f64; 4],
    dndx: &[f64; 4],
    dndy: &[f64; 4],
) -> (SMatrix<f64, 4, 12>, SMatrix<f64, 2, 12>) {
    let mut b = SMatrix::<f64, 4, 12>::zeros();
    let mut bk = SMatrix::<f64, 2, 12>::zeros();
    for a in 0..4 {
        let (u, v, t) = (3 * a, 3 * a + 1, 3 * a + 2);
        b[(0, u)] = dndx[a];
        b[(1, v)] = dndy[a];
        b[(2, u)] = dndy[a];
        b[(2, t)] = n[a];
        b[(3, v)] = dndx[a];
        b[(3, t)] = -n[a];
        bk[(0, t)] = dndx[a];
        bk[(1, t)] = dndy[a];
    }
    (b, bk)
}

/// Element stiffness with one rotated constitutive pair per 2×2 Gauss point.
pub fn element_stiffness(
    coords: &[[f64; 2]; 4],
    tensors: &[(Matrix4<f64>, Matrix2<f64>); 4],
) -> Result<ElementMatrix, FemError> {
    let mut k = ElementMatrix::zeros();
    for ((xi, eta, w), (c, d)) in gauss_rule(2, 2).into_iter().zip(tensors) {
        let s = shape_at(coords, xi, eta)?;
        let (b, bk) = strain_operators(&s.n, &s.dndx, &s.dndy);
        let dv = w * s.det_j;
        k += (b.transpose() * c * b + bk.transpose() * d * bk) * dv;
    }
    Ok(k)
}

/// Result of one strength evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrengthSample {
    /// Compressive strength (Pa).
    pub sigma: f64,
    /// Peak `τ_e / τ_y` over the window.
    pub f_star: f64,
    /// Window mean of the axial stress `σ11` (Pa).
    pub mean_axial: f64,
}

/// The strength QoI on a mesh hierarchy, level `ℓ` pairing mesh `ℓ` with
/// `50 + 50ℓ` KL modes.
pub struct StrengthModel {
    config: StrengthConfig,
    constitutive: CosseratConstitutive,
    basis: KlBasis,
    hierarchy: MeshHierarchy,
    assemblers: Vec<OnceLock<Result<Assembler, FemError>>>,
    side: f64,
}

impl StrengthModel {
    pub fn new(config: StrengthConfig) -> Result<Self, String> {
        config.validate()?;
        let constitutive = homogenize(&config.material, &config.overrides)?;
        let spec = config.covariance()?;
        let basis = build_kl_basis(spec, config.modes(config.domain.max_level))
            .map_err(|e| e.to_string())?;
        let side = spec.lx;
        let n = config.domain.nx0;
        let hierarchy = MeshHierarchy::build(side, side, n, n, config.domain.max_level)
            .map_err(|e| e.to_string())?;
        let assemblers = (0..=config.domain.max_level)
            .map(|_| OnceLock::new())
            .collect();
        Ok(Self {
            config,
            constitutive,
            basis,
            hierarchy,
            assemblers,
            side,
        })
    }

    pub fn config(&self) -> &StrengthConfig {
        &self.config
    }

    pub fn basis(&self) -> &KlBasis {
        &self.basis
    }

    pub fn constitutive(&self) -> &CosseratConstitutive {
        &self.constitutive
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    fn assembler(&self, level: usize) -> Result<&Assembler, FemError> {
        self.assemblers[level]
            .get_or_init(|| {
                let mesh = self.hierarchy.level(level);
                Assembler::new(
                    mesh,
                    boundary_conditions(mesh, -self.config.domain.delta_fraction * self.side),
                )
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Misalignment at the 2×2 Gauss points, indexed `[element][point]`.
    fn angles(
        &self,
        mesh: &QuadMesh,
        xi: &[f64],
        n_terms: usize,
    ) -> Result<Vec<[f64; 4]>, ModelError> {
        let g = 1.0 / 3f64.sqrt();
        let coords = |n: usize, h: f64| -> Vec<f64> {
            (0..n)
                .flat_map(|i| {
                    [
                        (i as f64 + 0.5 - 0.5 * g) * h,
                        (i as f64 + 0.5 + 0.5 * g) * h,
                    ]
                })
                .collect()
        };
        let xs = coords(mesh.nx, mesh.hx());
        let ys = coords(mesh.ny, mesh.hy());
        let phi = self
            .basis
            .evaluate_grid(xi, n_terms, &xs, &ys)
            .map_err(|e| ModelError::Other(e.to_string()))?;
        let rule = gauss_rule(2, 2);
        Ok((0..mesh.element_count())
            .map(|e| {
                let [i, j] = [e % mesh.nx, e / mesh.nx];
                let mut out = [0.0; 4];
                for (q, (xq, yq, _)) in rule.iter().enumerate() {
                    let a = 2 * i + usize::from(*xq > 0.0);
                    let b = 2 * j + usize::from(*yq > 0.0);
                    out[q] = phi[a * ys.len() + b];
                }
                out
            })
            .collect())
    }

    /// Solves level `level` for the given KL coefficients.
    pub fn strength(&self, xi: &[f64], level: usize) -> Result<StrengthSample, ModelError> {
        self.strength_with_field(level, |mesh| {
            self.angles(mesh, xi, self.config.modes(level))
        })
    }

    /// Strength for a spatially uniform misalignment `phi`.
    pub fn uniform_strength(&self, phi: f64, level: usize) -> Result<StrengthSample, ModelError> {
        self.strength_with_field(level, |mesh| Ok(vec![[phi; 4]; mesh.element_count()]))
    }

    fn strength_with_field<F>(&self, level: usize, field: F) -> Result<StrengthSample, ModelError>
    where
        F: FnOnce(&QuadMesh) -> Result<Vec<[f64; 4]>, ModelError>,
    {
        if level > self.config.domain.max_level {
            return Err(ModelError::LevelOutOfRange {
                level,
                max: self.config.domain.max_level,
            });
        }
        let asm = self.assembler(level)?;
        let mesh = asm.mesh();
        let phi = field(mesh)?;
        let tensors: Vec<[(Matrix4<f64>, Matrix2<f64>); 4]> = phi
            .iter()
            .map(|p| [0, 1, 2, 3].map(|q| self.constitutive.rotated(p[q])))
            .collect();
        let (k, f) = asm.assemble(|e, coords| element_stiffness(coords, &tensors[e]))?;
        let d = solve_linear(&k, &f, LinearSolver::default())?;
        let full = asm.dofs().expand(&d);
        self.evaluate_strength(mesh, &full, &phi, &tensors)
    }

    fn evaluate_strength(
        &self,
        mesh: &QuadMesh,
        full: &[f64],
        phi: &[[f64; 4]],
        tensors: &[[(Matrix4<f64>, Matrix2<f64>); 4]],
    ) -> Result<StrengthSample, ModelError> {
        let lo = 0.5
            * (self.side
                - self.config.domain.window_factor / self.config.domain.length_factor * self.side);
        let hi = self.side - lo;
        let tol = 1e-9 * self.side;
        let tau_y = self.config.material.tau_y_pa();
        let r = self.config.material.r_ratio;
        let rule = gauss_rule(2, 2);
        let (mut f_star, mut integral, mut area) = (0.0f64, 0.0, 0.0);
        for e in 0..mesh.element_count() {
            let (min, max) = mesh.element_bounds(e);
            if min[0] < lo - tol || min[1] < lo - tol || max[0] > hi + tol || max[1] > hi + tol {
                continue;
            }
            let coords = mesh.element_coords(e);
            let de = SMatrix::<f64, 12, 1>::from_iterator(
                mesh.element_nodes(e)
                    .iter()
                    .flat_map(|&n| (0..3).map(move |c| full[3 * n + c])),
            );
            for (q, &(xi, eta, w)) in rule.iter().enumerate() {
                let s = shape_at(&coords, xi, eta)?;
                let (b, _) = strain_operators(&s.n, &s.dndx, &s.dndy);
                let strain: Vector4<f64> = b * de;
                let stress = tensors[e][q].0 * strain;
                // stress in the fibre frame: σ' = R σ Rᵀ
                let (t, _) = rotation_matrices(phi[e][q]);
                let local = t * stress;
                f_star = f_star.max(effective_stress(local[1], local[2], r) / tau_y);
                integral += stress[0] * w * s.det_j;
                area += w * s.det_j;
            }
        }
        if !(f_star > 0.0) || area == 0.0 {
            return Err(ModelError::Other(
                "no stress in the evaluation window".into(),
            ));
        }
        let mean_axial = integral / area;
        Ok(StrengthSample {
            sigma: mean_axial.abs() / f_star,
            f_star,
            mean_axial,
        })
    }
}

/// `u = 0` on `x = 0`, `u = Δ` on `x = L`, `v = 0` on `y = 0` and `y = L`.
pub fn boundary_conditions(mesh: &QuadMesh, delta: f64) -> DofMap {
    let mut fixed = Vec::new();
    for n in 0..mesh.node_count() {
        let (i, j) = mesh.node_ij(n);
        if i == 0 {
            fixed.push((3 * n, 0.0));
        } else if i == mesh.nx {
            fixed.push((3 * n, delta));
        }
        if j == 0 || j == mesh.ny {
            fixed.push((3 * n + 1, 0.0));
        }
    }
    DofMap::new(mesh.node_count(), 3, fixed)
}

impl LevelModel for StrengthModel {
    type Sample = FieldSample;

    fn max_level(&self) -> usize {
        self.config.domain.max_level
    }

    fn dof_count(&self, level: usize) -> usize {
        self.hierarchy.dof_count(level, 3)
    }

    fn draw(&self, seed: u64) -> FieldSample {
        FieldSample::draw(seed, self.basis.len())
    }

    /// Strength in MPa.
    fn solve(&self, sample: &mut FieldSample, level: usize) -> Result<f64, ModelError> {
        Ok(self.strength(&sample.xi, level)?.sigma / 1e6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small(max_level: usize) -> StrengthModel {
        let mut cfg = StrengthConfig::default();
        cfg.domain.max_level = max_level;
        StrengthModel::new(cfg).unwrap()
    }

    #[test]
    fn effective_stress_cases() {
        assert_relative_eq!(effective_stress(0.0, 2.5, 3.0), 2.5);
        assert_relative_eq!(effective_stress(6.0, 0.0, 3.0), 2.0);
        assert_relative_eq!(effective_stress(3.0, 4.0, 1.0), 5.0);
    }

    #[test]
    fn budiansky_cases() {
        assert_eq!(budiansky_strength(10.0, 0.0, 0.01), 10.0);
        assert_relative_eq!(budiansky_strength(10.0, -0.01, 0.01), 5.0);
        assert!(budiansky_strength(10.0, 0.02, 0.01) < budiansky_strength(10.0, 0.01, 0.01));
    }

    #[test]
    fn coarse_level_dimensions() {
        let m = small(1);
        assert_eq!(m.dof_count(0), 243);
        assert_eq!(m.hierarchy.level(0).element_count(), 64);
        let (w1, w2) = m.config.omegas().unwrap();
        assert_relative_eq!(w1, 229.0 * 7e-6, max_relative = 1e-12);
        assert_relative_eq!(w2, 61.0 * 7e-6, max_relative = 1e-12);
    }

    #[test]
    fn aligned_fibres_give_homogeneous_state() {
        let m = small(2);
        let c = m.constitutive.c;
        let expected =
            m.config.material.r_ratio * m.config.material.tau_y_pa() * c[(0, 0)] / c[(1, 0)];
        for level in 0..=2 {
            let s = m.uniform_strength(0.0, level).unwrap();
            assert_relative_eq!(s.sigma, expected, max_relative = 1e-8);
            assert_relative_eq!(
                s.mean_axial,
                c[(0, 0)] * -m.config.domain.delta_fraction,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn strength_is_independent_of_load_magnitude() {
        let mut cfg = StrengthConfig::default();
        cfg.domain.max_level = 0;
        let a = StrengthModel::new(cfg.clone()).unwrap();
        cfg.domain.delta_fraction *= 2.0;
        let b = StrengthModel::new(cfg).unwrap();
        let xi = FieldSample::draw(5, a.basis.len()).xi;
        let (sa, sb) = (a.strength(&xi, 0).unwrap(), b.strength(&xi, 0).unwrap());
        assert_relative_eq!(sa.sigma, sb.sigma, max_relative = 1e-9);
        assert_relative_eq!(2.0 * sa.f_star, sb.f_star, max_relative = 1e-9);
    }

    #[test]
    fn element_energy_is_positive() {
        let m = small(0);
        let coords = m.hierarchy.level(0).element_coords(0);
        let ke = element_stiffness(
            &coords,
            &[0.1, -0.2, 0.05, 0.3].map(|p| m.constitutive.rotated(p)),
        )
        .unwrap();
        let eig = nalgebra::SymmetricEigen::new(ke).eigenvalues;
        let max = eig.max();
        // two translations and the rigid rotation with θ3 equal to the spin
        assert_eq!(eig.iter().filter(|&&v| v < 1e-10 * max).count(), 3, "{eig}");
    }

    #[test]
    fn misalignment_lowers_strength() {
        let m = small(0);
        let s = m.uniform_strength(0.0, 0).unwrap().sigma;
        let t = m.uniform_strength(0.03, 0).unwrap().sigma;
        assert!(t < s && t > 0.0);
    }
}
