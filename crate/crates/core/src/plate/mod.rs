//! Buckling of a simply supported laminated panel under uniaxial compression
//! with random ply-angle perturbations.

pub mod element;
pub mod laminate;

use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use element::ShearIntegration;
pub use laminate::{
    abd, perturb_stacking, ply_stiffness, rotate_ply, AbdMatrices, Laminate, LaminateError, Ply,
    PlyMaterial, WINCKLER_STACK,
};

use crate::engine::{LevelModel, ModelError};
use crate::fem::eigen::{smallest_eigenvalue_factored, EigenOptions, EigenResult};
use crate::fem::mesh::prolongate;
use crate::fem::{Assembler, DofMap, FemError, MeshHierarchy, QuadMesh, SparseSystem};

/// Panel, material and stochastic inputs. Lengths in mm, moduli in GPa,
/// angles in degrees, loads in kN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateConfig {
    pub lx_mm: f64,
    pub ly_mm: f64,
    pub ply_thickness_mm: f64,
    pub stacking_deg: Vec<f64>,
    pub e11_gpa: f64,
    pub e22_gpa: f64,
    pub g12_gpa: f64,
    pub nu12: f64,
    /// Through-thickness shear modulus.
    pub g_transverse_gpa: f64,
    pub shear_correction: f64,
    pub sigma_angle_deg: f64,
    pub lambda_star_kn: f64,
    pub nx0: usize,
    pub ny0: usize,
    pub max_level: usize,
    pub shear_integration: ShearIntegration,
    pub support: Support,
}

/// Edge restraint of the simply supported panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// `w = 0` and the rotation about the edge normal (tangential slope) held at zero.
    #[default]
    Hard,
    /// `w = 0` only; both rotations free.
    Soft,
}

impl Default for PlateConfig {
    fn default() -> Self {
        Self {
            lx_mm: 636.0,
            ly_mm: 212.0,
            ply_thickness_mm: 0.8,
            stacking_deg: WINCKLER_STACK.to_vec(),
            e11_gpa: 130.0,
            e22_gpa: 9.25,
            g12_gpa: 5.13,
            nu12: 0.36,
            g_transverse_gpa: 5.13,
            shear_correction: 5.0 / 6.0,
            sigma_angle_deg: 3.0,
            lambda_star_kn: 272.47,
            nx0: 32,
            ny0: 32,
            max_level: 4,
            shear_integration: ShearIntegration::Directional,
            support: Support::Hard,
        }
    }
}

impl PlateConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [
            ("lx_mm", self.lx_mm),
            ("ly_mm", self.ly_mm),
            ("ply_thickness_mm", self.ply_thickness_mm),
            ("e11_gpa", self.e11_gpa),
            ("e22_gpa", self.e22_gpa),
            ("g12_gpa", self.g12_gpa),
            ("g_transverse_gpa", self.g_transverse_gpa),
            ("shear_correction", self.shear_correction),
        ];
        for (k, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{k} must be positive"));
            }
        }
        if !(self.sigma_angle_deg >= 0.0) {
            return Err("sigma_angle_deg must be non-negative".into());
        }
        if self.stacking_deg.is_empty() {
            return Err("stacking_deg must list at least one ply".into());
        }
        if self.nx0 == 0 || self.ny0 == 0 {
            return Err("nx0 and ny0 must be at least 1".into());
        }
        ply_stiffness(self.e11_gpa, self.e22_gpa, self.g12_gpa, self.nu12)
            .map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn material(&self) -> PlyMaterial {
        PlyMaterial {
            e11: self.e11_gpa * 1e3,
            e22: self.e22_gpa * 1e3,
            g12: self.g12_gpa * 1e3,
            nu12: self.nu12,
        }
    }

    pub fn laminate(&self) -> Laminate {
        Laminate::new(self.material(), &self.stacking_deg, self.ply_thickness_mm)
            .expect("validated stack")
    }

    pub fn thickness(&self) -> f64 {
        self.ply_thickness_mm * self.stacking_deg.len() as f64
    }

    /// Transverse shear stiffness `k G t` (N/mm).
    pub fn shear_stiffness(&self) -> f64 {
        self.shear_correction * self.g_transverse_gpa * 1e3 * self.thickness()
    }

    /// Converts an eigenvalue of the unit-stress problem (MPa) to the total
    /// compressive load in kN carried by the loaded edge.
    pub fn load_kn(&self, lambda_mpa: f64) -> f64 {
        lambda_mpa * self.thickness() * self.ly_mm * 1e-3
    }
}

/// Stiffness and geometric matrices of the buckling problem on the free DOFs.
#[derive(Debug, Clone)]
pub struct BucklingSystem {
    pub k: SparseSystem,
    /// `∫ t σ∇w·∇ŵ` for the unit compression `σ = diag(−1, 0)`: negative semidefinite.
    pub g_geo: SparseSystem,
}

/// Simply supported edges: `w = 0`, and with [`Support::Hard`] also the
/// slope along the edge (`θy` on `x = const`, `θx` on `y = const`).
pub fn simply_supported_dofs(mesh: &QuadMesh, support: Support) -> DofMap {
    let mut fixed = Vec::new();
    for n in (0..mesh.node_count()).filter(|&n| mesh.is_boundary_node(n)) {
        fixed.push(3 * n);
        if support == Support::Hard {
            let (i, j) = mesh.node_ij(n);
            if i == 0 || i == mesh.nx {
                fixed.push(3 * n + 2);
            }
            if j == 0 || j == mesh.ny {
                fixed.push(3 * n + 1);
            }
        }
    }
    DofMap::new(mesh.node_count(), 3, fixed.into_iter().map(|d| (d, 0.0)))
}

/// Assembles `(K_B, G_geo)` for a laminate with uniform bending stiffness.
pub fn assemble_rm(
    assembler: &Assembler,
    d_star: &Matrix3<f64>,
    shear_stiffness: f64,
    thickness: f64,
    shear: ShearIntegration,
) -> Result<BucklingSystem, FemError> {
    let mesh = assembler.mesh();
    // uniform rectangular grid: one element matrix serves every element
    let coords = mesh.element_coords(0);
    let ke = element::stiffness(&coords, d_star, shear_stiffness, shear)?;
    let sigma = Matrix2::new(-thickness, 0.0, 0.0, 0.0);
    let ge = element::geometric(&coords, &sigma)?;
    Ok(BucklingSystem {
        k: assembler.assemble_uniform(&ke),
        g_geo: assembler.assemble_uniform(&ge),
    })
}

/// Smallest positive buckling eigenvalue (MPa) of `K d = λ (−G_geo) d`.
pub fn solve_buckling(
    system: &BucklingSystem,
    warm_start: Option<&[f64]>,
) -> Result<EigenResult, FemError> {
    let g = SparseSystem::linear_combination(&[(&system.g_geo, -1.0)]);
    let t0 = std::time::Instant::now();
    let chol = system.k.cholesky()?;
    log::trace!("factorization {:.3}s", t0.elapsed().as_secs_f64());
    smallest_eigenvalue_factored(&system.k, &chol, &g, warm_start, EigenOptions::default())
}

/// The buckling load as a multilevel model.
pub struct BucklingModel {
    config: PlateConfig,
    laminate: Laminate,
    hierarchy: MeshHierarchy,
    assemblers: Vec<OnceLock<Result<Assembler, FemError>>>,
    pub warm_start: bool,
}

/// Per-sample state: the ply perturbations and the last mode solved.
#[derive(Debug, Clone)]
pub struct BucklingSample {
    pub perturbations: Vec<f64>,
    mode: Option<(usize, Vec<f64>)>,
    pub lambdas: Vec<(usize, f64)>,
}

impl BucklingSample {
    pub fn pristine(plies: usize) -> Self {
        Self {
            perturbations: vec![0.0; plies],
            mode: None,
            lambdas: Vec::new(),
        }
    }
}

impl BucklingModel {
    pub fn new(config: PlateConfig) -> Result<Self, String> {
        config.validate()?;
        let hierarchy = MeshHierarchy::build(
            config.lx_mm,
            config.ly_mm,
            config.nx0,
            config.ny0,
            config.max_level,
        )
        .map_err(|e| e.to_string())?;
        let laminate = config.laminate();
        let assemblers = (0..=config.max_level).map(|_| OnceLock::new()).collect();
        Ok(Self {
            config,
            laminate,
            hierarchy,
            assemblers,
            warm_start: true,
        })
    }

    pub fn config(&self) -> &PlateConfig {
        &self.config
    }

    pub fn hierarchy(&self) -> &MeshHierarchy {
        &self.hierarchy
    }

    pub fn assembler(&self, level: usize) -> Result<&Assembler, FemError> {
        self.assemblers[level]
            .get_or_init(|| {
                let mesh = self.hierarchy.level(level);
                Assembler::new(mesh, simply_supported_dofs(mesh, self.config.support))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn laminate_for(&self, sample: &BucklingSample) -> Laminate {
        self.laminate.with_perturbations(&sample.perturbations)
    }

    /// Buckling load (kN) and unit-norm mode over the free DOFs.
    pub fn solve_level(
        &self,
        sample: &mut BucklingSample,
        level: usize,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let lam = self.laminate_for(sample);
        let d_star = abd(&lam)
            .map_err(|e| ModelError::Other(e.to_string()))?
            .d_star;
        let asm = self.assembler(level)?;
        let t0 = std::time::Instant::now();
        let system = assemble_rm(
            asm,
            &d_star,
            self.config.shear_stiffness(),
            self.config.thickness(),
            self.config.shear_integration,
        )?;
        let t_assembly = t0.elapsed().as_secs_f64();
        let warm = match (&sample.mode, self.warm_start) {
            (Some((l, mode)), true) if *l + 1 == level => Some(self.prolongate_mode(*l, mode)?),
            (Some((l, mode)), true) if *l == level => Some(mode.clone()),
            _ => None,
        };
        let r = solve_buckling(&system, warm.as_deref())?;
        log::debug!(
            "level {level}: assembly {t_assembly:.3}s, eigen {:.3}s, {} iterations",
            t0.elapsed().as_secs_f64() - t_assembly,
            r.iterations
        );
        let kn = self.config.load_kn(r.lambda);
        sample.mode = Some((level, r.mode.clone()));
        sample.lambdas.push((level, kn));
        Ok((kn, r.mode))
    }

    fn prolongate_mode(&self, coarse_level: usize, mode: &[f64]) -> Result<Vec<f64>, FemError> {
        let coarse = self.assembler(coarse_level)?;
        let fine = self.assembler(coarse_level + 1)?;
        let full = coarse.dofs().expand(mode);
        let fine_full = prolongate(coarse.mesh(), fine.mesh(), &full, 3);
        Ok(fine.dofs().restrict(&fine_full))
    }

    /// Transverse displacement of a mode at every node, for plotting.
    pub fn mode_shape(
        &self,
        level: usize,
        mode: &[f64],
    ) -> Result<Vec<(usize, f64, f64, f64)>, FemError> {
        let asm = self.assembler(level)?;
        let full = asm.dofs().expand(mode);
        let mesh = asm.mesh();
        Ok((0..mesh.node_count())
            .map(|n| {
                let [x, y] = mesh.node_coords(n);
                (n, x, y, full[3 * n])
            })
            .collect())
    }
}

impl LevelModel for BucklingModel {
    type Sample = BucklingSample;

    fn max_level(&self) -> usize {
        self.config.max_level
    }

    fn dof_count(&self, level: usize) -> usize {
        self.hierarchy.dof_count(level, 3)
    }

    fn draw(&self, seed: u64) -> BucklingSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perturbed = perturb_stacking(&self.laminate, self.config.sigma_angle_deg, &mut rng);
        BucklingSample {
            perturbations: perturbed.plies.iter().map(|p| p.perturbation).collect(),
            mode: None,
            lambdas: Vec::new(),
        }
    }

    fn solve(&self, sample: &mut BucklingSample, level: usize) -> Result<f64, ModelError> {
        self.solve_level(sample, level).map(|(kn, _)| kn)
    }
}

/// Pristine buckling load on each level `0..=max_level`.
pub fn pristine_study(config: &PlateConfig) -> Result<Vec<PristineLevel>, String> {
    let model = BucklingModel::new(config.clone())?;
    let mut sample = BucklingSample::pristine(config.stacking_deg.len());
    let mut out = Vec::new();
    for level in 0..=config.max_level {
        let t0 = std::time::Instant::now();
        let kn = model.solve(&mut sample, level).map_err(|e| e.to_string())?;
        out.push(PristineLevel {
            level,
            dof_count: model.dof_count(level),
            lambda_kn: kn,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PristineLevel {
    pub level: usize,
    pub dof_count: usize,
    pub lambda_kn: f64,
    pub seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Isotropic plate with negligible shear deformation.
    fn isotropic_square(n: usize, shear: ShearIntegration) -> (f64, f64) {
        let (e, nu, t, a) = (70.0, 0.3, 1.0, 200.0);
        let cfg = PlateConfig {
            lx_mm: a,
            ly_mm: a,
            ply_thickness_mm: t,
            stacking_deg: vec![0.0],
            e11_gpa: e,
            e22_gpa: e,
            g12_gpa: e / (2.0 * (1.0 + nu)),
            nu12: nu,
            g_transverse_gpa: e / (2.0 * (1.0 + nu)),
            nx0: n,
            ny0: n,
            max_level: 0,
            shear_integration: shear,
            ..PlateConfig::default()
        };
        let d = e * 1e3 * t.powi(3) / (12.0 * (1.0 - nu * nu));
        // N_cr = 4 π² D / b² per unit width, times the loaded width
        let exact_kn = 4.0 * std::f64::consts::PI.powi(2) * d / (a * a) * a * 1e-3;
        let r = pristine_study(&cfg).unwrap();
        (r[0].lambda_kn, exact_kn)
    }

    #[test]
    fn isotropic_square_plate_matches_classical_coefficient() {
        let (kn, exact) = isotropic_square(32, ShearIntegration::Directional);
        assert!((kn - exact).abs() / exact < 0.01, "{kn} vs {exact}");
    }

    #[test]
    fn stiffness_is_spd_and_geometric_is_nsd() {
        let cfg = PlateConfig {
            nx0: 4,
            ny0: 4,
            max_level: 0,
            ..PlateConfig::default()
        };
        let model = BucklingModel::new(cfg.clone()).unwrap();
        let d_star = abd(&cfg.laminate()).unwrap().d_star;
        let sys = assemble_rm(
            model.assembler(0).unwrap(),
            &d_star,
            cfg.shear_stiffness(),
            cfg.thickness(),
            cfg.shear_integration,
        )
        .unwrap();
        let k = sys.k.to_dense();
        assert!(k.clone().symmetric_eigenvalues().min() > 0.0);
        assert!(
            sys.g_geo.to_dense().symmetric_eigenvalues().max()
                <= 1e-9 * sys.g_geo.to_dense().abs().max()
        );
        assert!(sys.k.asymmetry() < 1e-10);
    }

    #[test]
    fn reflected_angles_give_the_same_load() {
        let cfg = PlateConfig {
            nx0: 8,
            ny0: 8,
            max_level: 0,
            ..PlateConfig::default()
        };
        let model = BucklingModel::new(cfg.clone()).unwrap();
        let mut s = model.draw(17);
        let a = model.solve(&mut s, 0).unwrap();
        let mirrored: Vec<f64> = cfg.stacking_deg.iter().map(|x| -x).collect();
        let model_m = BucklingModel::new(PlateConfig {
            stacking_deg: mirrored,
            ..cfg
        })
        .unwrap();
        let mut sm = BucklingSample::pristine(8);
        sm.perturbations = s.perturbations.iter().map(|p| -p).collect();
        let b = model_m.solve(&mut sm, 0).unwrap();
        assert!((a - b).abs() < 1e-7 * a, "{a} vs {b}");
    }
}
