//! Smallest positive eigenvalue of `K d = λ G d` by shift-invert Lanczos.
//!
//! With shift zero the operator `S = K⁻¹ G` is self-adjoint in the `K` inner
//! product and its largest eigenvalue is `1/λ_min`. Each step costs one
//! triangular solve pair with the factor of `K`, which is computed once.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::assembly::{dot, norm, Cholesky, SparseSystem};
use super::FemError;

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Relative eigenvalue tolerance.
    pub tol: f64,
    /// Krylov basis size before an explicit restart.
    pub max_basis: usize,
    pub max_restarts: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_basis: 30,
            max_restarts: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// Unit 2-norm, largest-magnitude component positive.
    pub mode: Vec<f64>,
    /// `‖K d − λ G d‖ / ‖K d‖`
    pub residual: f64,
    pub iterations: usize,
}

pub fn smallest_eigenvalue(
    k: &SparseSystem,
    g: &SparseSystem,
    warm_start: Option<&[f64]>,
) -> Result<EigenResult, FemError> {
    smallest_eigenvalue_with(k, g, warm_start, EigenOptions::default())
}

pub fn smallest_eigenvalue_with(
    k: &SparseSystem,
    g: &SparseSystem,
    warm_start: Option<&[f64]>,
    opts: EigenOptions,
) -> Result<EigenResult, FemError> {
    let chol = k.cholesky()?;
    smallest_eigenvalue_factored(k, &chol, g, warm_start, opts)
}

/// As [`smallest_eigenvalue_with`] with a precomputed factor of `K`.
pub fn smallest_eigenvalue_factored(
    k: &SparseSystem,
    chol: &Cholesky,
    g: &SparseSystem,
    warm_start: Option<&[f64]>,
    opts: EigenOptions,
) -> Result<EigenResult, FemError> {
    let n = k.dim();
    if n == 0 || g.dim() != n {
        return Err(FemError::InvalidMesh(format!(
            "eigenproblem dimensions {n} and {}",
            g.dim()
        )));
    }
    let apply_s = |x: &[f64]| chol.solve(&g.apply(x));

    let start: Vec<f64> = match warm_start {
        Some(w) if w.len() == n && norm(w) > 0.0 => w.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    };
    // one application of S removes components in the null space of G
    let mut v = apply_s(&start);
    let mut history = Vec::new();
    let mut theta_prev = f64::NAN;
    let mut total_steps = 0;
    let basis_cap = opts.max_basis.max(2).min(n);

    for _restart in 0..=opts.max_restarts {
        let kv = k.apply(&v);
        let vnorm = dot(&v, &kv).max(0.0).sqrt();
        if !(vnorm > 0.0) {
            return Err(FemError::NoPositiveEigenvalue);
        }
        let mut q: Vec<Vec<f64>> = vec![v.iter().map(|x| x / vnorm).collect()];
        let mut kq: Vec<Vec<f64>> = vec![kv.iter().map(|x| x / vnorm).collect()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut last = None;

        for j in 0..basis_cap {
            total_steps += 1;
            let gq = g.apply(&q[j]);
            let mut w = chol.solve(&gq);
            alpha.push(dot(&q[j], &gq));
            // full K-orthogonalisation, applied twice for stability
            for _ in 0..2 {
                for i in 0..=j {
                    let c = dot(&kq[i], &w);
                    w.iter_mut().zip(&q[i]).for_each(|(w, q)| *w -= c * q);
                }
            }
            let kw = k.apply(&w);
            let b = dot(&w, &kw).max(0.0).sqrt();

            let (theta, s) = largest_ritz(&alpha, &beta);
            let est = (b * s[j]).abs() / theta.abs().max(f64::MIN_POSITIVE);
            history.push(theta);
            last = Some((theta, s, est));
            let invariant = b
                <= 1e-14
                    * alpha
                        .iter()
                        .fold(0.0f64, |m, a| m.max(a.abs()))
                        .max(f64::MIN_POSITIVE);
            if est <= opts.tol || invariant || j + 1 == basis_cap {
                break;
            }
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
            kq.push(kw.iter().map(|x| x / b).collect());
        }

        let (theta, s, est) = last.expect("at least one Lanczos step");
        if !(theta > 0.0) {
            return Err(FemError::NoPositiveEigenvalue);
        }
        let mut x = vec![0.0; n];
        for (si, qi) in s.iter().zip(&q) {
            x.iter_mut().zip(qi).for_each(|(x, q)| *x += si * q);
        }
        let lambda = 1.0 / theta;
        let settled = (theta - theta_prev).abs() <= opts.tol * theta;
        theta_prev = theta;
        if est <= opts.tol || settled || x.len() == q.len() {
            let residual = relative_residual(k, g, &x, lambda);
            if residual <= opts.tol.sqrt() || x.len() == q.len() {
                normalise_mode(&mut x);
                return Ok(EigenResult {
                    lambda,
                    mode: x,
                    residual,
                    iterations: total_steps,
                });
            }
        }
        v = x;
    }
    Err(FemError::EigenNoConvergence {
        iterations: total_steps,
        ritz_history: history,
    })
}

fn largest_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (
        theta,
        eig.eigenvectors.column(idx).iter().copied().collect(),
    )
}

fn relative_residual(k: &SparseSystem, g: &SparseSystem, x: &[f64], lambda: f64) -> f64 {
    let kx = k.apply(x);
    let gx = g.apply(x);
    let r: Vec<f64> = kx.iter().zip(&gx).map(|(a, b)| a - lambda * b).collect();
    norm(&r) / norm(&kx).max(f64::MIN_POSITIVE)
}

fn normalise_mode(x: &mut [f64]) {
    let nrm = norm(x);
    let pivot = x
        .iter()
        .copied()
        .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let scale = pivot.signum() / nrm;
    x.iter_mut().for_each(|v| *v *= scale);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assembly::{Assembler, DofMap};
    use crate::fem::element::ElementMatrix;
    use crate::fem::mesh::QuadMesh;

    /// Diagonal systems built on a single 12-DOF element.
    fn diagonal_pair(kd: &[f64; 12], gd: &[f64; 12]) -> (SparseSystem, SparseSystem) {
        let mesh = QuadMesh::new(1.0, 1.0, 1, 1).unwrap();
        let asm = Assembler::new(&mesh, DofMap::new(4, 3, [])).unwrap();
        let k = asm.assemble_uniform(&ElementMatrix::from_diagonal(&(*kd).into()));
        let g = asm.assemble_uniform(&ElementMatrix::from_diagonal(&(*gd).into()));
        (k, g)
    }

    #[test]
    fn diagonal_pencil() {
        let mut kd = [10.0; 12];
        kd[0] = 2.0;
        kd[1] = 3.0;
        let mut gd = [0.0; 12];
        gd[0] = 1.0;
        gd[1] = 1.0;
        let (k, g) = diagonal_pair(&kd, &gd);
        let r = smallest_eigenvalue(&k, &g, None).unwrap();
        assert!((r.lambda - 2.0).abs() < 1e-12);
        assert!((r.mode[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn negative_definite_g_has_no_positive_eigenvalue() {
        let (k, g) = diagonal_pair(&[1.0; 12], &[-1.0; 12]);
        assert!(matches!(
            smallest_eigenvalue(&k, &g, None),
            Err(FemError::NoPositiveEigenvalue)
        ));
    }

    /// Bottom row of a 1×n strip with only field 0 free at interior nodes:
    /// a chain of n−1 unknowns.
    fn chain(n_el: usize) -> Assembler {
        let mesh = QuadMesh::new(n_el as f64, 1.0, n_el, 1).unwrap();
        let nodes = mesh.node_count();
        let fixed: Vec<_> = (0..nodes * 3)
            .filter(|&d| {
                let (i, j) = mesh.node_ij(d / 3);
                !(d % 3 == 0 && j == 0 && i > 0 && i < n_el)
            })
            .map(|d| (d, 0.0))
            .collect();
        Assembler::new(&mesh, DofMap::new(nodes, 3, fixed)).unwrap()
    }

    /// Second-difference stiffness with a lumped unit mass: the discrete
    /// analogue of a pinned column, `λ_1 = 4 sin²(π / 2n)`.
    #[test]
    fn discrete_column_closed_form() {
        let n_el = 16;
        let asm = chain(n_el);
        let mut spring = ElementMatrix::zeros();
        spring[(0, 0)] = 1.0;
        spring[(3, 3)] = 1.0;
        spring[(0, 3)] = -1.0;
        spring[(3, 0)] = -1.0;
        let mut mass = ElementMatrix::zeros();
        mass[(0, 0)] = 0.5;
        mass[(3, 3)] = 0.5;
        let k = asm.assemble_uniform(&spring);
        let g = asm.assemble_uniform(&mass);
        assert_eq!(k.dim(), n_el - 1);
        let exact = 4.0 * (std::f64::consts::PI / (2.0 * n_el as f64)).sin().powi(2);
        let r = smallest_eigenvalue(&k, &g, None).unwrap();
        assert!(
            (r.lambda - exact).abs() / exact < 1e-6,
            "{} vs {exact}",
            r.lambda
        );
        assert!((norm(&r.mode) - 1.0).abs() < 1e-12);
    }

    fn dense_smallest_positive(k: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
        let l = k.clone().cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let a = &li * g * li.transpose();
        let mu = SymmetricEigen::new(a).eigenvalues.max();
        1.0 / mu
    }

    #[test]
    fn random_pencils_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mesh = QuadMesh::new(1.0, 1.0, 3, 2).unwrap();
        let fixed: Vec<_> = (0..3).map(|d| (d, 0.0)).collect();
        let asm = Assembler::new(&mesh, DofMap::new(mesh.node_count(), 3, fixed)).unwrap();
        for _ in 0..10 {
            let (k, _) = asm
                .assemble(|_, _| {
                    let b = ElementMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
                    Ok(b.transpose() * b + ElementMatrix::identity() * 0.2)
                })
                .unwrap();
            // positive semidefinite G of low rank per element
            let (g, _) = asm
                .assemble(|_, _| {
                    let c =
                        nalgebra::SVector::<f64, 12>::from_fn(|_, _| rng.random_range(-1.0..1.0));
                    Ok(c * c.transpose())
                })
                .unwrap();
            let oracle = dense_smallest_positive(&k.to_dense(), &g.to_dense());
            let r = smallest_eigenvalue(&k, &g, None).unwrap();
            assert!(
                (r.lambda - oracle).abs() / oracle < 1e-8,
                "{} vs {oracle}",
                r.lambda
            );
            assert!(r.residual < 1e-6);
        }
    }

    #[test]
    fn warm_start_converges_faster() {
        let n_el = 64;
        let asm = chain(n_el);
        let mut spring = ElementMatrix::zeros();
        spring[(0, 0)] = 1.0;
        spring[(3, 3)] = 1.0;
        spring[(0, 3)] = -1.0;
        spring[(3, 0)] = -1.0;
        let mut mass = ElementMatrix::zeros();
        mass[(0, 0)] = 0.5;
        mass[(3, 3)] = 0.5;
        let k = asm.assemble_uniform(&spring);
        let g = asm.assemble_uniform(&mass);
        let cold = smallest_eigenvalue(&k, &g, None).unwrap();
        let warm = smallest_eigenvalue(&k, &g, Some(&cold.mode)).unwrap();
        assert!(warm.iterations <= cold.iterations);
        assert!((warm.lambda - cold.lambda).abs() / cold.lambda < 1e-10);
    }
}
