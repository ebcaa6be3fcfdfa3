//! DOF numbering with Dirichlet elimination, sparse assembly and linear solves.

use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Side};

use super::element::ElementMatrix;
use super::mesh::QuadMesh;
use super::FemError;

const FREE: u32 = u32::MAX;

/// Global-to-reduced numbering of nodal DOFs with prescribed values on
/// constrained DOFs. Global DOF ids are `fields * node + field`.
#[derive(Debug, Clone)]
pub struct DofMap {
    fields: usize,
    reduced: Vec<u32>,
    free: Vec<usize>,
    prescribed: Vec<f64>,
}

impl DofMap {
    pub fn new(
        node_count: usize,
        fields: usize,
        constraints: impl IntoIterator<Item = (usize, f64)>,
    ) -> Self {
        let total = node_count * fields;
        let mut prescribed = vec![0.0; total];
        let mut is_fixed = vec![false; total];
        for (dof, value) in constraints {
            is_fixed[dof] = true;
            prescribed[dof] = value;
        }
        let mut reduced = vec![FREE; total];
        let mut free = Vec::with_capacity(total);
        for dof in 0..total {
            if !is_fixed[dof] {
                reduced[dof] = free.len() as u32;
                free.push(dof);
            }
        }
        Self {
            fields,
            reduced,
            free,
            prescribed,
        }
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    /// `M = fields * nnode`, constrained DOFs included.
    pub fn total(&self) -> usize {
        self.reduced.len()
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    #[inline]
    pub fn reduced_index(&self, dof: usize) -> Option<usize> {
        let r = self.reduced[dof];
        (r != FREE).then_some(r as usize)
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn prescribed(&self, dof: usize) -> f64 {
        self.prescribed[dof]
    }

    /// Scatters a reduced vector into a full-length vector carrying prescribed values.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = self.prescribed.clone();
        for (r, &dof) in self.free.iter().enumerate() {
            full[dof] = reduced[r];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }
}

/// Symmetric sparse matrix over the free DOFs, stored as full compressed columns.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

#[derive(Debug)]
struct Pattern {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic_llt: OnceLock<Result<SymbolicLlt<usize>, String>>,
}

impl SparseSystem {
    pub fn dim(&self) -> usize {
        self.pattern.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column `c` as `(row indices, values)`.
    pub fn column(&self, c: usize) -> (&[usize], &[f64]) {
        let p = &self.pattern;
        let r = p.col_ptr[c]..p.col_ptr[c + 1];
        (&p.row_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (rows, vals) = self.column(col);
        rows.binary_search(&row).map(|k| vals[k]).unwrap_or(0.0)
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let p = &self.pattern;
        for c in 0..p.dim {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                y[p.row_idx[k]] += self.values[k] * xc;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec(x, &mut y);
        y
    }

    /// `max |a_ij - a_ji| / max |a_ij|`
    pub fn asymmetry(&self) -> f64 {
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for c in 0..self.dim() {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                scale = scale.max(v.abs());
                diff = diff.max((v - self.get(c, r)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    /// A matrix with the same pattern and `values = sum_i w_i * parts_i.values`.
    pub fn linear_combination(parts: &[(&SparseSystem, f64)]) -> SparseSystem {
        let first = parts[0].0;
        let mut values = vec![0.0; first.nnz()];
        for (m, w) in parts {
            debug_assert!(Arc::ptr_eq(&m.pattern, &first.pattern));
            values
                .iter_mut()
                .zip(&m.values)
                .for_each(|(v, &x)| *v += w * x);
        }
        SparseSystem {
            pattern: first.pattern.clone(),
            values,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut d = nalgebra::DMatrix::zeros(n, n);
        for c in 0..n {
            let (rows, vals) = self.column(c);
            for (&r, &v) in rows.iter().zip(vals) {
                d[(r, c)] = v;
            }
        }
        d
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let p = &self.pattern;
        let sym = SymbolicSparseColMatRef::new_checked(p.dim, p.dim, &p.col_ptr, None, &p.row_idx);
        SparseColMatRef::new(sym, &self.values)
    }

    /// Sparse Cholesky factorization. The symbolic analysis (fill-reducing
    /// ordering and elimination tree) is shared by all matrices assembled from
    /// the same [`Assembler`].
    pub fn cholesky(&self) -> Result<Cholesky, FemError> {
        let symbolic = self
            .pattern
            .symbolic_llt
            .get_or_init(|| {
                SymbolicLlt::try_new(self.as_faer().symbolic(), Side::Lower)
                    .map_err(|e| format!("{e:?}"))
            })
            .clone()
            .map_err(FemError::Factorization)?;
        let llt = Llt::try_new_with_symbolic(symbolic, self.as_faer(), Side::Lower)
            .map_err(|e| FemError::Factorization(format!("{e:?}")))?;
        Ok(Cholesky {
            llt,
            dim: self.dim(),
        })
    }
}

/// A numeric sparse `L L^T` factorization.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    dim: usize,
}

impl Cholesky {
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.dim);
        let n = rhs.len();
        self.llt
            .solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(rhs, n, 1));
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Precomputed sparsity pattern and element scatter map for one mesh and DOF map.
#[derive(Debug)]
pub struct Assembler {
    mesh: QuadMesh,
    dofs: DofMap,
    pattern: Arc<Pattern>,
    /// For each element, 144 positions into the value array (or `FREE`).
    scatter: Vec<u32>,
}

impl Assembler {
    pub fn new(mesh: &QuadMesh, dofs: DofMap) -> Result<Self, FemError> {
        let fields = dofs.fields();
        if fields * 4 != 12 {
            return Err(FemError::InvalidMesh(
                "assembly expects three fields per node".into(),
            ));
        }
        // node adjacency through shared elements
        let nn = mesh.node_count();
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(9); nn];
        for e in 0..mesh.element_count() {
            let nodes = mesh.element_nodes(e);
            for &a in &nodes {
                for &b in &nodes {
                    if !adj[a].contains(&b) {
                        adj[a].push(b);
                    }
                }
            }
        }
        adj.iter_mut().for_each(|v| v.sort_unstable());

        let dim = dofs.free_count();
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for &col_dof in dofs.free_dofs() {
            let node = col_dof / fields;
            for &nb in &adj[node] {
                for f in 0..fields {
                    if let Some(r) = dofs.reduced_index(nb * fields + f) {
                        row_idx.push(r);
                    }
                }
            }
            col_ptr.push(row_idx.len());
        }
        if row_idx.len() > FREE as usize {
            return Err(FemError::InvalidMesh(
                "pattern exceeds the scatter index range".into(),
            ));
        }

        let mut scatter = vec![FREE; mesh.element_count() * 144];
        for e in 0..mesh.element_count() {
            let ed = element_dofs(mesh, e, fields);
            for b in 0..12 {
                let Some(c) = dofs.reduced_index(ed[b]) else {
                    continue;
                };
                let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
                for a in 0..12 {
                    if let Some(r) = dofs.reduced_index(ed[a]) {
                        let k = rows
                            .binary_search(&r)
                            .expect("pattern contains element couplings");
                        scatter[e * 144 + b * 12 + a] = (col_ptr[c] + k) as u32;
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern {
            dim,
            col_ptr,
            row_idx,
            symbolic_llt: OnceLock::new(),
        });
        Ok(Self {
            mesh: mesh.clone(),
            dofs,
            pattern,
            scatter,
        })
    }

    pub fn mesh(&self) -> &QuadMesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Assembles the reduced matrix and the load vector induced by prescribed
    /// DOF values (`f_free = -K_fc * g_c`).
    ///
    /// `kernel(e, coords)` returns the symmetric element matrix of element `e`.
    pub fn assemble<F>(&self, mut kernel: F) -> Result<(SparseSystem, Vec<f64>), FemError>
    where
        F: FnMut(usize, &[[f64; 2]; 4]) -> Result<ElementMatrix, FemError>,
    {
        let mut values = vec![0.0; self.pattern.row_idx.len()];
        let mut rhs = vec![0.0; self.pattern.dim];
        let fields = self.dofs.fields();
        for e in 0..self.mesh.element_count() {
            let coords = self.mesh.element_coords(e);
            let ke = kernel(e, &coords).map_err(|err| match err {
                FemError::SingularJacobian { det, .. } => {
                    FemError::SingularJacobian { element: e, det }
                }
                other => other,
            })?;
            let ed = element_dofs(&self.mesh, e, fields);
            let map = &self.scatter[e * 144..(e + 1) * 144];
            for b in 0..12 {
                let g = self.dofs.prescribed(ed[b]);
                let col_free = self.dofs.reduced_index(ed[b]).is_some();
                for a in 0..12 {
                    let pos = map[b * 12 + a];
                    if pos != FREE {
                        values[pos as usize] += ke[(a, b)];
                    } else if !col_free && g != 0.0 {
                        if let Some(r) = self.dofs.reduced_index(ed[a]) {
                            rhs[r] -= ke[(a, b)] * g;
                        }
                    }
                }
            }
        }
        Ok((
            SparseSystem {
                pattern: self.pattern.clone(),
                values,
            },
            rhs,
        ))
    }

    /// Assembles with one element matrix shared by every element.
    pub fn assemble_uniform(&self, ke: &ElementMatrix) -> SparseSystem {
        let mut values = vec![0.0; self.pattern.row_idx.len()];
        for map in self.scatter.chunks_exact(144) {
            for b in 0..12 {
                for a in 0..12 {
                    let pos = map[b * 12 + a];
                    if pos != FREE {
                        values[pos as usize] += ke[(a, b)];
                    }
                }
            }
        }
        SparseSystem {
            pattern: self.pattern.clone(),
            values,
        }
    }
}

pub(crate) fn element_dofs(mesh: &QuadMesh, e: usize, fields: usize) -> [usize; 12] {
    let nodes = mesh.element_nodes(e);
    let mut out = [0; 12];
    for (a, &n) in nodes.iter().enumerate() {
        for f in 0..fields {
            out[a * fields + f] = n * fields + f;
        }
    }
    out
}

/// Linear solver choice for [`solve_linear`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Direct factorization below `direct_limit` DOFs, Jacobi-preconditioned CG above.
    Auto {
        direct_limit: usize,
    },
    Direct,
    Cg {
        max_iter: usize,
    },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Auto {
            direct_limit: 200_000,
        }
    }
}

pub const LINEAR_RESIDUAL_TOL: f64 = 1e-9;

/// Solves `K x = f` for SPD `K` to a relative residual of at most 1e-9.
pub fn solve_linear(
    system: &SparseSystem,
    rhs: &[f64],
    solver: LinearSolver,
) -> Result<Vec<f64>, FemError> {
    let n = system.dim();
    let use_direct = match solver {
        LinearSolver::Auto { direct_limit } => n <= direct_limit,
        LinearSolver::Direct => true,
        LinearSolver::Cg { .. } => false,
    };
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if use_direct {
        let chol = system.cholesky()?;
        let mut x = chol.solve(rhs);
        // one step of iterative refinement keeps the residual contract on ill-conditioned systems
        let mut r = residual(system, &x, rhs);
        let mut rel = norm(&r) / rhs_norm;
        if rel > LINEAR_RESIDUAL_TOL {
            chol.solve_in_place(&mut r);
            x.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
            rel = norm(&residual(system, &x, rhs)) / rhs_norm;
        }
        if rel > LINEAR_RESIDUAL_TOL {
            return Err(FemError::NoConvergence {
                iterations: 1,
                residuals: vec![rel],
            });
        }
        Ok(x)
    } else {
        let max_iter = match solver {
            LinearSolver::Cg { max_iter } => max_iter,
            _ => 20 * n,
        };
        conjugate_gradient(system, rhs, LINEAR_RESIDUAL_TOL, max_iter)
    }
}

fn residual(a: &SparseSystem, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.apply(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    r
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Diagonally preconditioned conjugate gradients.
pub fn conjugate_gradient(
    a: &SparseSystem,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, FemError> {
    let n = a.dim();
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            history.push(norm(&r) / b_norm);
            return Err(FemError::NoConvergence {
                iterations: it,
                residuals: history,
            });
        }
        let step = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= step * ap);
        let rel = norm(&r) / b_norm;
        if it % 50 == 0 {
            history.push(rel);
        }
        if rel <= tol {
            return Ok(x);
        }
        z.iter_mut()
            .zip(r.iter().zip(&inv_diag))
            .for_each(|(z, (r, d))| *z = r * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    history.push(norm(&r) / b_norm);
    Err(FemError::NoConvergence {
        iterations: max_iter,
        residuals: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_element() -> QuadMesh {
        QuadMesh::new(1.0, 1.0, 1, 1).unwrap()
    }

    #[test]
    fn identity_kernel_on_one_element() {
        let mesh = one_element();
        let asm = Assembler::new(&mesh, DofMap::new(4, 3, [])).unwrap();
        let (k, rhs) = asm.assemble(|_, _| Ok(ElementMatrix::identity())).unwrap();
        let d = k.to_dense();
        assert_eq!(d, nalgebra::DMatrix::identity(12, 12));
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    fn random_spd_kernel(rng: &mut ChaCha8Rng) -> ElementMatrix {
        let b = nalgebra::SMatrix::<f64, 12, 12>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        b.transpose() * b + ElementMatrix::identity() * 0.1
    }

    #[test]
    fn assembled_matrix_is_symmetric() {
        let mesh = QuadMesh::new(2.0, 1.0, 4, 3).unwrap();
        let dofs = DofMap::new(mesh.node_count(), 3, (0..3).map(|d| (d, 0.0)));
        let asm = Assembler::new(&mesh, dofs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (k, _) = asm
            .assemble(|_, _| Ok(random_spd_kernel(&mut rng)))
            .unwrap();
        assert!(k.asymmetry() < 1e-10);
    }

    #[test]
    fn dirichlet_values_fold_into_rhs() {
        // dense reference: eliminate constrained dofs by hand
        let mesh = QuadMesh::new(1.0, 1.0, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kernels: Vec<ElementMatrix> = (0..2).map(|_| random_spd_kernel(&mut rng)).collect();
        let fixed = [(0usize, 0.5), (4, -0.25)];
        let asm = Assembler::new(&mesh, DofMap::new(mesh.node_count(), 3, fixed)).unwrap();
        let (k, rhs) = asm.assemble(|e, _| Ok(kernels[e])).unwrap();

        let total = 3 * mesh.node_count();
        let mut full = nalgebra::DMatrix::<f64>::zeros(total, total);
        for e in 0..2 {
            let ed = element_dofs(&mesh, e, 3);
            for a in 0..12 {
                for b in 0..12 {
                    full[(ed[a], ed[b])] += kernels[e][(a, b)];
                }
            }
        }
        let dofs = asm.dofs();
        for (r, &gr) in dofs.free_dofs().iter().enumerate() {
            let expect: f64 = fixed.iter().map(|&(d, g)| -full[(gr, d)] * g).sum();
            assert!((rhs[r] - expect).abs() < 1e-12);
            for (c, &gc) in dofs.free_dofs().iter().enumerate() {
                assert!((k.get(r, c) - full[(gr, gc)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_jacobian_reports_element() {
        let mesh = QuadMesh::new(1.0, 1.0, 2, 2).unwrap();
        let asm = Assembler::new(&mesh, DofMap::new(mesh.node_count(), 3, [])).unwrap();
        let err = asm
            .assemble(|e, _| {
                if e == 3 {
                    Err(FemError::SingularJacobian {
                        element: usize::MAX,
                        det: 0.0,
                    })
                } else {
                    Ok(ElementMatrix::identity())
                }
            })
            .unwrap_err();
        assert!(matches!(err, FemError::SingularJacobian { element: 3, .. }));
    }

    #[test]
    fn identity_system_returns_rhs() {
        let mesh = one_element();
        let asm = Assembler::new(&mesh, DofMap::new(4, 3, [])).unwrap();
        let k = asm.assemble_uniform(&ElementMatrix::identity());
        let rhs: Vec<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        for solver in [LinearSolver::Direct, LinearSolver::Cg { max_iter: 10 }] {
            let x = solve_linear(&k, &rhs, solver).unwrap();
            assert!(x.iter().zip(&rhs).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }

    #[test]
    fn residual_contract_on_random_spd_assemblies() {
        let mesh = QuadMesh::new(1.0, 1.0, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let dofs = DofMap::new(mesh.node_count(), 3, [(0, 0.0), (1, 0.0), (2, 0.0)]);
            let asm = Assembler::new(&mesh, dofs).unwrap();
            let (k, _) = asm
                .assemble(|_, _| Ok(random_spd_kernel(&mut rng)))
                .unwrap();
            let rhs: Vec<f64> = (0..k.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let solver = if trial % 2 == 0 {
                LinearSolver::Direct
            } else {
                LinearSolver::Cg { max_iter: 5000 }
            };
            let x = solve_linear(&k, &rhs, solver).unwrap();
            let rel = norm(&residual(&k, &x, &rhs)) / norm(&rhs);
            assert!(rel <= LINEAR_RESIDUAL_TOL, "trial {trial}: {rel}");
        }
    }
}
