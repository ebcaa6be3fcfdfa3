//! Structured quadrilateral meshes and nested uniform refinement.

use super::FemError;

/// A structured tensor-grid mesh of 4-node quadrilaterals on `[0, lx] x [0, ly]`.
///
/// Nodes are numbered row by row (`id = j * (nx + 1) + i`), elements likewise,
/// and element connectivity runs counter-clockwise from the lower-left node.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl QuadMesh {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, FemError> {
        if nx == 0 || ny == 0 {
            return Err(FemError::InvalidMesh(
                "element counts must be positive".into(),
            ));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(FemError::InvalidMesh("extents must be positive".into()));
        }
        let nodes = (nx + 1)
            .checked_mul(ny + 1)
            .and_then(|n| n.checked_mul(3))
            .filter(|&n| n <= u32::MAX as usize);
        if nodes.is_none() {
            return Err(FemError::InvalidMesh(format!(
                "{nx}x{ny} mesh overflows the node index range"
            )));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Grid indices `(i, j)` of a node.
    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(node);
        [i as f64 * self.hx(), j as f64 * self.hy()]
    }

    /// Counter-clockwise node ids of element `e`.
    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = (e % self.nx, e / self.nx);
        [
            self.node_id(i, j),
            self.node_id(i + 1, j),
            self.node_id(i + 1, j + 1),
            self.node_id(i, j + 1),
        ]
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.element_nodes(e).map(|n| self.node_coords(n))
    }

    /// Lower-left corner and upper-right corner of element `e`.
    pub fn element_bounds(&self, e: usize) -> ([f64; 2], [f64; 2]) {
        let c = self.element_coords(e);
        (c[0], c[2])
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let (i, j) = self.node_ij(node);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// The uniformly refined mesh with every element split into four.
    pub fn refined(&self) -> Result<Self, FemError> {
        Self::new(self.lx, self.ly, 2 * self.nx, 2 * self.ny)
    }
}

/// Nested meshes obtained by repeated uniform refinement of a coarse mesh.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<QuadMesh>,
}

/// Degrees-of-freedom ratio between consecutive levels of a 2D uniform refinement.
pub const REFINEMENT_FACTOR: usize = 4;

impl MeshHierarchy {
    /// Builds levels `0..=max_level`, level `l` having `nx0 * 2^l` by `ny0 * 2^l` elements.
    pub fn build(
        lx: f64,
        ly: f64,
        nx0: usize,
        ny0: usize,
        max_level: usize,
    ) -> Result<Self, FemError> {
        let mut levels = vec![QuadMesh::new(lx, ly, nx0, ny0)?];
        for _ in 0..max_level {
            let next = levels.last().expect("non-empty").refined()?;
            levels.push(next);
        }
        Ok(Self { levels })
    }

    pub fn level(&self, l: usize) -> &QuadMesh {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[QuadMesh] {
        &self.levels
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// `M_l = 3 * nnode` on level `l`.
    pub fn dof_count(&self, l: usize, fields_per_node: usize) -> usize {
        fields_per_node * self.levels[l].node_count()
    }
}

/// Bilinear interpolation of nodal fields from `coarse` onto its refinement `fine`.
///
/// `values` holds `fields` interleaved components per coarse node. The result is
/// the exact representation of the coarse bilinear field on the fine nodes.
pub fn prolongate(coarse: &QuadMesh, fine: &QuadMesh, values: &[f64], fields: usize) -> Vec<f64> {
    debug_assert_eq!(fine.nx, 2 * coarse.nx);
    debug_assert_eq!(fine.ny, 2 * coarse.ny);
    let mut out = vec![0.0; fine.node_count() * fields];
    for j in 0..=fine.ny {
        for i in 0..=fine.nx {
            let (i0, i1) = (i / 2, (i + 1) / 2);
            let (j0, j1) = (j / 2, (j + 1) / 2);
            let dst = fine.node_id(i, j) * fields;
            for f in 0..fields {
                let at = |a: usize, b: usize| values[coarse.node_id(a, b) * fields + f];
                out[dst + f] = 0.25 * (at(i0, j0) + at(i1, j0) + at(i0, j1) + at(i1, j1));
            }
        }
    }
    out
}
