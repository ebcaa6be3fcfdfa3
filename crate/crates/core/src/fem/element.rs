//! Bilinear quadrilateral shape functions and Gauss rules.

use super::FemError;

/// 12x12 element matrix for three fields on four nodes, ordered node-major
/// (`3 * node + field`).
pub type ElementMatrix = nalgebra::SMatrix<f64, 12, 12>;

const G: f64 = 0.577_350_269_189_625_8;

/// Tensor-product Gauss rule on the reference square as `(xi, eta, weight)`.
pub fn gauss_rule(points_xi: usize, points_eta: usize) -> Vec<(f64, f64, f64)> {
    let line = |n: usize| -> &'static [(f64, f64)] {
        match n {
            1 => &[(0.0, 2.0)],
            2 => &[(-G, 1.0), (G, 1.0)],
            _ => panic!("only 1- and 2-point Gauss lines are supported"),
        }
    };
    let mut out = Vec::with_capacity(points_xi * points_eta);
    for &(eta, we) in line(points_eta) {
        for &(xi, wx) in line(points_xi) {
            out.push((xi, eta, wx * we));
        }
    }
    out
}

const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Shape function values, physical gradients and Jacobian determinant at one point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeEval {
    pub n: [f64; 4],
    pub dndx: [f64; 4],
    pub dndy: [f64; 4],
    pub det_j: f64,
    /// Physical coordinates of the evaluation point.
    pub x: [f64; 2],
}

pub fn shape_at(coords: &[[f64; 2]; 4], xi: f64, eta: f64) -> Result<ShapeEval, FemError> {
    let mut n = [0.0; 4];
    let mut dxi = [0.0; 4];
    let mut deta = [0.0; 4];
    for a in 0..4 {
        n[a] = 0.25 * (1.0 + XI[a] * xi) * (1.0 + ETA[a] * eta);
        dxi[a] = 0.25 * XI[a] * (1.0 + ETA[a] * eta);
        deta[a] = 0.25 * ETA[a] * (1.0 + XI[a] * xi);
    }
    let (mut j11, mut j12, mut j21, mut j22) = (0.0, 0.0, 0.0, 0.0);
    let mut x = [0.0; 2];
    for a in 0..4 {
        j11 += dxi[a] * coords[a][0];
        j12 += dxi[a] * coords[a][1];
        j21 += deta[a] * coords[a][0];
        j22 += deta[a] * coords[a][1];
        x[0] += n[a] * coords[a][0];
        x[1] += n[a] * coords[a][1];
    }
    let det_j = j11 * j22 - j12 * j21;
    let scale = (j11.abs() + j12.abs() + j21.abs() + j22.abs()).powi(2);
    if !(det_j > 1e-14 * scale) {
        return Err(FemError::SingularJacobian {
            element: usize::MAX,
            det: det_j,
        });
    }
    let mut dndx = [0.0; 4];
    let mut dndy = [0.0; 4];
    for a in 0..4 {
        dndx[a] = (j22 * dxi[a] - j12 * deta[a]) / det_j;
        dndy[a] = (-j21 * dxi[a] + j11 * deta[a]) / det_j;
    }
    Ok(ShapeEval {
        n,
        dndx,
        dndy,
        det_j,
        x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_gradients() {
        let c = [[0.0, 0.0], [2.0, 0.1], [2.2, 1.0], [-0.1, 1.2]];
        let s = shape_at(&c, 0.3, -0.4).unwrap();
        assert!((s.n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // gradient of the linear field x reproduced exactly
        let gx: f64 = (0..4).map(|a| s.dndx[a] * c[a][0]).sum();
        let gy: f64 = (0..4).map(|a| s.dndy[a] * c[a][0]).sum();
        assert!((gx - 1.0).abs() < 1e-12 && gy.abs() < 1e-12);
    }

    #[test]
    fn rule_weights_sum_to_reference_area() {
        for (p, q) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            let w: f64 = gauss_rule(p, q).iter().map(|g| g.2).sum();
            assert!((w - 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn inverted_element_is_singular() {
        let c = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            shape_at(&c, 0.0, 0.0),
            Err(FemError::SingularJacobian { .. })
        ));
    }
}
