//! Affine maps from the reference simplex onto physical simplices.

use crate::error::{Error, Result};

/// `x = origin + matrix * x_hat`, with the columns of `matrix` being the edge
/// vectors `P_m - P_0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub dim: usize,
    pub origin: [f64; 3],
    pub matrix: [[f64; 3]; 3],
    pub inverse_transpose: [[f64; 3]; 3],
    pub det: f64,
}

impl AffineMap {
    /// Build from the `dim + 1` vertices of a simplex.
    pub fn from_vertices(dim: usize, verts: &[[f64; 3]]) -> Result<Self> {
        if !(dim == 2 || dim == 3) || verts.len() != dim + 1 {
            return Err(Error::invalid(format!("need {} vertices for a {dim}-simplex", dim + 1)));
        }
        let mut a = [[0.0; 3]; 3];
        for m in 0..dim {
            for i in 0..dim {
                a[i][m] = verts[m + 1][i] - verts[0][i];
            }
        }
        let (inv, det) = invert(dim, &a);
        let scale: f64 = (0..dim).map(|i| (0..dim).map(|j| a[i][j].abs()).sum::<f64>()).fold(0.0, f64::max);
        if det.abs() <= 1e-14 * scale.powi(dim as i32) || !det.is_finite() {
            return Err(Error::Mesh(format!("degenerate simplex (det = {det:e})")));
        }
        let mut it = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                it[i][j] = inv[j][i];
            }
        }
        Ok(Self { dim, origin: verts[0], matrix: a, inverse_transpose: it, det })
    }

    pub fn identity(dim: usize) -> Self {
        let mut id = [[0.0; 3]; 3];
        for (i, row) in id.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self { dim, origin: [0.0; 3], matrix: id, inverse_transpose: id, det: 1.0 }
    }

    pub fn apply(&self, xh: &[f64; 3]) -> [f64; 3] {
        let mut x = self.origin;
        for (i, xi) in x.iter_mut().enumerate().take(self.dim) {
            for j in 0..self.dim {
                *xi += self.matrix[i][j] * xh[j];
            }
        }
        x
    }

    pub fn apply_inverse(&self, x: &[f64; 3]) -> [f64; 3] {
        // x_hat = A^{-1}(x - origin) = (A^{-T})^T (x - origin)
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate().take(self.dim) {
            for i in 0..self.dim {
                *o += self.inverse_transpose[i][j] * (x[i] - self.origin[i]);
            }
        }
        out
    }

    /// `|K| = |det A| / d!`
    pub fn volume(&self) -> f64 {
        let fact = if self.dim == 2 { 2.0 } else { 6.0 };
        self.det.abs() / fact
    }

    /// Cartesian gradient of a P1 function from its vertex values:
    /// `grad = A^{-T} (u_m - u_0)_m`.
    pub fn gradient(&self, vals: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate().take(self.dim) {
            for m in 0..self.dim {
                *gi += self.inverse_transpose[i][m] * (vals[m + 1] - vals[0]);
            }
        }
        g
    }

    /// Gradients of the barycentric coordinates `eta_0..eta_d`.
    pub fn barycentric_gradients(&self) -> [[f64; 3]; 4] {
        let mut g = [[0.0; 3]; 4];
        for m in 0..self.dim {
            for i in 0..self.dim {
                g[m + 1][i] = self.inverse_transpose[i][m];
                g[0][i] -= self.inverse_transpose[i][m];
            }
        }
        g
    }

    /// `||A^T||_2 * ||A^{-T}||_2` (spectral condition number).
    pub fn condition(&self) -> f64 {
        spectral_norm(self.dim, &self.matrix) * spectral_norm(self.dim, &self.inverse_transpose)
    }
}

fn invert(dim: usize, a: &[[f64; 3]; 3]) -> ([[f64; 3]; 3], f64) {
    let mut inv = [[0.0; 3]; 3];
    if dim == 2 {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        inv[0][0] = a[1][1] / det;
        inv[0][1] = -a[0][1] / det;
        inv[1][0] = -a[1][0] / det;
        inv[1][1] = a[0][0] / det;
        return (inv, det);
    }
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    (inv, det)
}

fn spectral_norm(dim: usize, a: &[[f64; 3]; 3]) -> f64 {
    // largest eigenvalue of A^T A
    let mut ata = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            ata[i][j] = (0..dim).map(|k| a[k][i] * a[k][j]).sum();
        }
    }
    let s = crate::tensor::SymMat::from_full(dim, &ata);
    s.eigen().max_value().max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_simplex_is_identity() {
        let m = AffineMap::from_vertices(2, &[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(m, AffineMap::identity(2));
    }

    #[test]
    fn scaled_triangle() {
        let m = AffineMap::from_vertices(2, &[[0.0; 3], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        assert_eq!(m.det, 4.0);
        assert_eq!(m.volume(), 2.0);
        assert_abs_diff_eq!(m.condition(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_roundtrip_3d() {
        let v = [[0.1, 0.2, 0.3], [1.3, 0.1, 0.2], [0.2, 1.1, -0.1], [0.0, 0.4, 0.9]];
        let m = AffineMap::from_vertices(3, &v).unwrap();
        let xh = [0.2, 0.3, 0.1];
        let back = m.apply_inverse(&m.apply(&xh));
        for k in 0..3 {
            assert_abs_diff_eq!(back[k], xh[k], epsilon = 1e-14);
        }
        // A * A^{-1} = I
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m.matrix[i][k] * m.inverse_transpose[j][k]).sum();
                assert_abs_diff_eq!(s, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn degenerate_rejected() {
        assert!(AffineMap::from_vertices(2, &[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).is_err());
    }
}
