//! Small symmetric matrices and their spectral calculus.
//!
//! [`SymMat`] stores the `d(d+1)/2` independent entries of a symmetric `d x d`
//! matrix (`d` is 2 or 3), so symmetry holds by representation. Matrix
//! functions are defined through the eigen-decomposition `B = U diag(s) U^T`,
//! `f(B) = U diag(f(s)) U^T`. The 2x2 case uses a closed form; 3x3 uses cyclic
//! Jacobi rotations.

use std::fmt;

use crate::error::{Error, Result};

/// Off-diagonal magnitude (relative to the trace scale) below which a 2x2
/// matrix is treated as already diagonal.
const DIAGONAL_TOL_2D: f64 = 1e-14;

/// Eigenvalues at or below this value make the unregularized calculus refuse
/// a matrix as not positive definite.
pub const SPD_EIGEN_FLOOR: f64 = 1e-12;

/// Storage order of the independent components.
///
/// d = 2: `(0,0), (1,1), (0,1)`; d = 3: `(0,0), (1,1), (2,2), (0,1), (0,2), (1,2)`.
const PAIRS_2: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
const PAIRS_3: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

#[derive(Clone, Copy, PartialEq)]
pub struct SymMat {
    dim: usize,
    c: [f64; 6],
}

impl fmt::Debug for SymMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMat{:?}", &self.c[..self.num_components()])
    }
}

/// Number of independent components of a symmetric `dim x dim` matrix.
pub fn num_components(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Index pair `(i, j)` with `i <= j` of storage slot `k`.
pub fn component_pair(dim: usize, k: usize) -> (usize, usize) {
    match dim {
        2 => PAIRS_2[k],
        3 => PAIRS_3[k],
        _ => panic!("unsupported dimension {dim}"),
    }
}

fn slot(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (dim, i, j) {
        (2, 0, 0) => 0,
        (2, 1, 1) => 1,
        (2, 0, 1) => 2,
        (3, 0, 0) => 0,
        (3, 1, 1) => 1,
        (3, 2, 2) => 2,
        (3, 0, 1) => 3,
        (3, 0, 2) => 4,
        (3, 1, 2) => 5,
        _ => panic!("index ({i},{j}) out of range for dimension {dim}"),
    }
}

/// Eigen-decomposition of a symmetric matrix: `values[k]` belongs to the
/// column `vectors[.][k]`.
#[derive(Clone, Copy, Debug)]
pub struct Eigen {
    pub dim: usize,
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl Eigen {
    pub fn min_value(&self) -> f64 {
        self.values[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values[..self.dim].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Reassemble `U diag(g(s)) U^T`.
    pub fn compose(&self, mut g: impl FnMut(f64) -> f64) -> SymMat {
        let d = self.dim;
        let mut out = SymMat::zeros(d);
        let gv: Vec<f64> = self.values[..d].iter().map(|&s| g(s)).collect();
        for k in 0..num_components(d) {
            let (i, j) = component_pair(d, k);
            let mut acc = 0.0;
            for (m, &gm) in gv.iter().enumerate() {
                acc += self.vectors[i][m] * gm * self.vectors[j][m];
            }
            out.c[k] = acc;
        }
        out
    }
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SymMat supports d = 2 or 3, got {dim}");
        Self { dim, c: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.c[i] = s;
        }
        m
    }

    /// 2x2 matrix `[[a, b], [b, c]]`.
    pub fn new2(a: f64, c: f64, b: f64) -> Self {
        Self { dim: 2, c: [a, c, b, 0.0, 0.0, 0.0] }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        m.c[..values.len()].copy_from_slice(values);
        m
    }

    /// Build from the stored components (see [`component_pair`] for order).
    pub fn from_components(dim: usize, comps: &[f64]) -> Self {
        let mut m = Self::zeros(dim);
        m.c[..num_components(dim)].copy_from_slice(comps);
        m
    }

    /// Symmetric part of a full row-major matrix.
    pub fn from_full(dim: usize, a: &[[f64; 3]; 3]) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..num_components(dim) {
            let (i, j) = component_pair(dim, k);
            m.c[k] = 0.5 * (a[i][j] + a[j][i]);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_components(&self) -> usize {
        num_components(self.dim)
    }

    #[inline]
    pub fn components(&self) -> &[f64] {
        &self.c[..num_components(self.dim)]
    }

    #[inline]
    pub fn components_mut(&mut self) -> &mut [f64] {
        let n = num_components(self.dim);
        &mut self.c[..n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[slot(self.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.c[slot(self.dim, i, j)] = v;
    }

    pub fn to_full(&self) -> [[f64; 3]; 3] {
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate().take(self.dim) {
            for (j, v) in row.iter_mut().enumerate().take(self.dim) {
                *v = self.get(i, j);
            }
        }
        a
    }

    pub fn trace(&self) -> f64 {
        self.c[..self.dim].iter().sum()
    }

    /// Frobenius product `A : B`.
    pub fn ddot(&self, other: &SymMat) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut s = 0.0;
        for k in 0..d {
            s += self.c[k] * other.c[k];
        }
        for k in d..num_components(d) {
            s += 2.0 * self.c[k] * other.c[k];
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> SymMat {
        let mut out = *self;
        out.components_mut().iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        let mut out = *self;
        for (a, b) in out.components_mut().iter_mut().zip(other.components()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        let mut out = *self;
        for (a, b) in out.components_mut().iter_mut().zip(other.components()) {
            *a -= b;
        }
        out
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &SymMat) -> SymMat {
        let mut out = *self;
        for (a, b) in out.components_mut().iter_mut().zip(other.components()) {
            *a += s * b;
        }
        out
    }

    /// `B * B`, which stays symmetric.
    pub fn square(&self) -> SymMat {
        let d = self.dim;
        let mut out = SymMat::zeros(d);
        for k in 0..num_components(d) {
            let (i, j) = component_pair(d, k);
            out.c[k] = (0..d).map(|m| self.get(i, m) * self.get(m, j)).sum();
        }
        out
    }

    /// Full (generally unsymmetric) product `self * other`.
    pub fn matmul(&self, other: &SymMat) -> [[f64; 3]; 3] {
        let d = self.dim;
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate().take(d) {
            for (j, v) in row.iter_mut().enumerate().take(d) {
                *v = (0..d).map(|m| self.get(i, m) * other.get(m, j)).sum();
            }
        }
        a
    }

    /// Spectral decomposition; closed form for d = 2, cyclic Jacobi for d = 3.
    pub fn eigen(&self) -> Eigen {
        match self.dim {
            2 => eigen2(self),
            _ => eigen3_jacobi(self),
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let e = self.eigen();
        let mut v = e.values[..self.dim].to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().min_value()
    }

    /// Apply a scalar function through the eigenvalues. The function may
    /// reject an eigenvalue by returning `None`.
    pub fn try_apply(&self, f: impl Fn(f64) -> Option<f64>) -> Result<SymMat> {
        let e = self.eigen();
        for &s in &e.values[..self.dim] {
            if f(s).is_none() {
                return Err(Error::Domain { what: "spectral function undefined at eigenvalue", value: s });
            }
        }
        Ok(e.compose(|s| f(s).unwrap_or(f64::NAN)))
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> SymMat {
        self.eigen().compose(f)
    }

    /// Matrix logarithm; requires positive definiteness.
    pub fn ln(&self) -> Result<SymMat> {
        self.try_apply(|s| (s > 0.0).then(|| s.ln()))
    }

    /// `tr ln B = ln det B` computed from the eigenvalues.
    pub fn trace_ln(&self) -> Result<f64> {
        let e = self.eigen();
        let mut acc = 0.0;
        for &s in &e.values[..self.dim] {
            if s <= 0.0 {
                return Err(Error::Domain { what: "logarithm of non-positive eigenvalue", value: s });
            }
            acc += s.ln();
        }
        Ok(acc)
    }

    /// Inverse through the spectrum, refusing eigenvalues at or below
    /// [`SPD_EIGEN_FLOOR`].
    pub fn inverse_spd(&self) -> Result<SymMat> {
        let e = self.eigen();
        let m = e.min_value();
        if m <= SPD_EIGEN_FLOOR {
            return Err(Error::NotPositiveDefinite { vertex: None, eigenvalue: m });
        }
        Ok(e.compose(|s| 1.0 / s))
    }

    pub fn inverse_sqrt_spd(&self) -> Result<SymMat> {
        let e = self.eigen();
        let m = e.min_value();
        if m <= SPD_EIGEN_FLOOR {
            return Err(Error::NotPositiveDefinite { vertex: None, eigenvalue: m });
        }
        Ok(e.compose(|s| 1.0 / s.sqrt()))
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }
}

fn eigen2(m: &SymMat) -> Eigen {
    let a = m.c[0];
    let c = m.c[1];
    let b = m.c[2];
    let scale = a.abs() + c.abs();
    let mut vectors = [[0.0; 3]; 3];
    if b.abs() <= DIAGONAL_TOL_2D * scale || b == 0.0 {
        vectors[0][0] = 1.0;
        vectors[1][1] = 1.0;
        return Eigen { dim: 2, values: [a, c, 0.0], vectors };
    }
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    let l1 = mean - r;
    let l2 = mean + r;
    // eigenvector of l2: pick the better conditioned of (b, l2 - a) and (l2 - c, b)
    let (mut x, mut y) = if (l2 - a).abs() > (l2 - c).abs() { (b, l2 - a) } else { (l2 - c, b) };
    let n = x.hypot(y);
    x /= n;
    y /= n;
    // columns: (-y, x) for l1, (x, y) for l2
    vectors[0][0] = -y;
    vectors[1][0] = x;
    vectors[0][1] = x;
    vectors[1][1] = y;
    Eigen { dim: 2, values: [l1, l2, 0.0], vectors }
}

fn eigen3_jacobi(m: &SymMat) -> Eigen {
    let mut a = m.to_full();
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm = m.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off <= 1e-16 * norm {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let cs = 1.0 / (t * t + 1.0).sqrt();
            let sn = t * cs;
            // A <- J^T A J with J the (p, q) rotation
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = cs * akp - sn * akq;
                a[k][q] = sn * akp + cs * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = cs * apk - sn * aqk;
                a[q][k] = sn * apk + cs * aqk;
            }
            for row in v.iter_mut() {
                let vkp = row[p];
                let vkq = row[q];
                row[p] = cs * vkp - sn * vkq;
                row[q] = sn * vkp + cs * vkq;
            }
        }
    }
    Eigen { dim: 3, values: [a[0][0], a[1][1], a[2][2]], vectors: v }
}

/// `T_e = B^2 + kappa B - I`
pub fn elastic_stress(b: &SymMat, kappa_phi: f64) -> SymMat {
    b.square().axpy(kappa_phi, b).sub(&SymMat::identity(b.dim()))
}

/// Regularized logarithm: `ln s` for `s >= delta`, linear continuation below.
pub fn g_delta(s: f64, delta: f64) -> f64 {
    if s >= delta {
        s.ln()
    } else {
        s / delta + delta.ln() - 1.0
    }
}

/// `max(s, delta)`, the reciprocal of `g_delta'`.
pub fn beta_delta(s: f64, delta: f64) -> f64 {
    s.max(delta)
}

/// Antiderivative of `beta_delta`: `s^2/2` above `delta`, linear below.
pub fn f_delta(s: f64, delta: f64) -> f64 {
    if s >= delta {
        0.5 * s * s
    } else {
        delta * s - 0.5 * delta * delta
    }
}

pub fn g_delta_mat(b: &SymMat, delta: f64) -> SymMat {
    b.apply(|s| g_delta(s, delta))
}

pub fn beta_delta_mat(b: &SymMat, delta: f64) -> SymMat {
    b.apply(|s| beta_delta(s, delta))
}

pub fn f_delta_mat(b: &SymMat, delta: f64) -> SymMat {
    b.apply(|s| f_delta(s, delta))
}

/// Derivative `g_delta'(B)`.
pub fn g_delta_prime_mat(b: &SymMat, delta: f64) -> SymMat {
    b.apply(|s| 1.0 / beta_delta(s, delta))
}
