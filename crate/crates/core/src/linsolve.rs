//! Krylov solvers, preconditioners and direct factorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, Csr};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// Final residual `||b - A x||_2 / max(||b||_2, tiny)`.
    pub residual: f64,
    pub converged: bool,
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &Csr) -> Self {
        Self::from_diagonal(&a.diagonal())
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self { inv_diag: d.iter().map(|&x| if x != 0.0 { 1.0 / x } else { 1.0 }).collect() }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Incomplete LU without fill-in on the sparsity pattern of `A`.
pub struct Ilu0 {
    lu: Csr,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.nrows;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, dp) in diag_pos.iter_mut().enumerate() {
            let (idx, _) = lu.row(i);
            if let Ok(k) = idx.binary_search(&i) {
                *dp = lu.indptr[i] + k;
            }
        }
        if diag_pos.contains(&usize::MAX) {
            return Err(Error::invalid("ILU(0) needs a structurally nonzero diagonal"));
        }
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for kk in start..end {
                let k = lu.indices[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::invalid("zero pivot in ILU(0)"));
                }
                let lik = lu.values[kk] / pivot;
                lu.values[kk] = lik;
                // row_i -= lik * row_k on the shared pattern (j > k)
                let (ks, ke) = (diag_pos[k] + 1, lu.indptr[k + 1]);
                let mut p = kk + 1;
                for q in ks..ke {
                    let j = lu.indices[q];
                    while p < end && lu.indices[p] < j {
                        p += 1;
                    }
                    if p < end && lu.indices[p] == j {
                        lu.values[p] -= lik * lu.values[q];
                    }
                }
            }
            if lu.values[diag_pos[i]] == 0.0 || !lu.values[diag_pos[i]].is_finite() {
                return Err(Error::invalid("breakdown in ILU(0)"));
            }
        }
        Ok(Self { lu, diag_pos })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.nrows;
        for i in 0..n {
            let mut s = r[i];
            for kk in self.lu.indptr[i]..self.diag_pos[i] {
                s -= self.lu.values[kk] * z[self.lu.indices[kk]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for kk in self.diag_pos[i] + 1..self.lu.indptr[i + 1] {
                s -= self.lu.values[kk] * z[self.lu.indices[kk]];
            }
            z[i] = s / self.lu.values[self.diag_pos[i]];
        }
    }
}

fn column(b: &[f64]) -> Mat<f64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

/// Sparse LU with partial pivoting.
pub struct DirectLu {
    lu: Lu<usize, f64>,
}

impl DirectLu {
    pub fn new(a: &Csr) -> Result<Self> {
        let lu = a.to_faer().sp_lu().map_err(|e| Error::invalid(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = column(b);
        self.lu.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }
}

impl Preconditioner for DirectLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.solve(r));
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    pub fn new(a: &Csr) -> Result<Self> {
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::invalid(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self { llt, n: a.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut m = column(b);
        self.llt.solve_in_place(m.as_mut());
        (0..b.len()).map(|i| m[(i, 0)]).collect()
    }
}

fn residual(a: &Csr, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
/// Stops when `||r||_2 <= tol * ||b||_2`.
pub fn cg(a: &Csr, b: &[f64], x: &mut [f64], pc: &dyn Preconditioner, tol: f64, max_iter: usize) -> LinearSolveReport {
    if norm2(b) == 0.0 {
        x.fill(0.0);
        return LinearSolveReport { iterations: 0, residual: 0.0, converged: true };
    }
    let bnorm = norm2(b);
    let mut r = residual(a, b, x);
    let mut rn = norm2(&r);
    if rn <= tol * bnorm {
        return LinearSolveReport { iterations: 0, residual: rn / bnorm, converged: true };
    }
    let n = b.len();
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return LinearSolveReport { iterations: it, residual: rn / bnorm, converged: false };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rn = norm2(&r);
        if rn <= tol * bnorm {
            // confirm with the true residual
            let true_rn = norm2(&residual(a, b, x));
            if true_rn <= tol * bnorm {
                return LinearSolveReport { iterations: it, residual: true_rn / bnorm, converged: true };
            }
            r = residual(a, b, x);
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    LinearSolveReport { iterations: max_iter, residual: rn / bnorm, converged: false }
}

/// Right-preconditioned BiCGStab. Stops when `||r||_2 <= tol * ||b||_2`.
pub fn bicgstab(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    pc: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> LinearSolveReport {
    let n = b.len();
    if norm2(b) == 0.0 {
        x.fill(0.0);
        return LinearSolveReport { iterations: 0, residual: 0.0, converged: true };
    }
    let bnorm = norm2(b);
    let mut r = residual(a, b, x);
    let mut rn = norm2(&r);
    if rn <= tol * bnorm {
        return LinearSolveReport { iterations: 0, residual: rn / bnorm, converged: true };
    }
    let mut r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            // restart with the current residual as shadow vector
            r0 = r.clone();
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|x| *x = 0.0);
            p.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pc.apply(&p, &mut phat);
        a.mul_vec_into(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v == 0.0 || !r0v.is_finite() {
            return LinearSolveReport { iterations: it, residual: rn / bnorm, converged: false };
        }
        alpha = rho / r0v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            let true_rn = norm2(&residual(a, b, x));
            if true_rn <= tol * bnorm {
                return LinearSolveReport { iterations: it, residual: true_rn / bnorm, converged: true };
            }
            r = residual(a, b, x);
            rn = true_rn;
            continue;
        }
        pc.apply(&s, &mut shat);
        a.mul_vec_into(&shat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rn = norm2(&r);
        if !rn.is_finite() {
            return LinearSolveReport { iterations: it, residual: f64::INFINITY, converged: false };
        }
        if rn <= tol * bnorm {
            let true_rn = norm2(&residual(a, b, x));
            if true_rn <= tol * bnorm {
                return LinearSolveReport { iterations: it, residual: true_rn / bnorm, converged: true };
            }
            r = residual(a, b, x);
            rn = true_rn;
        }
        if omega == 0.0 {
            return LinearSolveReport { iterations: it, residual: rn / bnorm, converged: false };
        }
    }
    LinearSolveReport { iterations: max_iter, residual: rn / bnorm, converged: false }
}
