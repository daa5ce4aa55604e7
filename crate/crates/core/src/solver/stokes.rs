//! Non-solenoidal Stokes system solved by conjugate gradients on the
//! pressure Schur complement, with a direct factorization of the viscous block.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::VelocitySpace;
use crate::linsolve::{Cholesky, LinearSolveReport};
use crate::model::ModelParams;
use crate::sparse::{dot, norm2, Csr};
use crate::tensor::{elastic_stress, SymMat};

use super::{Discretization, LambdaField};

pub struct StokesOperator {
    /// Full index -> index among unconstrained velocity DOFs.
    free_map: Vec<Option<usize>>,
    n_free: usize,
    a: Csr,
    chol: Cholesky,
    b: Csr,
    bt: Csr,
    /// Inverse of the pressure preconditioner `(1 / (2 eta)) M_lumped`.
    precond_inv: Vec<f64>,
}

/// Result of one saddle-point solve.
#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub report: LinearSolveReport,
}

impl StokesOperator {
    pub fn new(velocity: &VelocitySpace, divergence: &Csr, params: &ModelParams) -> Result<Self> {
        let mut free_map = vec![None; velocity.dim()];
        let mut n_free = 0;
        for (i, &d) in velocity.dirichlet.iter().enumerate() {
            if !d {
                free_map[i] = Some(n_free);
                n_free += 1;
            }
        }
        let full = velocity.viscous(params.eta_bar);
        let a = full.submatrix(&free_map, &free_map, n_free, n_free);
        let chol = Cholesky::new(&a)?;
        let np = divergence.nrows;
        let rows: Vec<Option<usize>> = (0..np).map(Some).collect();
        let b = divergence.submatrix(&rows, &free_map, np, n_free);
        let bt = b.transpose();
        let precond_inv = velocity.scalar.weights.iter().map(|w| 2.0 * params.eta_bar / w).collect();
        Ok(Self { free_map, n_free, a, chol, b, bt, precond_inv })
    }

    /// Viscous block restricted to the unconstrained DOFs.
    pub fn viscous(&self) -> &Csr {
        &self.a
    }

    fn restrict(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (i, m) in self.free_map.iter().enumerate() {
            if let Some(k) = m {
                out[*k] = f[i];
            }
        }
        out
    }

    fn extend(&self, u: &[f64]) -> Vec<f64> {
        self.free_map.iter().map(|m| m.map_or(0.0, |k| u[k])).collect()
    }

    /// Solve `A v - B^T p = f`, `B v = g` with `v = 0` on the Dirichlet part.
    /// Stops once `||g - B v||_2 <= div_tol * max(1, ||g||_2)` and the
    /// preconditioned residual, an estimate of the pressure error, is below
    /// `p_tol` in the sup norm.
    pub fn solve(&self, f: &[f64], g: &[f64], p0: &[f64], div_tol: f64, p_tol: f64) -> Result<StokesSolution> {
        let np = g.len();
        let f = self.restrict(f);
        let mut p = p0.to_vec();
        let rhs: Vec<f64> = f.iter().zip(self.bt.mul_vec(&p)).map(|(a, b)| a + b).collect();
        let mut u = self.chol.solve(&rhs);
        let mut r: Vec<f64> = g.iter().zip(self.b.mul_vec(&u)).map(|(a, b)| a - b).collect();
        let scale = norm2(g).max(1.0);
        let apply_pc = |r: &[f64]| -> Vec<f64> { r.iter().zip(&self.precond_inv).map(|(a, b)| a * b).collect() };
        let mut z = apply_pc(&r);
        let done =
            |r: &[f64], z: &[f64]| norm2(r) <= div_tol * scale && z.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= p_tol;
        let max_iter = 4 * np + 100;
        let mut iterations = 0;
        if !done(&r, &z) {
            let mut d = z.clone();
            let mut rz = dot(&r, &z);
            loop {
                iterations += 1;
                let y = self.chol.solve(&self.bt.mul_vec(&d));
                let sd = self.b.mul_vec(&y);
                let dsd = dot(&d, &sd);
                if !(dsd > 0.0) {
                    break;
                }
                let alpha = rz / dsd;
                for i in 0..np {
                    p[i] += alpha * d[i];
                    r[i] -= alpha * sd[i];
                }
                for (ui, yi) in u.iter_mut().zip(&y) {
                    *ui += alpha * yi;
                }
                z = apply_pc(&r);
                if done(&r, &z) || iterations >= max_iter {
                    break;
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..np {
                    d[i] = z[i] + beta * d[i];
                }
            }
            // recompute from the final pressure to shed accumulated rounding
            let rhs: Vec<f64> = f.iter().zip(self.bt.mul_vec(&p)).map(|(a, b)| a + b).collect();
            u = self.chol.solve(&rhs);
            r = g.iter().zip(self.b.mul_vec(&u)).map(|(a, b)| a - b).collect();
            z = apply_pc(&r);
        }
        let residual = norm2(&r) / scale;
        let converged = done(&r, &z) || residual <= div_tol;
        let report = LinearSolveReport { iterations, residual, converged };
        if !converged {
            return Err(Error::LinearSolve { solver: "stokes schur cg", iterations, residual });
        }
        Ok(StokesSolution { v: self.extend(&u), p, report })
    }
}

/// Inputs of the momentum right-hand side.
pub struct StokesInputs<'a> {
    pub phi_prev: &'a [f64],
    pub sigma: &'a [f64],
    pub mu: &'a [f64],
    pub b: &'a [SymMat],
}

/// Momentum load vector over all velocity DOFs.
pub(crate) fn momentum_load(
    disc: &Discretization,
    params: &ModelParams,
    x: &StokesInputs<'_>,
    lambda: &LambdaField,
) -> Vec<f64> {
    let vs = &disc.velocity;
    let nn = vs.n_nodes;
    let with_kappa = params.kappa_t != 0.0;
    let locals: Vec<[[f64; 2]; 6]> = (0..disc.num_elements())
        .into_par_iter()
        .map(|e| {
            let t = disc.mesh.triangles[e];
            let geo = &disc.scalar.geometry[e];
            let grad_phi = disc.scalar.gradient(e, x.phi_prev);
            let kap = t.map(|a| params.kappa(x.phi_prev[a]));
            let vb = t.map(|a| x.b[a]);
            let te = [0, 1, 2].map(|k| elastic_stress(&vb[k], kap[k]));
            let drive = t.map(|a| x.mu[a] + params.chi_phi * x.sigma[a]);
            let (grad_ktr, grad_k) = if with_kappa {
                let ktr = [0, 1, 2].map(|k| kap[k] * vb[k].trace());
                let mut gk = [0.0; 2];
                let mut gt = [0.0; 2];
                for k in 0..3 {
                    for d in 0..2 {
                        gt[d] += ktr[k] * geo.grads[k][d];
                        gk[d] += kap[k] * geo.grads[k][d];
                    }
                }
                (gt, gk)
            } else {
                ([0.0; 2], [0.0; 2])
            };
            let mut out = [[0.0; 2]; 6];
            for (q, w) in vs.rule.points.iter().zip(&vs.rule.weights) {
                let basis = vs.basis(e, q);
                let s = w * geo.area;
                let tq = te[0].scale(q[0]).axpy(q[1], &te[1]).axpy(q[2], &te[2]);
                let dq = q[0] * drive[0] + q[1] * drive[1] + q[2] * drive[2];
                let mut body = [dq * grad_phi[0], dq * grad_phi[1]];
                if with_kappa {
                    let lam = lambda.at(e, q, &vb);
                    for al in 0..2 {
                        let mut corr = 0.0;
                        for j in 0..2 {
                            corr += grad_k[j] * lam[al][j].trace();
                        }
                        body[al] += 0.5 * grad_ktr[al] - 0.5 * corr;
                    }
                }
                for a in 0..basis.n {
                    for al in 0..2 {
                        let mut stress = 0.0;
                        for j in 0..2 {
                            stress += tq.get(al, j) * basis.grad[a][j];
                        }
                        out[a][al] += s * (-stress + body[al] * basis.val[a]);
                    }
                }
            }
            out
        })
        .collect();
    let mut f = vec![0.0; vs.dim()];
    for (nodes, l) in vs.element_nodes.iter().zip(&locals) {
        for a in 0..vs.local_count() {
            for al in 0..2 {
                f[al * nn + nodes[a]] += l[a][al];
            }
        }
    }
    f
}

/// Divergence data `g_q = w_q Gamma_v(q)`.
pub(crate) fn divergence_load(
    disc: &Discretization,
    params: &ModelParams,
    phi_prev: &[f64],
    sigma: &[f64],
) -> Vec<f64> {
    disc.scalar
        .weights
        .iter()
        .zip(phi_prev.iter().zip(sigma))
        .map(|(w, (&phi, &s))| w * params.sources(phi, s).gamma_v)
        .collect()
}
