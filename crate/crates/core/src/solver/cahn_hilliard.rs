//! Linearized Cahn-Hilliard increment. Unknowns are interleaved: DOF `2a`
//! is `delta phi` at vertex `a`, DOF `2a + 1` is `delta mu`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linsolve::{bicgstab, DirectLu, Ilu0, LinearSolveReport};
use crate::model::ModelParams;
use crate::sparse::{Csr, TripletBuilder};
use crate::tensor::SymMat;

use super::Discretization;

/// The increment matrix for one time step. Only the `psi_1''` coupling
/// changes between nonlinear iterations.
pub struct ChOperator {
    pub matrix: Csr,
    /// Mobility-weighted stiffness `K_m`.
    pub k_mobility: Csr,
    base: Vec<f64>,
    coupling_pos: Vec<usize>,
}

impl ChOperator {
    pub fn new(disc: &Discretization, params: &ModelParams, phi_prev: &[f64]) -> Self {
        let n = disc.scalar.dim();
        let mob: Vec<f64> = phi_prev.iter().map(|&p| params.mobility(p)).collect();
        let k_mobility = disc.scalar.stiffness(Some(&mob));
        let be = params.beta * params.eps;
        let mut b = TripletBuilder::with_capacity(2 * n, 2 * n, 2 * (k_mobility.nnz() + disc.stiffness.nnz()) + 3 * n);
        for (a, &w) in disc.scalar.weights.iter().enumerate() {
            b.push(2 * a, 2 * a, w);
            b.push(2 * a + 1, 2 * a + 1, -w);
            b.push(2 * a + 1, 2 * a, 0.0);
        }
        for a in 0..n {
            let (idx, val) = k_mobility.row(a);
            for (&c, &v) in idx.iter().zip(val) {
                b.push(2 * a, 2 * c + 1, params.dt * v);
            }
            let (idx, val) = disc.stiffness.row(a);
            for (&c, &v) in idx.iter().zip(val) {
                b.push(2 * a + 1, 2 * c, be * v);
            }
        }
        let matrix = b.build();
        let coupling_pos = (0..n)
            .map(|a| {
                let r = 2 * a + 1;
                let start = matrix.indptr[r];
                let (idx, _) = matrix.row(r);
                start + idx.binary_search(&(2 * a)).expect("coupling entry present")
            })
            .collect();
        let base = matrix.values.clone();
        Self { matrix, k_mobility, base, coupling_pos }
    }

    fn set_coupling(&mut self, weights: &[f64], phi_it: &[f64], params: &ModelParams) {
        let be = params.beta / params.eps;
        for (a, &pos) in self.coupling_pos.iter().enumerate() {
            let (_, jac) = crate::model::psi_split(phi_it[a], 0.0);
            self.matrix.values[pos] = self.base[pos] + be * weights[a] * jac;
        }
    }
}

/// `int (v . grad phi) eta_a` for every vertex `a`.
pub fn convection_load(disc: &Discretization, v: &[f64], phi: &[f64]) -> Vec<f64> {
    let rule = &disc.velocity.rule;
    let locals: Vec<[f64; 3]> = (0..disc.num_elements())
        .into_par_iter()
        .map(|e| {
            let g = disc.scalar.gradient(e, phi);
            let area = disc.scalar.geometry[e].area;
            let mut out = [0.0; 3];
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                let (vq, _) = disc.velocity.eval(e, q, v);
                let s = w * area * (vq[0] * g[0] + vq[1] * g[1]);
                for k in 0..3 {
                    out[k] += s * q[k];
                }
            }
            out
        })
        .collect();
    let mut load = vec![0.0; disc.scalar.dim()];
    for (t, l) in disc.mesh.triangles.iter().zip(&locals) {
        for k in 0..3 {
            load[t[k]] += l[k];
        }
    }
    load
}

/// Inputs of one increment solve.
pub struct ChInputs<'a> {
    pub phi_prev: &'a [f64],
    pub sigma: &'a [f64],
    pub phi: &'a [f64],
    pub mu: &'a [f64],
    pub v: &'a [f64],
    pub b: &'a [SymMat],
}

/// Right-hand side of the increment system (interleaved).
pub fn ch_rhs(disc: &Discretization, op: &ChOperator, params: &ModelParams, x: &ChInputs<'_>) -> Vec<f64> {
    let n = disc.scalar.dim();
    let dt = params.dt;
    let kmu = op.k_mobility.mul_vec(x.mu);
    let kphi = disc.stiffness.mul_vec(x.phi);
    let conv = convection_load(disc, x.v, x.phi_prev);
    let (be, b_over_e) = (params.beta * params.eps, params.beta / params.eps);
    let mut rhs = vec![0.0; 2 * n];
    for a in 0..n {
        let w = disc.scalar.weights[a];
        let s = params.sources(x.phi_prev[a], x.sigma[a]);
        rhs[2 * a] = -w * (x.phi[a] - x.phi_prev[a])
            - dt * kmu[a]
            - dt * conv[a]
            - dt * w * (x.phi_prev[a] * s.gamma_v - s.gamma_phi);
        let (psi1, _) = crate::model::psi_split(x.phi[a], 0.0);
        let half_kq = 0.5 * params.kappa_quotient(x.phi[a], x.phi_prev[a]);
        rhs[2 * a + 1] = w
            * (x.mu[a] - b_over_e * psi1 + b_over_e * x.phi_prev[a] + params.chi_phi * x.sigma[a]
                - half_kq * x.b[a].trace())
            - be * kphi[a];
    }
    rhs
}

/// Solve for `(delta phi, delta mu)`.
pub fn ch_substep(
    disc: &Discretization,
    op: &mut ChOperator,
    params: &ModelParams,
    x: &ChInputs<'_>,
) -> Result<(Vec<f64>, Vec<f64>, LinearSolveReport)> {
    op.set_coupling(&disc.scalar.weights, x.phi, params);
    let rhs = ch_rhs(disc, op, params, x);
    let mut sol = vec![0.0; rhs.len()];
    let max_iter = 2 * rhs.len() + 200;
    let mut report = match Ilu0::new(&op.matrix) {
        Ok(ilu) => bicgstab(&op.matrix, &rhs, &mut sol, &ilu, params.linear_tol, max_iter),
        Err(_) => LinearSolveReport { iterations: 0, residual: f64::INFINITY, converged: false },
    };
    if !report.converged {
        log::debug!("Cahn-Hilliard bicgstab with ILU(0) failed ({report:?}); retrying with LU");
        sol.fill(0.0);
        let lu = DirectLu::new(&op.matrix)?;
        report = bicgstab(&op.matrix, &rhs, &mut sol, &lu, params.linear_tol, 50);
        if !report.converged {
            return Err(Error::LinearSolve {
                solver: "cahn-hilliard bicgstab",
                iterations: report.iterations,
                residual: report.residual,
            });
        }
    }
    let dphi = sol.iter().step_by(2).copied().collect();
    let dmu = sol.iter().skip(1).step_by(2).copied().collect();
    Ok((dphi, dmu, report))
}
