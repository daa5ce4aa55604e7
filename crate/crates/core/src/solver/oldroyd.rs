//! Oldroyd-B update with stress diffusion. Each of the three stored
//! components solves the same SPD system `(M_lumped + dt alpha K) B^c = r^c`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linsolve::{cg, Jacobi, LinearSolveReport};
use crate::model::ModelParams;
use crate::sparse::Csr;
use crate::tensor::{elastic_stress, SymMat};

use super::{Discretization, LambdaField};

pub struct OldroydInputs<'a> {
    pub phi_prev: &'a [f64],
    pub sigma: &'a [f64],
    pub b_prev: &'a [SymMat],
    /// Lagged iterate `B^{n, l-1}`.
    pub b: &'a [SymMat],
    pub v: &'a [f64],
}

/// `(E^c B)_ij` contracted with `M_ij` for the test directions
/// `E11`, `E22` and the symmetric `H12 = (E12 + E21) / 2`.
fn contract_test(c: usize, b: &SymMat, m: &[[f64; 2]; 2]) -> f64 {
    match c {
        0 => b.get(0, 0) * m[0][0] + b.get(0, 1) * m[0][1],
        1 => b.get(1, 0) * m[1][0] + b.get(1, 1) * m[1][1],
        _ => 0.5 * (b.get(1, 0) * m[0][0] + b.get(1, 1) * m[0][1] + b.get(0, 0) * m[1][0] + b.get(0, 1) * m[1][1]),
    }
}

/// Right-hand sides of the three component systems, plus the diagonal
/// shift used by the optional relaxation stabilization.
pub(crate) fn oldroyd_rhs(
    disc: &Discretization,
    params: &ModelParams,
    x: &OldroydInputs<'_>,
    lambda: &LambdaField,
) -> ([Vec<f64>; 3], Vec<f64>) {
    let n = disc.scalar.dim();
    let dt = params.dt;
    let relax = dt / params.tau_bar;
    let mut rhs = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut shift = vec![0.0; n];
    for a in 0..n {
        let w = disc.scalar.weights[a];
        let kap = params.kappa(x.phi_prev[a]);
        let te = elastic_stress(&x.b[a], kap);
        let gb = params.sources(x.phi_prev[a], x.sigma[a]).gamma_b;
        let mut lumped = x.b_prev[a].axpy(-relax, &te).axpy(-dt * gb, &x.b[a]);
        if params.stabilize_relaxation {
            let c = (2.0 * x.b[a].eigen().max_value() + kap).max(0.0);
            shift[a] = relax * c * w;
            lumped = lumped.axpy(relax * c, &x.b[a]);
        }
        for c in 0..3 {
            rhs[c][a] = w * lumped.components()[c];
        }
    }
    let vs = &disc.velocity;
    let locals: Vec<[[f64; 3]; 3]> = (0..disc.num_elements())
        .into_par_iter()
        .map(|e| {
            let t = disc.mesh.triangles[e];
            let geo = &disc.scalar.geometry[e];
            let vb = t.map(|a| x.b[a]);
            // int v, int v_i Lambda_ij, int d_j v_i eta_a
            let mut int_v = [0.0; 2];
            let mut int_vl = [[SymMat::zeros(2); 2]; 2];
            let mut int_gv = [[[0.0; 2]; 2]; 3];
            for (q, w) in vs.rule.points.iter().zip(&vs.rule.weights) {
                let s = w * geo.area;
                let (vq, gq) = vs.eval(e, q, x.v);
                let lam = lambda.at(e, q, &vb);
                for i in 0..2 {
                    int_v[i] += s * vq[i];
                    for j in 0..2 {
                        int_vl[i][j] = int_vl[i][j].axpy(s * vq[i], &lam[i][j]);
                        for k in 0..3 {
                            int_gv[k][i][j] += s * gq[i][j] * q[k];
                        }
                    }
                }
            }
            let mut out = [[0.0; 3]; 3];
            for k in 0..3 {
                let g = geo.grads[k];
                let transport = int_v[0] * g[0] + int_v[1] * g[1];
                for c in 0..3 {
                    let mut conv = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            conv += int_vl[i][j].components()[c] * g[j];
                        }
                    }
                    out[k][c] =
                        dt * (-vb[k].components()[c] * transport + conv + 2.0 * contract_test(c, &vb[k], &int_gv[k]));
                }
            }
            out
        })
        .collect();
    for (t, l) in disc.mesh.triangles.iter().zip(&locals) {
        for k in 0..3 {
            for c in 0..3 {
                rhs[c][t[k]] += l[k][c];
            }
        }
    }
    (rhs, shift)
}

/// Compute `B^{n,l}`.
pub fn oldroyd_substep(
    disc: &Discretization,
    params: &ModelParams,
    x: &OldroydInputs<'_>,
    lambda: &LambdaField,
) -> Result<(Vec<SymMat>, LinearSolveReport)> {
    let (rhs, shift) = oldroyd_rhs(disc, params, x, lambda);
    let shifted;
    let a: &Csr = if params.stabilize_relaxation {
        shifted = disc.oldroyd.add_scaled(1.0, &Csr::diagonal_matrix(&shift));
        &shifted
    } else {
        &disc.oldroyd
    };
    let pc = Jacobi::new(a);
    let max_iter = 10 * a.nrows + 100;
    let mut worst = crate::linsolve::LinearSolveReport { iterations: 0, residual: 0.0, converged: true };
    let sols: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let mut xc: Vec<f64> = x.b.iter().map(|b| b.components()[c]).collect();
            let rep = cg(a, &rhs[c], &mut xc, &pc, params.linear_tol, max_iter);
            if rep.iterations >= worst.iterations {
                worst.iterations = rep.iterations;
            }
            worst.residual = worst.residual.max(rep.residual);
            worst.converged &= rep.converged;
            xc
        })
        .collect();
    if !worst.converged {
        return Err(Error::LinearSolve {
            solver: "oldroyd cg",
            iterations: worst.iterations,
            residual: worst.residual,
        });
    }
    let b = (0..disc.scalar.dim()).map(|i| SymMat::new2(sols[0][i], sols[1][i], sols[2][i])).collect();
    Ok((b, worst))
}
