//! Quasi-static nutrient equation with Robin boundary supply.

use crate::error::{Error, Result};
use crate::linsolve::{cg, Jacobi, LinearSolveReport};
use crate::model::ModelParams;
use crate::sparse::{Csr, TripletBuilder};

use super::Discretization;

/// System matrix `K + diag(w Gamma_sigma(phi)) + K_b M_boundary`.
pub fn nutrient_matrix(disc: &Discretization, params: &ModelParams, phi_prev: &[f64]) -> Csr {
    let n = disc.scalar.dim();
    let mut reaction = TripletBuilder::with_capacity(n, n, n);
    for (i, (&w, &phi)) in disc.scalar.weights.iter().zip(phi_prev).enumerate() {
        reaction.push(i, i, w * params.sources(phi, 0.0).gamma_sigma);
    }
    disc.stiffness.add_scaled(1.0, &reaction.build()).add_scaled(params.k_boundary, &disc.boundary_mass)
}

/// Solve for `sigma^n` given `phi^{n-1}` and the supply `sigma_inf`.
/// `guess` seeds the iteration.
pub fn solve_nutrient(
    disc: &Discretization,
    params: &ModelParams,
    phi_prev: &[f64],
    sigma_inf: &[f64],
    guess: &[f64],
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let a = nutrient_matrix(disc, params, phi_prev);
    let rhs: Vec<f64> = disc.boundary_mass.mul_vec(sigma_inf).iter().map(|v| params.k_boundary * v).collect();
    let mut sigma = guess.to_vec();
    let report = cg(&a, &rhs, &mut sigma, &Jacobi::new(&a), params.linear_tol, 10 * a.nrows + 100);
    if !report.converged {
        return Err(Error::LinearSolve {
            solver: "nutrient cg",
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok((sigma, report))
}
