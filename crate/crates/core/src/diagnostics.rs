//! Energy, positivity and scheme-identity diagnostics.

use crate::error::{Error, Result};
use crate::fespace::ScalarSpace;
use crate::model::{psi, psi_split, ModelParams};
use crate::solver::cahn_hilliard::convection_load;
use crate::solver::stokes::divergence_load;
use crate::solver::{Discretization, FieldState};
use crate::sparse::{dot, norm2, norm_inf};
use crate::tensor::SymMat;

/// Column names of the diagnostics CSV.
pub const CSV_HEADER: &str = "time,energy,tumour_volume,spd_margin,iters,res_cons,res_div,res_mu,sigma_h1";

/// Everything recorded after one accepted time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub tumour_volume: f64,
    pub spd_margin: f64,
    /// Largest `|phi| - 1` over the vertices (zero when `phi` stays in `[-1, 1]`).
    pub phi_overshoot: f64,
    pub iters: usize,
    pub res_cons: f64,
    pub res_div: f64,
    pub res_mu: f64,
    pub sigma_h1: f64,
}

impl StepDiagnostics {
    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.time,
            self.energy,
            self.tumour_volume,
            self.spd_margin,
            self.iters,
            self.res_cons,
            self.res_div,
            self.res_mu,
            self.sigma_h1
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.time,
            self.energy,
            self.tumour_volume,
            self.spd_margin,
            self.phi_overshoot,
            self.res_cons,
            self.res_div,
            self.res_mu,
            self.sigma_h1,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Render a full CSV document.
pub fn to_csv(rows: &[StepDiagnostics]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// `(beta eps / 2)|grad phi|^2 + (beta / eps)<psi(phi), 1>_h + |B|_h^2 / 4
/// + <kappa(phi) tr B - tr ln B, 1>_h / 2`
pub fn discrete_energy(space: &ScalarSpace, params: &ModelParams, phi: &[f64], b: &[SymMat]) -> Result<f64> {
    let k = space.stiffness(None);
    let grad = dot(phi, &k.mul_vec(phi));
    let mut lumped = 0.0;
    for (i, w) in space.weights.iter().enumerate() {
        let tr_ln = b[i]
            .trace_ln()
            .map_err(|_| Error::NotPositiveDefinite { vertex: Some(i), eigenvalue: b[i].min_eigenvalue() })?;
        lumped += w
            * (params.beta / params.eps * psi(phi[i])
                + 0.25 * b[i].norm_sq()
                + 0.5 * (params.kappa(phi[i]) * b[i].trace() - tr_ln));
    }
    Ok(0.5 * params.beta * params.eps * grad + lumped)
}

/// Smallest vertex eigenvalue.
pub fn spd_margin(b: &[SymMat]) -> f64 {
    b.iter().map(SymMat::min_eigenvalue).fold(f64::INFINITY, f64::min)
}

/// `<(1 + phi) / 2, 1>_h`
pub fn tumour_volume(space: &ScalarSpace, phi: &[f64]) -> f64 {
    space.weights.iter().zip(phi).map(|(w, p)| w * 0.5 * (1.0 + p)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResiduals {
    /// Phase-field equation tested with 1.
    pub conservation: f64,
    /// `||B v - g||_inf / max(1, ||g||_2)`.
    pub divergence: f64,
    /// Chemical-potential equation tested with 1.
    pub mu_mean: f64,
}

/// Residuals of the scheme identities between consecutive states on `disc`.
pub fn identity_residuals(
    disc: &Discretization,
    params: &ModelParams,
    cur: &FieldState,
    prev: &FieldState,
) -> Result<IdentityResiduals> {
    let n = disc.scalar.dim();
    if cur.phi.len() != n || prev.phi.len() != n || cur.v.len() != disc.velocity.dim() {
        return Err(Error::invalid("states do not live on the same mesh"));
    }
    let w = &disc.scalar.weights;
    let conv: f64 = convection_load(disc, &cur.v, &prev.phi).iter().sum();
    let mut cons = conv;
    let mut mu_mean = 0.0;
    let b_over_e = params.beta / params.eps;
    for a in 0..n {
        let s = params.sources(prev.phi[a], cur.sigma[a]);
        cons += w[a] * ((cur.phi[a] - prev.phi[a]) / params.dt + prev.phi[a] * s.gamma_v - s.gamma_phi);
        let (psi_h, _) = psi_split(cur.phi[a], prev.phi[a]);
        let half_kq = 0.5 * params.kappa_quotient(cur.phi[a], prev.phi[a]);
        mu_mean += w[a] * (cur.mu[a] - b_over_e * psi_h + params.chi_phi * cur.sigma[a] - half_kq * cur.b[a].trace());
    }
    let g = divergence_load(disc, params, &prev.phi, &cur.sigma);
    let bv = disc.divergence.mul_vec(&cur.v);
    let r: Vec<f64> = bv.iter().zip(&g).map(|(a, b)| a - b).collect();
    Ok(IdentityResiduals {
        conservation: cons.abs(),
        divergence: norm_inf(&r) / norm2(&g).max(1.0),
        mu_mean: mu_mean.abs(),
    })
}

/// Tolerance on the conservation and chemical-potential identities.
pub fn identity_tolerance(params: &ModelParams, area: f64) -> f64 {
    10.0 * (params.tol_nonlinear + params.linear_tol) * area / params.dt
}

/// Diagnostics of the accepted step `cur` following `prev` on the same mesh.
pub fn step_diagnostics(
    disc: &Discretization,
    params: &ModelParams,
    cur: &FieldState,
    prev: &FieldState,
) -> Result<StepDiagnostics> {
    let res = identity_residuals(disc, params, cur, prev)?;
    Ok(StepDiagnostics {
        step: cur.step,
        time: cur.time,
        energy: discrete_energy(&disc.scalar, params, &cur.phi, &cur.b)?,
        tumour_volume: tumour_volume(&disc.scalar, &cur.phi),
        spd_margin: spd_margin(&cur.b),
        phi_overshoot: cur.phi.iter().fold(0.0f64, |m, p| m.max(p.abs() - 1.0)),
        iters: cur.nonlinear_iters,
        res_cons: res.conservation,
        res_div: res.divergence,
        res_mu: res.mu_mean,
        sigma_h1: disc.scalar.h1_norm(&cur.sigma),
    })
}
