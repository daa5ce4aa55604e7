//! Model functions, parameters and initial data of the tumour growth model.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::{ElementVariant, MatrixSpace, ScalarSpace};
use crate::tensor::SymMat;

/// Floor added to the phase-field mobility.
pub const MOBILITY_FLOOR: f64 = 1e-12;

/// All scalar model constants plus discretization and solver choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub dt: f64,
    /// Proliferation rate.
    pub proliferation: f64,
    pub eps: f64,
    pub beta: f64,
    pub chi_phi: f64,
    pub kappa_t: f64,
    /// Nutrient consumption rate.
    pub consumption: f64,
    /// Boundary permeability of the nutrient.
    pub k_boundary: f64,
    pub eta_bar: f64,
    /// Growth-induced stress relaxation.
    pub g_stress: f64,
    pub tau_bar: f64,
    pub alpha: f64,
    pub t_end: f64,
    pub tol_nonlinear: f64,
    pub max_nonlinear_iters: usize,
    pub element_variant: ElementVariant,
    /// Relative tolerance of the SPD and nonsymmetric Krylov solves.
    pub linear_tol: f64,
    /// Relative tolerance of the saddle-point solve.
    pub saddle_tol: f64,
    /// Replace `Lambda_ij` by `delta_ij B` in the convective terms.
    pub naive_lambda: bool,
    /// Implicit relaxation shift in the stress update, needed for very small `tau_bar`.
    pub stabilize_relaxation: bool,
    /// Largest accepted time step.
    pub dt_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            dt: 0.005,
            proliferation: 0.2,
            eps: 0.02,
            beta: 0.1,
            chi_phi: 4.0,
            kappa_t: 0.0,
            consumption: 2.0,
            k_boundary: 10.0,
            eta_bar: 10.0,
            g_stress: 0.0,
            tau_bar: 100.0,
            alpha: 0.001,
            t_end: 14.0,
            tol_nonlinear: 1e-7,
            max_nonlinear_iters: 30,
            element_variant: ElementVariant::TaylorHood,
            linear_tol: 1e-10,
            saddle_tol: 1e-9,
            naive_lambda: false,
            stabilize_relaxation: false,
            dt_max: 0.1,
        }
    }
}

/// Values of the four source terms at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sources {
    pub gamma_phi: f64,
    pub gamma_v: f64,
    pub gamma_b: f64,
    pub gamma_sigma: f64,
}

/// Pointwise material functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Materials {
    pub m_phi: f64,
    pub m_sigma: f64,
    pub eta: f64,
    pub tau: f64,
    pub kappa: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("eps", self.eps),
            ("beta", self.beta),
            ("k_boundary", self.k_boundary),
            ("alpha", self.alpha),
            ("eta_bar", self.eta_bar),
            ("tau_bar", self.tau_bar),
            ("tol_nonlinear", self.tol_nonlinear),
            ("linear_tol", self.linear_tol),
            ("saddle_tol", self.saddle_tol),
            ("dt_max", self.dt_max),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive and finite, got {v}")));
            }
        }
        let finite = [
            ("proliferation", self.proliferation),
            ("chi_phi", self.chi_phi),
            ("kappa_t", self.kappa_t),
            ("consumption", self.consumption),
            ("g_stress", self.g_stress),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(key, format!("must be finite, got {v}")));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", format!("must be non-negative, got {}", self.t_end)));
        }
        if self.max_nonlinear_iters == 0 {
            return Err(Error::config("max_nonlinear_iters", "must be at least 1"));
        }
        if self.dt > self.dt_max {
            return Err(Error::config("dt", format!("exceeds dt_max = {}", self.dt_max)));
        }
        Ok(())
    }

    /// Number of time steps `t_end / dt`, which must be integral up to rounding.
    pub fn num_steps(&self) -> Result<usize> {
        let n = self.t_end / self.dt;
        let r = n.round();
        if (n - r).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::config("t_end", format!("t_end / dt = {n} is not an integer")));
        }
        Ok(r as usize)
    }

    pub fn sources(&self, phi: f64, sigma: f64) -> Sources {
        let g = self.proliferation * sigma * (1.0 + phi);
        Sources {
            gamma_phi: g,
            gamma_v: 0.25 * g,
            gamma_b: 0.5 * self.g_stress * g,
            gamma_sigma: 0.5 * self.consumption * (1.0 + phi),
        }
    }

    pub fn materials(&self, phi: f64) -> Materials {
        Materials {
            m_phi: self.mobility(phi),
            m_sigma: 1.0,
            eta: self.eta_bar,
            tau: self.tau_bar,
            kappa: self.kappa(phi),
        }
    }

    pub fn mobility(&self, phi: f64) -> f64 {
        0.5 * (1.0 + phi).powi(2) + MOBILITY_FLOOR
    }

    pub fn kappa(&self, phi: f64) -> f64 {
        0.5 * (1.0 + phi) * self.kappa_t
    }

    /// Difference quotient `(kappa(a) - kappa(b)) / (a - b)`, or `kappa'(a)` on the diagonal.
    pub fn kappa_quotient(&self, a: f64, b: f64) -> f64 {
        if (a - b).abs() <= 1e-12 {
            0.5 * self.kappa_t
        } else {
            (self.kappa(a) - self.kappa(b)) / (a - b)
        }
    }
}

/// Double-well potential `psi(s) = (1 - s^2)^2 / 4`.
pub fn psi(s: f64) -> f64 {
    0.25 * (1.0 - s * s).powi(2)
}

/// Convex-concave split derivative `a^3 - b` and the convex Jacobian `3 a^2`.
pub fn psi_split(a: f64, b: f64) -> (f64, f64) {
    (a * a * a - b, 3.0 * a * a)
}

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn([f64; 2]) -> SymMat + Send + Sync>;

/// Initial and boundary data as pointwise functions.
#[derive(Clone)]
pub struct InitialData {
    pub phi0: ScalarFn,
    pub b0: MatrixFn,
    /// Far-field nutrient supply, `(x, step) -> value`.
    pub sigma_inf: Arc<dyn Fn([f64; 2], usize) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialData").finish_non_exhaustive()
    }
}

/// Perturbed circle `|x| = 1 + 0.1 cos(2 theta)` with a tanh profile of width `eps`.
pub fn tumour_profile(eps: f64) -> ScalarFn {
    Arc::new(move |x: [f64; 2]| {
        let rad = x[0].hypot(x[1]);
        let theta = x[1].atan2(x[0]);
        let r = rad - (1.0 + 0.1 * (2.0 * theta).cos());
        -(r / (SQRT_2 * eps)).tanh()
    })
}

/// `sin(pi |x| / (10 sqrt 2))`, which is 1 at the corners of `[-5, 5]^2`.
pub fn default_sigma_inf(x: [f64; 2]) -> f64 {
    (PI * x[0].hypot(x[1]) / (10.0 * SQRT_2)).sin()
}

impl InitialData {
    /// The tumour configuration used in all two-dimensional experiments.
    pub fn tumour(eps: f64) -> Self {
        Self {
            phi0: tumour_profile(eps),
            b0: Arc::new(|_| SymMat::identity(2)),
            sigma_inf: Arc::new(|x, _| default_sigma_inf(x)),
        }
    }

    /// Spatially constant data.
    pub fn uniform(phi: f64, b: SymMat, sigma_inf: f64) -> Self {
        Self { phi0: Arc::new(move |_| phi), b0: Arc::new(move |_| b), sigma_inf: Arc::new(move |_, _| sigma_inf) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitMethod {
    /// Nodal interpolation.
    #[default]
    Interpolate,
    /// Lumped projection.
    Project,
}

/// Discrete initial data on one mesh.
#[derive(Clone, Debug)]
pub struct InitialFields {
    pub phi: Vec<f64>,
    pub b: Vec<SymMat>,
    pub sigma_inf: Vec<f64>,
    /// Smallest vertex eigenvalue of the initial stress tensor.
    pub b_min: f64,
}

pub fn build_initial_fields(scalar: &ScalarSpace, data: &InitialData, method: InitMethod) -> Result<InitialFields> {
    let phi = scalar.interpolate(&*data.phi0)?;
    let matrix = MatrixSpace::new(scalar.clone());
    let b = match method {
        InitMethod::Interpolate => matrix.interpolate(&*data.b0)?,
        InitMethod::Project => matrix.lumped_project(&*data.b0),
    };
    let mut b_min = f64::INFINITY;
    for (i, m) in b.iter().enumerate() {
        let l = m.min_eigenvalue();
        if !(l > 0.0) {
            return Err(Error::NotPositiveDefinite { vertex: Some(i), eigenvalue: l });
        }
        b_min = b_min.min(l);
    }
    let sigma_inf = sigma_inf_field(scalar, data, 0)?;
    Ok(InitialFields { phi, b, sigma_inf, b_min })
}

/// Nodal interpolant of the far-field supply at step `n`.
pub fn sigma_inf_field(scalar: &ScalarSpace, data: &InitialData, n: usize) -> Result<Vec<f64>> {
    scalar.interpolate(|x| (data.sigma_inf)(x, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_values() {
        let p = ModelParams::default();
        let s = p.sources(1.0, 1.0);
        assert!((s.gamma_phi - 0.4).abs() < 1e-15);
        assert!((s.gamma_v - 0.1).abs() < 1e-15);
        assert_eq!(s.gamma_b, 0.0);
        assert!((s.gamma_sigma - 2.0).abs() < 1e-15);
        let h = p.sources(-1.0, 0.7);
        assert_eq!((h.gamma_phi, h.gamma_v, h.gamma_b, h.gamma_sigma), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn materials_and_split() {
        let p = ModelParams { kappa_t: 0.5, ..Default::default() };
        assert_eq!(p.mobility(-1.0), 1e-12);
        assert_eq!(p.kappa(-1.0), 0.0);
        assert!((p.mobility(1.0) - 2.0).abs() < 1e-11);
        assert_eq!(p.kappa(1.0), 0.5);
        for phi in [-1.0, 0.0, 1.0] {
            assert_eq!(p.materials(phi).m_sigma, 1.0);
        }
        assert_eq!(psi_split(1.0, 1.0).0, 0.0);
        assert_eq!(psi_split(2.0, 1.0), (7.0, 12.0));
        assert_eq!(p.kappa_quotient(0.3, 0.3), 0.25);
        assert!((p.kappa_quotient(0.9, -0.4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn initial_values() {
        let phi = tumour_profile(0.02);
        assert!((phi([0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((default_sigma_inf([5.0, 5.0]) - 1.0).abs() < 1e-15);
        assert!(ModelParams { eps: -1.0, ..Default::default() }.validate().is_err());
        assert!(ModelParams::default().validate().is_ok());
    }
}
