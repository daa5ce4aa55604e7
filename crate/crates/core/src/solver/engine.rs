//! One time step and the outer loop with remeshing and field transfer.

use std::sync::Arc;

use crate::diagnostics::{step_diagnostics, StepDiagnostics};
use crate::error::{Error, Result};
use crate::mesh::{BoxDomain, DirichletSegment, Location, PhiSource, TriMesh};
use crate::model::{build_initial_fields, sigma_inf_field, InitMethod, InitialData, ModelParams};
use crate::tensor::SymMat;

use super::cahn_hilliard::{ch_substep, ChInputs, ChOperator};
use super::nutrient::solve_nutrient;
use super::oldroyd::{oldroyd_substep, OldroydInputs};
use super::stokes::{divergence_load, momentum_load, StokesInputs};
use super::{sup_diff, sup_diff_mat, Discretization, FieldState, LambdaField};

/// Accepted step together with the linear solver effort.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: FieldState,
    pub linear_iterations: usize,
}

/// Advance `prev` by one time step on `disc`.
pub fn time_step(
    disc: &Discretization,
    params: &ModelParams,
    prev: &FieldState,
    sigma_inf: &[f64],
) -> Result<StepOutcome> {
    let (sigma, rep) = solve_nutrient(disc, params, &prev.phi, sigma_inf, &prev.sigma)?;
    let mut linear_iterations = rep.iterations;
    let mut ch = ChOperator::new(disc, params, &prev.phi);
    let g = divergence_load(disc, params, &prev.phi, &sigma);
    let (mut phi, mut mu, mut p, mut v, mut b) =
        (prev.phi.clone(), prev.mu.clone(), prev.p.clone(), prev.v.clone(), prev.b.clone());
    let time = prev.time + params.dt;
    let mut history = Vec::new();
    for iter in 1..=params.max_nonlinear_iters {
        let x = ChInputs { phi_prev: &prev.phi, sigma: &sigma, phi: &phi, mu: &mu, v: &v, b: &b };
        let (dphi, dmu, rep) = ch_substep(disc, &mut ch, params, &x)?;
        linear_iterations += rep.iterations;
        phi.iter_mut().zip(&dphi).for_each(|(a, d)| *a += d);
        mu.iter_mut().zip(&dmu).for_each(|(a, d)| *a += d);

        let lambda = LambdaField::build(disc, &b, params.naive_lambda)?;
        let f =
            momentum_load(disc, params, &StokesInputs { phi_prev: &prev.phi, sigma: &sigma, mu: &mu, b: &b }, &lambda);
        let sol = disc.stokes.solve(&f, &g, &p, 0.1 * params.saddle_tol, 1e-2 * params.tol_nonlinear)?;
        linear_iterations += sol.report.iterations;

        let ox = OldroydInputs { phi_prev: &prev.phi, sigma: &sigma, b_prev: &prev.b, b: &b, v: &sol.v };
        let (b_new, rep) = oldroyd_substep(disc, params, &ox, &lambda)?;
        linear_iterations += rep.iterations;

        let inc = [
            crate::sparse::norm_inf(&dphi),
            crate::sparse::norm_inf(&dmu),
            sup_diff(&sol.p, &p),
            sup_diff(&sol.v, &v),
            sup_diff_mat(&b_new, &b),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if !inc.is_finite() {
            history.push(inc);
            break;
        }
        p = sol.p;
        v = sol.v;
        b = b_new;
        history.push(inc);
        log::trace!("t = {time:.4}, iteration {iter}: increment {inc:e}");
        if inc < params.tol_nonlinear {
            let state = FieldState {
                step: prev.step + 1,
                time,
                phi,
                mu,
                sigma,
                p,
                v,
                b,
                nonlinear_iters: iter,
                increments: history,
            };
            state.check_spd()?;
            return Ok(StepOutcome { state, linear_iterations });
        }
    }
    Err(Error::NonlinearDivergence { iterations: history.len(), time, history })
}

/// Mesh construction and adaptation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSettings {
    pub domain: BoxDomain,
    pub n_coarse: usize,
    pub dirichlet: Vec<DirichletSegment>,
    /// Target diameter near the interface; `None` keeps the coarse mesh.
    pub h_fine: Option<f64>,
    /// Remesh every this many steps (0 disables remeshing).
    pub remesh_interval: usize,
    /// Gradient threshold of the interface indicator; defaults to
    /// `0.02 / (sqrt 2 eps)`.
    pub indicator_threshold: Option<f64>,
}

impl MeshSettings {
    /// `[-5, 5]^2` with a Dirichlet condition on the left side.
    pub fn square(n_coarse: usize, h_fine: Option<f64>, remesh_interval: usize) -> Self {
        let domain = BoxDomain::new([-5.0, -5.0], [5.0, 5.0]).expect("valid box");
        Self {
            domain,
            n_coarse,
            dirichlet: vec![DirichletSegment::whole(crate::mesh::Side::Left, &domain)],
            h_fine,
            remesh_interval,
            indicator_threshold: None,
        }
    }

    pub fn threshold(&self, eps: f64) -> f64 {
        self.indicator_threshold.unwrap_or(0.02 / (std::f64::consts::SQRT_2 * eps))
    }

    /// Coarse mesh, refined around the initial interface when requested.
    pub fn initial_mesh(&self, data: &InitialData, eps: f64) -> Result<TriMesh> {
        let coarse = TriMesh::build_structured(self.domain, self.n_coarse, &self.dirichlet)?;
        match self.h_fine {
            Some(h) => coarse.refine_near_interface(PhiSource::Function(&*data.phi0), h, self.threshold(eps)),
            None => Ok(coarse),
        }
    }
}

/// Owns the current mesh and state and advances them in time.
pub struct Engine {
    pub params: ModelParams,
    pub data: InitialData,
    pub mesh_settings: MeshSettings,
    pub disc: Discretization,
    pub state: FieldState,
    pub sigma_inf: Vec<f64>,
    pub remesh_count: usize,
}

impl Engine {
    pub fn new(params: ModelParams, data: InitialData, mesh_settings: MeshSettings) -> Result<Self> {
        params.validate()?;
        let mesh = Arc::new(mesh_settings.initial_mesh(&data, params.eps)?);
        let disc = Discretization::new(mesh, &params)?;
        let init = build_initial_fields(&disc.scalar, &data, InitMethod::Interpolate)?;
        let state = FieldState::at_rest(&disc, init.phi, init.b);
        Ok(Self { params, data, mesh_settings, disc, sigma_inf: init.sigma_inf, state, remesh_count: 0 })
    }

    /// Rebuild the mesh around the current interface and transfer all
    /// fields. Returns whether the mesh changed.
    pub fn remesh(&mut self) -> Result<bool> {
        let Some(h) = self.mesh_settings.h_fine else { return Ok(false) };
        let threshold = self.mesh_settings.threshold(self.params.eps);
        let old = &self.disc.mesh;
        let new = old.refine_near_interface(PhiSource::Field(&self.state.phi), h, threshold)?;
        if new.vertices == old.vertices && new.triangles == old.triangles {
            return Ok(false);
        }
        let new = Arc::new(new);
        let disc = Discretization::new(new.clone(), &self.params)?;
        let locs = new.locate_vertices_in(old);
        let transfer = |f: &[f64]| -> Vec<f64> { transfer_p1(old, &locs, f) };
        let b = transfer_matrix(old, &locs, &self.state.b);
        let old_vs = &self.disc.velocity;
        let v_old = &self.state.v;
        let mut v = disc.velocity.interpolate(|x| old_vs.eval_at(v_old, x).unwrap_or([0.0; 2]));
        for (vi, &d) in v.iter_mut().zip(&disc.velocity.dirichlet) {
            if d {
                *vi = 0.0;
            }
        }
        let state = FieldState {
            step: self.state.step,
            time: self.state.time,
            phi: transfer(&self.state.phi),
            mu: transfer(&self.state.mu),
            sigma: transfer(&self.state.sigma),
            p: transfer(&self.state.p),
            v,
            b,
            nonlinear_iters: self.state.nonlinear_iters,
            increments: self.state.increments.clone(),
        };
        state.check_spd()?;
        self.sigma_inf = sigma_inf_field(&disc.scalar, &self.data, self.state.step + 1)?;
        self.disc = disc;
        self.state = state;
        self.remesh_count += 1;
        Ok(true)
    }

    /// Advance one step, remeshing first when due, and return its diagnostics.
    pub fn step(&mut self) -> Result<StepDiagnostics> {
        let r = self.mesh_settings.remesh_interval;
        if r > 0 && self.state.step > 0 && self.state.step.is_multiple_of(r) {
            self.remesh()?;
        }
        let outcome = time_step(&self.disc, &self.params, &self.state, &self.sigma_inf)?;
        let diag = step_diagnostics(&self.disc, &self.params, &outcome.state, &self.state)?;
        self.state = outcome.state;
        Ok(diag)
    }

    /// Run to `t_end`, calling `on_step` after every accepted step.
    pub fn run<F>(&mut self, mut on_step: F) -> Result<Vec<StepDiagnostics>>
    where
        F: FnMut(&Engine, &StepDiagnostics) -> Result<()>,
    {
        let n = self.params.num_steps()?;
        let mut series = Vec::with_capacity(n);
        while self.state.step < n {
            let d = self.step()?;
            on_step(self, &d)?;
            series.push(d);
        }
        Ok(series)
    }
}

/// Transfer a P1 field to the vertices located by [`TriMesh::locate_vertices_in`].
pub fn transfer_p1(old: &TriMesh, locs: &[Location], f: &[f64]) -> Vec<f64> {
    locs.iter()
        .map(|l| match *l {
            Location::Vertex(i) => f[i],
            Location::Element { element, bary } => {
                let t = old.triangles[element];
                bary[0] * f[t[0]] + bary[1] * f[t[1]] + bary[2] * f[t[2]]
            }
        })
        .collect()
}

fn transfer_matrix(old: &TriMesh, locs: &[Location], b: &[SymMat]) -> Vec<SymMat> {
    locs.iter()
        .map(|l| match *l {
            Location::Vertex(i) => b[i],
            Location::Element { element, bary } => {
                let t = old.triangles[element];
                b[t[0]].scale(bary[0]).axpy(bary[1], &b[t[1]]).axpy(bary[2], &b[t[2]])
            }
        })
        .collect()
}
