//! Time stepping: nutrient solve, then the decoupled iteration over the
//! Cahn-Hilliard, Stokes and Oldroyd-B subsystems, plus the outer loop with
//! remeshing.

pub mod cahn_hilliard;
pub mod engine;
pub mod nutrient;
pub mod oldroyd;
pub mod stokes;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{BoundarySelector, ScalarSpace, VelocitySpace};
use crate::lambda::{build_lambda, Regularization};
use crate::mesh::TriMesh;
use crate::model::ModelParams;
use crate::sparse::Csr;
use crate::tensor::SymMat;

pub use engine::{time_step, Engine, MeshSettings, StepOutcome};
pub use stokes::StokesOperator;

/// One time level of the discrete solution.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub step: usize,
    pub time: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p: Vec<f64>,
    /// Velocity coefficients, see [`VelocitySpace`] for the layout.
    pub v: Vec<f64>,
    pub b: Vec<SymMat>,
    pub nonlinear_iters: usize,
    /// Largest sup-norm increment of each nonlinear iteration.
    pub increments: Vec<f64>,
}

impl FieldState {
    /// State at rest: `mu = p = sigma = 0`, `v = 0`.
    pub fn at_rest(disc: &Discretization, phi: Vec<f64>, b: Vec<SymMat>) -> Self {
        let n = disc.scalar.dim();
        Self {
            step: 0,
            time: 0.0,
            phi,
            mu: vec![0.0; n],
            sigma: vec![0.0; n],
            p: vec![0.0; n],
            v: vec![0.0; disc.velocity.dim()],
            b,
            nonlinear_iters: 0,
            increments: Vec::new(),
        }
    }

    /// Smallest vertex eigenvalue of `B`.
    pub fn spd_margin(&self) -> f64 {
        self.b.iter().map(SymMat::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// Fail with the offending vertex if `B` is not positive definite.
    pub fn check_spd(&self) -> Result<()> {
        for (i, b) in self.b.iter().enumerate() {
            let l = b.min_eigenvalue();
            if !(l > 0.0) {
                return Err(Error::NotPositiveDefinite { vertex: Some(i), eigenvalue: l });
            }
        }
        Ok(())
    }
}

/// Mesh-dependent operators that stay fixed between remeshes.
pub struct Discretization {
    pub mesh: Arc<TriMesh>,
    pub scalar: ScalarSpace,
    pub velocity: VelocitySpace,
    pub stiffness: Csr,
    /// P1 mass on the whole boundary.
    pub boundary_mass: Csr,
    /// `B[q, w] = <div w, eta_q>`.
    pub divergence: Csr,
    pub stokes: StokesOperator,
    /// `M_lumped + dt * alpha * K`.
    pub oldroyd: Csr,
}

impl Discretization {
    pub fn new(mesh: Arc<TriMesh>, params: &ModelParams) -> Result<Self> {
        let scalar = ScalarSpace::new(mesh.clone());
        let velocity = VelocitySpace::new(scalar.clone(), params.element_variant);
        let stiffness = scalar.stiffness(None);
        let boundary_mass = scalar.boundary_mass(BoundarySelector::All);
        let divergence = velocity.divergence();
        let stokes = StokesOperator::new(&velocity, &divergence, params)?;
        let oldroyd = scalar.lumped_mass().add_scaled(params.dt * params.alpha, &stiffness);
        Ok(Self { mesh, scalar, velocity, stiffness, boundary_mass, divergence, stokes, oldroyd })
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }
}

/// Per-element convective tensor `Lambda_ij`, either the chain-rule
/// construction or the naive `delta_ij B`.
pub enum LambdaField {
    Elementwise(Vec<[[SymMat; 2]; 2]>),
    Naive,
}

impl LambdaField {
    pub fn build(disc: &Discretization, b: &[SymMat], naive: bool) -> Result<Self> {
        if naive {
            return Ok(LambdaField::Naive);
        }
        use rayon::prelude::*;
        let out: Result<Vec<[[SymMat; 2]; 2]>> = (0..disc.num_elements())
            .into_par_iter()
            .map(|e| {
                let t = disc.mesh.triangles[e];
                let vb = [b[t[0]], b[t[1]], b[t[2]]];
                let lam = build_lambda(&vb, &disc.scalar.geometry[e].map, Regularization::None)?;
                Ok([[*lam.get(0, 0), *lam.get(0, 1)], [*lam.get(1, 0), *lam.get(1, 1)]])
            })
            .collect();
        Ok(LambdaField::Elementwise(out?))
    }

    /// `Lambda_ij` at barycentric point `l` of element `e`.
    pub fn at(&self, e: usize, l: &[f64; 3], vertex_b: &[SymMat; 3]) -> [[SymMat; 2]; 2] {
        match self {
            LambdaField::Elementwise(v) => v[e],
            LambdaField::Naive => {
                let bq = vertex_b[0].scale(l[0]).axpy(l[1], &vertex_b[1]).axpy(l[2], &vertex_b[2]);
                let z = SymMat::zeros(2);
                [[bq, z], [z, bq]]
            }
        }
    }
}

/// `max_i |x_i - y_i|`
pub(crate) fn sup_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub(crate) fn sup_diff_mat(x: &[SymMat], y: &[SymMat]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a.sub(b).max_abs()).fold(0.0, f64::max)
}
