//! Element-wise operators `Lambda_{i,j}` that turn the discrete convective
//! term into an exact chain rule against `-B + B^{-1}`.

use crate::affine::AffineMap;
use crate::error::Result;
use crate::tensor::{beta_delta_mat, f_delta_mat, SymMat};

/// Which chain rule to realize.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularization {
    /// Production path: identity in place of `beta_delta`, `s^2/2` in place of
    /// `f_delta`; vertex matrices must be positive definite.
    None,
    Delta(f64),
}

/// Relative size of `beta(B_m) - beta(B_0)` below which the two endpoints are
/// considered equal.
const EQUAL_TOL: f64 = 1e-12;
/// Denominator tolerance relative to the magnitude of the numerator terms.
const DENOM_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug)]
pub struct ElementLambda {
    pub dim: usize,
    /// Raw `lambda_m` before clamping; `NaN` where the fallback branch applied.
    pub lambda: [f64; 3],
    pub fallback: [bool; 3],
    /// Reference-element matrices `Lambda_hat_m`, `m = 1..d` stored at `m - 1`.
    pub reference: [SymMat; 3],
    /// Cartesian `Lambda_{i,j}` constant on the element.
    pub cartesian: [[SymMat; 3]; 3],
}

/// Per-vertex ingredients: `beta(B)`, `B - beta^{-1}(B)` and the potential
/// `F(B) = -tr f(B) - tr ln beta(B)`.
pub(crate) struct VertexTerms {
    pub beta: SymMat,
    pub d_term: SymMat,
    pub potential: f64,
}

pub(crate) fn vertex_terms(b: &SymMat, reg: Regularization) -> Result<VertexTerms> {
    match reg {
        Regularization::None => {
            let inv = b.inverse_spd()?;
            let trln = b.trace_ln()?;
            Ok(VertexTerms { beta: *b, d_term: b.sub(&inv), potential: -0.5 * b.norm_sq() - trln })
        }
        Regularization::Delta(delta) => {
            let beta = beta_delta_mat(b, delta);
            let e = beta.eigen();
            let inv = e.compose(|s| 1.0 / s);
            let trln: f64 = e.values[..b.dim()].iter().map(|s| s.ln()).sum();
            let f = f_delta_mat(b, delta).trace();
            Ok(VertexTerms { beta, d_term: b.sub(&inv), potential: -f - trln })
        }
    }
}

/// `Lambda_{i,j} = sum_m [A^{-T}]_{i,m} Lambda_hat_m [A^T]_{m,j}`
fn to_cartesian(map: &AffineMap, reference: &[SymMat; 3]) -> [[SymMat; 3]; 3] {
    let d = map.dim;
    let mut out = [[SymMat::zeros(d); 3]; 3];
    for (i, row) in out.iter_mut().enumerate().take(d) {
        for (j, entry) in row.iter_mut().enumerate().take(d) {
            let mut acc = SymMat::zeros(d);
            for (m, lm) in reference.iter().enumerate().take(d) {
                let c = map.inverse_transpose[i][m] * map.matrix[j][m];
                acc = acc.axpy(c, lm);
            }
            *entry = acc;
        }
    }
    out
}

/// Build `Lambda` on one element from its `d + 1` vertex values, ordered as
/// the vertices that define `map`.
pub fn build_lambda(vertex_b: &[SymMat], map: &AffineMap, reg: Regularization) -> Result<ElementLambda> {
    let d = map.dim;
    assert_eq!(vertex_b.len(), d + 1, "expected {} vertex matrices", d + 1);
    let t0 = vertex_terms(&vertex_b[0], reg)?;
    let mut lambda = [f64::NAN; 3];
    let mut fallback = [false; 3];
    let mut reference = [SymMat::zeros(d); 3];
    for m in 1..=d {
        let tm = vertex_terms(&vertex_b[m], reg)?;
        let dbeta = tm.beta.sub(&t0.beta);
        let scale = 1f64.max(tm.beta.norm()).max(t0.beta.norm());
        let dd = tm.d_term.sub(&t0.d_term);
        let denom = dbeta.ddot(&dd);
        let num_a = tm.potential - t0.potential;
        let num_b = tm.beta.ddot(&dd);
        let num_scale = tm.potential.abs() + t0.potential.abs() + num_b.abs();
        if dbeta.norm() <= EQUAL_TOL * scale || denom <= DENOM_TOL * num_scale {
            fallback[m - 1] = true;
            reference[m - 1] = tm.beta;
            continue;
        }
        let lam = (num_a + num_b) / denom;
        lambda[m - 1] = lam;
        let lc = lam.clamp(0.0, 1.0);
        reference[m - 1] = tm.beta.axpy(lc, &dbeta.scale(-1.0));
    }
    Ok(ElementLambda { dim: d, lambda, fallback, cartesian: to_cartesian(map, &reference), reference })
}

impl ElementLambda {
    /// Rebuild with prescribed `lambda_m` values (no clamping, no fallback).
    /// Used to probe the sensitivity of the chain rule.
    pub fn with_lambdas(vertex_b: &[SymMat], map: &AffineMap, reg: Regularization, lambdas: &[f64]) -> Result<Self> {
        let d = map.dim;
        let t0 = vertex_terms(&vertex_b[0], reg)?;
        let mut reference = [SymMat::zeros(d); 3];
        let mut lambda = [f64::NAN; 3];
        for m in 1..=d {
            let tm = vertex_terms(&vertex_b[m], reg)?;
            lambda[m - 1] = lambdas[m - 1];
            reference[m - 1] = tm.beta.axpy(lambdas[m - 1], &t0.beta.sub(&tm.beta));
        }
        Ok(Self { dim: d, lambda, fallback: [false; 3], cartesian: to_cartesian(map, &reference), reference })
    }

    /// `Lambda_{i,j}` with zero-based indices.
    pub fn get(&self, i: usize, j: usize) -> &SymMat {
        &self.cartesian[i][j]
    }

    pub fn max_norm(&self) -> f64 {
        let d = self.dim;
        let mut m = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                m = m.max(self.cartesian[i][j].norm());
            }
        }
        m
    }
}

/// Relative residual of the discrete chain rule on one element:
/// `max_i |sum_j Lambda_ij : d_j I_h[-B + beta^{-1}(B)] - d_i I_h[F(B)]|`
/// divided by the magnitude of the terms involved.
pub fn chain_rule_residual(vertex_b: &[SymMat], map: &AffineMap, reg: Regularization) -> Result<f64> {
    let lam = build_lambda(vertex_b, map, reg)?;
    chain_rule_residual_with(&lam, vertex_b, map, reg)
}

pub fn chain_rule_residual_with(
    lam: &ElementLambda,
    vertex_b: &[SymMat],
    map: &AffineMap,
    reg: Regularization,
) -> Result<f64> {
    let d = map.dim;
    let terms: Vec<VertexTerms> = vertex_b.iter().map(|b| vertex_terms(b, reg)).collect::<Result<_>>()?;
    let nc = crate::tensor::num_components(d);
    // gradient of each component of G = -(B - beta^{-1}(B))
    let mut grad_g = [[SymMat::zeros(d); 3]; 1];
    let grad_g = &mut grad_g[0];
    for k in 0..nc {
        let vals: Vec<f64> = terms.iter().map(|t| -t.d_term.components()[k]).collect();
        let g = map.gradient(&vals);
        for j in 0..d {
            grad_g[j].components_mut()[k] = g[j];
        }
    }
    let pot: Vec<f64> = terms.iter().map(|t| t.potential).collect();
    let grad_f = map.gradient(&pot);
    let mut worst = 0.0f64;
    for i in 0..d {
        let mut lhs = 0.0;
        let mut scale = grad_f[i].abs();
        for j in 0..d {
            let t = lam.cartesian[i][j].ddot(&grad_g[j]);
            lhs += t;
            scale += lam.cartesian[i][j].norm() * grad_g[j].norm();
        }
        let r = (lhs - grad_f[i]).abs();
        if r > 0.0 {
            worst = worst.max(r / scale.max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}
