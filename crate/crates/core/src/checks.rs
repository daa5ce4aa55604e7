//! Randomized property checks of the discrete structure, runnable from the
//! command line.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affine::AffineMap;
use crate::error::Result;
use crate::fespace::ScalarSpace;
use crate::lambda::{build_lambda, chain_rule_residual_with, Regularization};
use crate::mesh::{BoxDomain, DirichletSegment, Side, TriMesh};
use crate::model::{psi, psi_split};
use crate::quadrature::Rule;
use crate::tensor::{beta_delta_mat, SymMat};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Random SPD matrix with eigenvalues log-uniform in `[lo, hi]`.
pub fn random_spd(rng: &mut impl Rng, lo: f64, hi: f64) -> SymMat {
    let (a, b) = (lo.ln(), hi.ln());
    let l1 = rng.random_range(a..b).exp();
    let l2 = rng.random_range(a..b).exp();
    let th: f64 = rng.random_range(0.0..PI);
    let (c, s) = (th.cos(), th.sin());
    SymMat::new2(c * c * l1 + s * s * l2, s * s * l1 + c * c * l2, c * s * (l1 - l2))
}

/// A random structured mesh: random box, `n` in `1..=6`, up to two uniform
/// bisection generations.
pub fn random_mesh(rng: &mut impl Rng) -> TriMesh {
    let x0 = rng.random_range(-3.0..3.0);
    let y0 = rng.random_range(-3.0..3.0);
    let w = rng.random_range(0.2..4.0);
    let d = BoxDomain::new([x0, y0], [x0 + w, y0 + w]).expect("valid box");
    let n = rng.random_range(1..=6);
    let m = TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Left, &d)]).expect("mesh");
    let g = rng.random_range(0..=2);
    m.refine_uniform(g).expect("refine")
}

fn random_element(rng: &mut impl Rng) -> AffineMap {
    let m = random_mesh(rng);
    let e = rng.random_range(0..m.num_elements());
    m.affine_map(e)
}

/// Chain-rule residual and lambda bounds over `samples` random elements for
/// each regularization. Returns `(max residual, lambda violations)`.
pub fn chain_rule_sweep(seed: u64, samples: usize) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regs =
        [Regularization::None, Regularization::Delta(0.5), Regularization::Delta(0.1), Regularization::Delta(0.01)];
    let mut worst = 0.0f64;
    let mut violations = 0;
    for reg in regs {
        for _ in 0..samples {
            let map = random_element(&mut rng);
            let vb: Vec<SymMat> = (0..3).map(|_| random_spd(&mut rng, 1e-3, 10.0)).collect();
            let lam = build_lambda(&vb, &map, reg)?;
            for m in 0..2 {
                let l = lam.lambda[m];
                if !lam.fallback[m] && !(0.0..=1.0).contains(&l) {
                    violations += 1;
                }
            }
            worst = worst.max(chain_rule_residual_with(&lam, &vb, &map, reg)?);
        }
    }
    Ok((worst, violations))
}

/// Per-element slack of `-<grad B, grad I_h beta^{-1}(B)>_K - (1/d)|grad I_h tr ln beta(B)|_K^2`.
pub fn gradient_log_slack(map: &AffineMap, vb: &[SymMat; 3], delta: Option<f64>) -> Result<f64> {
    let beta: Vec<SymMat> = vb.iter().map(|b| delta.map_or(*b, |d| beta_delta_mat(b, d))).collect();
    let inv: Vec<SymMat> = beta.iter().map(|b| b.inverse_spd()).collect::<Result<_>>()?;
    let trln: Vec<f64> = beta.iter().map(|b| b.trace_ln()).collect::<Result<_>>()?;
    let g = map.barycentric_gradients();
    let area = map.volume();
    let mut cross = 0.0;
    for m in 0..3 {
        for n in 0..3 {
            let gg = g[m][0] * g[n][0] + g[m][1] * g[n][1];
            cross += vb[m].ddot(&inv[n]) * gg;
        }
    }
    let gl = map.gradient(&trln);
    let lhs = -area * cross;
    let rhs = 0.5 * area * (gl[0] * gl[0] + gl[1] * gl[1]);
    Ok(lhs - rhs)
}

/// Smallest slack over `fields` random SPD P1 fields on random meshes.
pub fn gradient_log_sweep(seed: u64, fields: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for k in 0..fields {
        let mesh = random_mesh(&mut rng);
        let b: Vec<SymMat> = (0..mesh.num_vertices()).map(|_| random_spd(&mut rng, 1e-2, 10.0)).collect();
        let delta = [None, Some(0.1), Some(0.5)][k % 3];
        for (e, t) in mesh.triangles.iter().enumerate() {
            let s = gradient_log_slack(&mesh.affine_map(e), &[b[t[0]], b[t[1]], b[t[2]]], delta)?;
            worst = worst.min(s);
        }
    }
    Ok(worst)
}

/// Range of `||q||_h / ||q||_{L2}` over random P1 fields.
pub fn norm_ratio_sweep(seed: u64, fields: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut current: Option<(ScalarSpace, crate::sparse::Csr)> = None;
    for k in 0..fields {
        if k % 50 == 0 || current.is_none() {
            let s = ScalarSpace::new(Arc::new(random_mesh(&mut rng)));
            let m = s.mass();
            current = Some((s, m));
        }
        let (s, m) = current.as_ref().expect("space");
        let q: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l2 = crate::sparse::dot(&q, &m.mul_vec(&q)).sqrt();
        let r = s.lumped_norm(&q) / l2;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// `||Lambda_ij - delta_ij B_h||_{L2}` for a smooth SPD field on an
/// `n x n` mesh of the unit square.
pub fn lambda_consistency_error(n: usize) -> Result<f64> {
    let d = BoxDomain::new([0.0, 0.0], [1.0, 1.0])?;
    let mesh = TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Left, &d)])?;
    let field =
        |x: [f64; 2]| SymMat::new2(2.0 + (2.0 * x[0]).sin(), 1.5 + x[0] * x[1], 0.5 * (x[0] + 2.0 * x[1]).cos());
    let b: Vec<SymMat> = mesh.vertices.iter().map(|&x| field(x)).collect();
    let rule = Rule::of_degree(2);
    let mut err = 0.0;
    for (e, t) in mesh.triangles.iter().enumerate() {
        let map = mesh.affine_map(e);
        let vb = [b[t[0]], b[t[1]], b[t[2]]];
        let lam = build_lambda(&vb, &map, Regularization::None)?;
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let bq = vb[0].scale(q[0]).axpy(q[1], &vb[1]).axpy(q[2], &vb[2]);
            for i in 0..2 {
                for j in 0..2 {
                    let target = if i == j { bq } else { SymMat::zeros(2) };
                    err += w * map.volume() * lam.get(i, j).sub(&target).norm_sq();
                }
            }
        }
    }
    Ok(err.sqrt())
}

/// Observed orders between consecutive meshes `n, 2n, 4n`.
pub fn lambda_consistency_orders(n: usize) -> Result<Vec<f64>> {
    let errs: Vec<f64> = [n, 2 * n, 4 * n].iter().map(|&k| lambda_consistency_error(k)).collect::<Result<_>>()?;
    Ok(errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}

/// Smallest value of `psi_h'(a, b)(a - b) - (psi(a) - psi(b))` over random pairs.
pub fn psi_split_sweep(seed: u64, pairs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|_| {
            let a = rng.random_range(-2.0..2.0);
            let b = rng.random_range(-2.0..2.0);
            psi_split(a, b).0 * (a - b) - (psi(a) - psi(b))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Run every check with the given seed.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let (res, viol) = chain_rule_sweep(seed, 500)?;
    out.push(CheckResult {
        name: "chain_rule",
        passed: res <= 1e-10,
        detail: format!("max relative residual {res:.3e}"),
    });
    out.push(CheckResult { name: "lambda_bounds", passed: viol == 0, detail: format!("{viol} values outside [0, 1]") });
    let slack = gradient_log_sweep(seed, 200)?;
    out.push(CheckResult { name: "gradient_log", passed: slack >= -1e-11, detail: format!("min slack {slack:.3e}") });
    let orders = lambda_consistency_orders(4)?;
    out.push(CheckResult {
        name: "lambda_consistency",
        passed: orders.iter().all(|&o| o >= 0.9),
        detail: format!("orders {orders:.3?}"),
    });
    let (lo, hi) = norm_ratio_sweep(seed, 1000);
    out.push(CheckResult {
        name: "norm_equivalence",
        passed: lo >= 1.0 - 1e-12 && hi <= 2.0 + 1e-12,
        detail: format!("ratio range [{lo:.4}, {hi:.4}]"),
    });
    let convex = psi_split_sweep(seed, 10_000);
    out.push(CheckResult {
        name: "psi_split",
        passed: convex >= -1e-12,
        detail: format!("min convexity gap {convex:.3e}"),
    });
    Ok(out)
}
