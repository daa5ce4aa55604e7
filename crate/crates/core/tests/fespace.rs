use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vefem::fespace::{BoundarySelector, ElementVariant, MatrixSpace, ScalarSpace, VelocitySpace};
use vefem::linsolve::Cholesky;
use vefem::mesh::{BoundaryTag, BoxDomain, DirichletSegment, Side, TriMesh};
use vefem::sparse::{dot, Csr};
use vefem::SymMat;

fn mesh(lo: f64, hi: f64, n: usize, dirichlet: bool) -> Arc<TriMesh> {
    let d = BoxDomain::new([lo, lo], [hi, hi]).unwrap();
    let segs = if dirichlet { vec![DirichletSegment::whole(Side::Left, &d)] } else { vec![] };
    Arc::new(TriMesh::build_structured(d, n, &segs).unwrap())
}

fn space(lo: f64, hi: f64, n: usize) -> ScalarSpace {
    ScalarSpace::new(mesh(lo, hi, n, true))
}

fn dense(a: &Csr) -> DMatrix<f64> {
    let n = a.nrows;
    let mut m = DMatrix::zeros(n, a.ncols);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            m[(i, j)] += v;
        }
    }
    m
}

/// Mass and stiffness assembled with the textbook P1 element formulas.
fn oracle_mass_stiffness(m: &TriMesh) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.num_vertices();
    let mut mass = DMatrix::zeros(n, n);
    let mut stiff = DMatrix::zeros(n, n);
    for t in &m.triangles {
        let p = t.map(|v| Vector2::new(m.vertices[v][0], m.vertices[v][1]));
        let j = Matrix2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
        let area = 0.5 * j.determinant();
        let jit = j.try_inverse().unwrap().transpose();
        let g = [jit * Vector2::new(-1.0, -1.0), jit * Vector2::new(1.0, 0.0), jit * Vector2::new(0.0, 1.0)];
        for a in 0..3 {
            for b in 0..3 {
                mass[(t[a], t[b])] += area / 12.0 * if a == b { 2.0 } else { 1.0 };
                stiff[(t[a], t[b])] += area * g[a].dot(&g[b]);
            }
        }
    }
    (mass, stiff)
}

fn max_err_on_elements(s: &ScalarSpace, f: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let pts = [[1.0 / 3.0; 3], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.6, 0.2, 0.2]];
    let mut worst = 0.0f64;
    for (e, t) in s.mesh.triangles.iter().enumerate() {
        for l in &pts {
            let v = l[0] * f[t[0]] + l[1] * f[t[1]] + l[2] * f[t[2]];
            worst = worst.max((v - exact(s.point(e, l))).abs());
        }
    }
    worst
}

/// L2 error of a P1 field against a function, by degree-5 quadrature.
fn l2_err(s: &ScalarSpace, f: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let rule = vefem::quadrature::Rule::of_degree(5);
    let mut acc = 0.0;
    for (e, t) in s.mesh.triangles.iter().enumerate() {
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let v = l[0] * f[t[0]] + l[1] * f[t[1]] + l[2] * f[t[2]];
            acc += w * s.mesh.area(e) * (v - exact(s.point(e, l))).powi(2);
        }
    }
    acc.sqrt()
}

fn order(errs: &[f64]) -> f64 {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
}

#[test]
fn interpolation_reproduces_affines_and_converges() {
    let s = space(0.0, 1.0, 4);
    assert!(s.interpolate(|_| 2.5).unwrap().iter().all(|&v| v == 2.5));
    let aff = |x: [f64; 2]| 1.0 + 2.0 * x[0] - 3.0 * x[1];
    let f = s.interpolate(aff).unwrap();
    assert!(max_err_on_elements(&s, &f, aff) < 1e-13);
    assert!(s.interpolate(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 }).is_err());
    let sq = |x: [f64; 2]| x[0] * x[0];
    let errs: Vec<f64> = [4, 8, 16, 32]
        .iter()
        .map(|&n| {
            let s = space(0.0, 1.0, n);
            max_err_on_elements(&s, &s.interpolate(sq).unwrap(), sq)
        })
        .collect();
    assert!(order(&errs) >= 1.9, "{errs:?}");
}

#[test]
fn lipschitz_composite_interpolation() {
    // || I_h tanh(q_h) - tanh(q_h) ||_L2 = O(h) for a fixed smooth q
    let q = |x: [f64; 2]| 3.0 * (2.0 * x[0]).sin() + x[1];
    let errs: Vec<f64> = [4, 8, 16, 32]
        .iter()
        .map(|&n| {
            let s = space(0.0, 1.0, n);
            let qh = s.interpolate(q).unwrap();
            let ih: Vec<f64> = qh.iter().map(|v| v.tanh()).collect();
            // tanh of the piecewise-linear q_h, evaluated per element
            let rule = vefem::quadrature::Rule::of_degree(5);
            let mut acc = 0.0;
            for (e, t) in s.mesh.triangles.iter().enumerate() {
                for (l, w) in rule.points.iter().zip(&rule.weights) {
                    let lin = |f: &[f64]| l[0] * f[t[0]] + l[1] * f[t[1]] + l[2] * f[t[2]];
                    acc += w * s.mesh.area(e) * (lin(&ih) - lin(&qh).tanh()).powi(2);
                }
            }
            acc.sqrt()
        })
        .collect();
    assert!(order(&errs) >= 0.9, "{errs:?}");
}

#[test]
fn lumped_inner_products() {
    let s = space(-5.0, 5.0, 8);
    let one = vec![1.0; s.dim()];
    assert!((s.lumped_inner(&one, &one).unwrap() - 100.0).abs() < 1e-12);
    assert!(s.lumped_inner(&one, &one[1..]).is_err());
    assert!((s.weights.iter().sum::<f64>() - 100.0).abs() < 1e-12);
    // the hat at (1, 0) of the unit square lives on one reference-sized triangle
    let r = space(0.0, 1.0, 1);
    let k = r.mesh.vertices.iter().position(|&x| x == [1.0, 0.0]).unwrap();
    let mut hat = vec![0.0; r.dim()];
    hat[k] = 1.0;
    assert!((r.lumped_inner(&hat, &hat).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    let ms = MatrixSpace::new(s.clone());
    let b = ms.interpolate(|_| SymMat::identity(2)).unwrap();
    assert!((ms.lumped_inner(&b, &b).unwrap() - 200.0).abs() < 1e-10);
}

#[test]
fn norm_equivalence_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1, 3, 8] {
        let s = space(-1.0, 2.0, n);
        let mass = s.mass();
        for _ in 0..100 {
            let q: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = s.lumped_norm(&q) / dot(&q, &mass.mul_vec(&q)).sqrt();
            assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&r), "{r}");
        }
    }
}

#[test]
fn lumped_projection() {
    let s = space(0.0, 1.0, 8);
    assert!(s.lumped_project(|_| 3.0).iter().all(|v| (v - 3.0).abs() < 1e-13));
    let p = s.lumped_project(|x| x[0]);
    let mut boundary_diff = 0.0f64;
    for (k, x) in s.mesh.vertices.iter().enumerate() {
        let interior = x[0] > 1e-12 && x[0] < 1.0 - 1e-12 && x[1] > 1e-12 && x[1] < 1.0 - 1e-12;
        if interior {
            assert!((p[k] - x[0]).abs() < 1e-12, "{:?} {}", x, p[k]);
        } else {
            boundary_diff = boundary_diff.max((p[k] - x[0]).abs());
        }
    }
    assert!(boundary_diff > 1e-3 && boundary_diff < 0.2);
    let eta = |x: [f64; 2]| (PI * x[0]).sin();
    let errs: Vec<f64> = [4, 8, 16, 32]
        .iter()
        .map(|&n| {
            let s = space(0.0, 1.0, n);
            l2_err(&s, &s.lumped_project(eta), eta)
        })
        .collect();
    assert!(order(&errs) >= 0.9, "{errs:?}");
    // defining property against the exact load vector
    let s = space(0.0, 1.0, 4);
    let f = |x: [f64; 2]| x[0] * x[0] * x[1];
    let p = s.lumped_project(f);
    let rule = vefem::quadrature::Rule::of_degree(5);
    let mut load = vec![0.0; s.dim()];
    for (e, t) in s.mesh.triangles.iter().enumerate() {
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let v = f(s.point(e, l));
            for k in 0..3 {
                load[t[k]] += w * s.mesh.area(e) * v * l[k];
            }
        }
    }
    for k in 0..s.dim() {
        assert!((s.weights[k] * p[k] - load[k]).abs() < 1e-14);
    }
    let ms = MatrixSpace::new(s.clone());
    let bp = ms.lumped_project(|x| SymMat::new2(x[0] * x[0] * x[1], 1.0, 0.0));
    assert!(bp.iter().zip(&p).all(|(b, q)| (b.get(0, 0) - q).abs() < 1e-14 && (b.get(1, 1) - 1.0).abs() < 1e-13));
}

#[test]
fn assembled_matrices_match_oracle() {
    for n in [1, 3, 6] {
        let s = space(-5.0, 5.0, n);
        let (m, k) = oracle_mass_stiffness(&s.mesh);
        assert!((dense(&s.mass()) - &m).abs().max() < 1e-12);
        assert!((dense(&s.stiffness(None)) - &k).abs().max() < 1e-12);
        let lumped = dense(&s.lumped_mass());
        for i in 0..s.dim() {
            assert!((lumped[(i, i)] - m.row(i).sum()).abs() < 1e-12);
        }
        assert!((lumped.trace() - 100.0).abs() < 1e-11);
        // coefficient-weighted stiffness uses the element mean of the coefficient
        let c: Vec<f64> = s.mesh.vertices.iter().map(|x| 1.0 + 0.1 * x[0]).collect();
        let kc = dense(&s.stiffness(Some(&c)));
        let x1: Vec<f64> = s.mesh.vertices.iter().map(|x| x[0]).collect();
        let x1v = nalgebra::DVector::from_vec(x1.clone());
        let energy = x1v.dot(&(&kc * &x1v));
        // int (1 + x/10) |grad x|^2 over [-5,5]^2 = 100
        assert!((energy - 100.0).abs() < 1e-10);
    }
}

#[test]
fn unit_square_lumped_mass_and_stiffness_rows() {
    let s = space(0.0, 1.0, 1);
    let lm = dense(&s.lumped_mass());
    assert!((lm.trace() - 1.0).abs() < 1e-15);
    assert_eq!(lm.clone() - DMatrix::from_diagonal(&lm.diagonal()), DMatrix::zeros(4, 4));
    let s = space(-5.0, 5.0, 8);
    let k = s.stiffness(None);
    for r in k.row_sums() {
        assert!(r.abs() < 1e-12);
    }
    let x1: Vec<f64> = s.mesh.vertices.iter().map(|x| x[0]).collect();
    assert!((dot(&x1, &k.mul_vec(&x1)) - 100.0).abs() < 1e-10);
}

#[test]
fn boundary_mass_examples() {
    let s = space(-5.0, 5.0, 8);
    let one = vec![1.0; s.dim()];
    let all = s.boundary_mass(BoundarySelector::All);
    assert!((dot(&one, &all.mul_vec(&one)) - 40.0).abs() < 1e-12);
    let dir = s.boundary_mass(BoundarySelector::Tag(BoundaryTag::Dirichlet));
    assert!((dot(&one, &dir.mul_vec(&one)) - 10.0).abs() < 1e-12);
    // single facet: exact 1D mass matrix
    let f = s.mesh.boundary_facets[0];
    let (a, b) = (f.vertices[0], f.vertices[1]);
    let (pa, pb) = (s.mesh.vertices[a], s.mesh.vertices[b]);
    let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
    let d = dense(&all);
    // each vertex is shared by two boundary facets, so the diagonal doubles
    assert!((d[(a, b)] - len / 6.0).abs() < 1e-14);
    let corner_free = |v: usize| {
        let x = s.mesh.vertices[v];
        !((x[0].abs() - 5.0).abs() < 1e-12 && (x[1].abs() - 5.0).abs() < 1e-12)
    };
    if corner_free(a) {
        assert!((d[(a, a)] - 2.0 * len / 3.0).abs() < 1e-14);
    }
    let none = ScalarSpace::new(mesh(0.0, 1.0, 2, false));
    let z = none.boundary_mass(BoundarySelector::Tag(BoundaryTag::Dirichlet));
    assert!(z.row_sums().iter().all(|&v| v == 0.0));
}

fn velocity(n: usize, variant: ElementVariant) -> VelocitySpace {
    VelocitySpace::new(ScalarSpace::new(mesh(0.0, 1.0, n, true)), variant)
}

fn vel_quadratic(x: [f64; 2]) -> [f64; 2] {
    [x[0] * x[0] - 0.5 * x[1], x[0] * x[1] + 2.0]
}

#[test]
fn velocity_interpolation_and_dofs() {
    let th = velocity(3, ElementVariant::TaylorHood);
    let v = th.interpolate(vel_quadratic);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let got = th.eval_at(&v, x).unwrap();
        let want = vel_quadratic(x);
        assert!((got[0] - want[0]).abs() < 1e-12 && (got[1] - want[1]).abs() < 1e-12);
    }
    let mini = velocity(3, ElementVariant::Mini);
    let lin = |x: [f64; 2]| [1.0 + x[0] - x[1], 2.0 * x[1]];
    let v = mini.interpolate(lin);
    for _ in 0..50 {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let got = mini.eval_at(&v, x).unwrap();
        assert!((got[0] - lin(x)[0]).abs() < 1e-12 && (got[1] - lin(x)[1]).abs() < 1e-12);
    }
    // Dirichlet dofs: exactly the nodes on the left side, both components
    for sp in [&th, &mini] {
        for (k, p) in sp.node_points.iter().enumerate() {
            let on_left = p[0].abs() < 1e-12;
            assert_eq!(sp.dirichlet[k], on_left, "{p:?}");
            assert_eq!(sp.dirichlet[sp.n_nodes + k], on_left);
        }
    }
}

#[test]
fn velocity_forms_are_exact_on_polynomials() {
    for variant in [ElementVariant::TaylorHood, ElementVariant::Mini] {
        let sp = velocity(4, variant);
        // v = (x^2, 0): 2 eta int |D v|^2 = 2 eta int 4 x^2 = 8 eta / 3
        let v = sp.interpolate(|x| [x[0] * x[0], 0.0]);
        let a = sp.viscous(1.5);
        if variant == ElementVariant::TaylorHood {
            let got = dot(&v, &a.mul_vec(&v));
            assert!((got - 8.0 * 1.5 / 3.0).abs() < 1e-12, "{got}");
        }
        // affine fields are represented exactly by both variants
        let v = sp.interpolate(|x| [x[1], x[0] + 1.0]);
        // D v = [[0,1],[1,0]], |D v|^2 = 2
        assert!((dot(&v, &a.mul_vec(&v)) - 2.0 * 1.5 * 2.0).abs() < 1e-12);
        let mass = sp.mass();
        // int (y^2 + (x+1)^2) = 1/3 + 7/3
        assert!((dot(&v, &mass.mul_vec(&v)) - 8.0 / 3.0).abs() < 1e-12);
        // divergence of (x, 0) against each pressure hat is its lumped weight
        let v = sp.interpolate(|x| [x[0], 0.0]);
        let div = sp.divergence().mul_vec(&v);
        for (k, w) in sp.scalar.weights.iter().enumerate() {
            assert!((div[k] - w).abs() < 1e-13);
        }
    }
}

/// Smallest generalized eigenvalue of `B A^-1 B^T q = lambda M_p q` on the
/// free velocity dofs.
fn inf_sup(n: usize, variant: ElementVariant) -> f64 {
    let sp = velocity(n, variant);
    let free: Vec<usize> = (0..sp.dim()).filter(|&i| !sp.dirichlet[i]).collect();
    let mut map = vec![None; sp.dim()];
    for (k, &i) in free.iter().enumerate() {
        map[i] = Some(k);
    }
    let np = sp.scalar.dim();
    let a = sp.viscous(0.5).submatrix(&map, &map, free.len(), free.len());
    let rows: Vec<Option<usize>> = (0..np).map(Some).collect();
    let b = sp.divergence().submatrix(&rows, &map, np, free.len());
    let chol = Cholesky::new(&a).unwrap();
    let bd = dense(&b);
    let mut s = DMatrix::zeros(np, np);
    for j in 0..np {
        let col: Vec<f64> = bd.row(j).iter().copied().collect();
        let y = nalgebra::DVector::from_vec(chol.solve(&col));
        let sj = &bd * y;
        s.set_column(j, &sj);
    }
    let mp = dense(&sp.scalar.mass());
    let l = mp.cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * s * li.transpose();
    let c = 0.5 * (&c + c.transpose());
    SymmetricEigen::new(c).eigenvalues.min()
}

#[test]
fn discrete_inf_sup_is_mesh_independent() {
    for variant in [ElementVariant::TaylorHood, ElementVariant::Mini] {
        let vals: Vec<f64> = [4, 8, 16].iter().map(|&n| inf_sup(n, variant)).collect();
        assert!(vals.iter().all(|&v| v > 1e-3), "{variant:?} {vals:?}");
        let drift = (vals[2] - vals[1]).abs() / vals[1];
        assert!(drift <= 0.1, "{variant:?} {vals:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn partition_of_unity(n in 1usize..10, lo in -4.0f64..0.0, w in 0.5f64..8.0) {
        let s = space(lo, lo + w, n);
        let one = vec![1.0; s.dim()];
        prop_assert!((s.lumped_integral(&one) - w * w).abs() < 1e-12 * w * w);
        prop_assert!((s.mass().mul_vec(&one).iter().sum::<f64>() - w * w).abs() < 1e-12 * w * w);
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for _ in 0..20 {
            let q: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = s.lumped_norm(&q) / s.l2_norm(&q);
            prop_assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&r));
        }
    }
}
