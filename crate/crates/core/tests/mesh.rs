use std::collections::HashMap;

use proptest::prelude::*;

use vefem::affine::AffineMap;
use vefem::mesh::{BoundaryTag, BoxDomain, DirichletSegment, PhiSource, Side, TriMesh};
use vefem::model::tumour_profile;
use vefem::presets::H_FINE_PAPER;

fn square(n: usize) -> TriMesh {
    let d = BoxDomain::new([-5.0, -5.0], [5.0, 5.0]).unwrap();
    TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Left, &d)]).unwrap()
}

fn angles(p: [[f64; 2]; 3]) -> [f64; 3] {
    let ang = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        ((u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]))).clamp(-1.0, 1.0).acos()
    };
    [ang(p[0], p[1], p[2]), ang(p[1], p[2], p[0]), ang(p[2], p[0], p[1])]
}

/// Structural invariants every produced mesh must satisfy.
fn check_mesh(m: &TriMesh) {
    let d = &m.domain;
    let scale = (d.max[0] - d.min[0]).max(d.max[1] - d.min[1]);
    let tol = 1e-12 * scale;
    // orientation, angles, diameters
    for (e, t) in m.triangles.iter().enumerate() {
        let p = t.map(|v| m.vertices[v]);
        assert!(m.area(e) > 0.0, "element {e} not positively oriented");
        for a in angles(p) {
            assert!(a <= std::f64::consts::FRAC_PI_2 + 1e-12, "obtuse angle {a} in element {e}");
            let deg = a.to_degrees();
            let cell = [(d.max[0] - d.min[0]) / m.n_coarse as f64, (d.max[1] - d.min[1]) / m.n_coarse as f64];
            if (cell[0] - cell[1]).abs() <= 1e-12 * cell[0] {
                assert!((deg - 45.0).abs() < 1e-9 || (deg - 90.0).abs() < 1e-9, "angle {deg}");
            }
        }
        let diam = (0..3)
            .map(|k| {
                let (a, b) = (p[k], p[(k + 1) % 3]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max);
        assert!((m.element_diameters[e] - diam).abs() <= 1e-12 * diam);
        // P1 gradient products between distinct hats are non-positive
        let map = m.affine_map(e);
        let g = map.barycentric_gradients();
        let gs = g[0][0].hypot(g[0][1]).max(g[1][0].hypot(g[1][1]));
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(g[i][0] * g[j][0] + g[i][1] * g[j][1] <= 1e-14 * gs * gs);
                }
            }
        }
    }
    // conformity: interior edges have two neighbours, single-neighbour edges
    // lie on the box boundary and coincide with the boundary facets
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &m.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let on_box = |x: [f64; 2]| {
        (x[0] - d.min[0]).abs() <= tol
            || (x[0] - d.max[0]).abs() <= tol
            || (x[1] - d.min[1]).abs() <= tol
            || (x[1] - d.max[1]).abs() <= tol
    };
    let mut boundary = Vec::new();
    for (&(a, b), &c) in &count {
        assert!(c == 1 || c == 2, "edge shared by {c} elements");
        if c == 1 {
            let (pa, pb) = (m.vertices[a], m.vertices[b]);
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            assert!(on_box(pa) && on_box(pb) && on_box(mid), "hanging or interior boundary edge");
            boundary.push((a, b));
        }
    }
    let mut facets: Vec<(usize, usize)> = m
        .boundary_facets
        .iter()
        .map(|f| (f.vertices[0].min(f.vertices[1]), f.vertices[0].max(f.vertices[1])))
        .collect();
    boundary.sort_unstable();
    facets.sort_unstable();
    assert_eq!(boundary, facets);
    // Euler characteristic of a disc
    let euler = m.num_vertices() as i64 - count.len() as i64 + m.num_elements() as i64;
    assert_eq!(euler, 1);
    let area = (d.max[0] - d.min[0]) * (d.max[1] - d.min[1]);
    assert!((m.total_area() - area).abs() <= 1e-12 * area);
}

fn facet_length(m: &TriMesh, tag: BoundaryTag) -> f64 {
    m.boundary_facets
        .iter()
        .filter(|f| f.tag == tag)
        .map(|f| {
            let (a, b) = (m.vertices[f.vertices[0]], m.vertices[f.vertices[1]]);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .sum()
}

#[test]
fn unit_square_one_cell() {
    let d = BoxDomain::new([0.0, 0.0], [1.0, 1.0]).unwrap();
    let m = TriMesh::build_structured(d, 1, &[]).unwrap();
    assert_eq!(m.num_vertices(), 4);
    assert_eq!(m.num_elements(), 2);
    check_mesh(&m);
    assert_eq!(facet_length(&m, BoundaryTag::Dirichlet), 0.0);
}

#[test]
fn coarse_preset_mesh() {
    let m = square(32);
    assert_eq!(m.num_elements(), 2 * 32 * 32);
    assert_eq!(m.num_vertices(), 33 * 33);
    let h = std::f64::consts::SQRT_2 * 10.0 / 32.0;
    assert!((h - 0.4419).abs() < 1e-4);
    for &hk in &m.element_diameters {
        assert!((hk - h).abs() < 1e-12);
    }
    check_mesh(&m);
    assert!((facet_length(&m, BoundaryTag::Dirichlet) - 10.0).abs() < 1e-12);
    assert!((facet_length(&m, BoundaryTag::Neumann) - 30.0).abs() < 1e-12);
}

#[test]
fn rejects_bad_input() {
    assert!(BoxDomain::new([0.0, 0.0], [0.0, 1.0]).is_err());
    assert!(BoxDomain::new([0.0, 0.0], [f64::NAN, 1.0]).is_err());
    let d = BoxDomain::new([0.0, 0.0], [1.0, 1.0]).unwrap();
    assert!(TriMesh::build_structured(d, 0, &[]).is_err());
    // a segment ending between two grid points is not a union of facets
    let seg = DirichletSegment { side: Side::Bottom, from: 0.0, to: 0.3 };
    assert!(TriMesh::build_structured(d, 2, &[seg]).is_err());
    let seg = DirichletSegment { side: Side::Bottom, from: 0.0, to: 0.5 };
    let m = TriMesh::build_structured(d, 2, &[seg]).unwrap();
    assert!((facet_length(&m, BoundaryTag::Dirichlet) - 0.5).abs() < 1e-14);
}

#[test]
fn affine_map_examples() {
    let id = AffineMap::from_vertices(2, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
    let x = id.apply(&[0.3, 0.2, 0.0]);
    assert!((x[0] - 0.3).abs() < 1e-15 && (x[1] - 0.2).abs() < 1e-15);
    let m = AffineMap::from_vertices(2, &[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
    // det A = d! |K| = 2 * 2
    assert!((m.volume() - 2.0).abs() < 1e-14);
    let y = m.apply(&[1.0, 1.0, 0.0]);
    assert!((y[0] - 2.0).abs() < 1e-15 && (y[1] - 2.0).abs() < 1e-15);
    let back = m.apply_inverse(&y);
    assert!((back[0] - 1.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
}

#[test]
fn shape_constant_of_structured_family() {
    let m = square(8).refine_uniform(5).unwrap();
    let worst = (0..m.num_elements()).map(|e| m.affine_map(e).condition()).fold(0.0, f64::max);
    assert!(worst <= 3.0, "{worst}");
}

#[test]
fn constant_phi_leaves_mesh_unchanged() {
    let m = square(8);
    let phi = vec![0.3; m.num_vertices()];
    let r = m.refine_near_interface(PhiSource::Field(&phi), 0.1, 1.0).unwrap();
    assert_eq!(r.vertices, m.vertices);
    assert_eq!(r.triangles, m.triangles);
    let f = |_: [f64; 2]| -1.0;
    let r = m.refine_near_interface(PhiSource::Function(&f), 0.1, 1.0).unwrap();
    assert_eq!(r.triangles, m.triangles);
}

#[test]
fn interface_band_is_resolved_at_paper_resolution() {
    let eps = 0.02;
    let phi = tumour_profile(eps);
    let threshold = 0.02 / (std::f64::consts::SQRT_2 * eps);
    let coarse = square(32);
    let m = coarse.refine_near_interface(PhiSource::Function(&*phi), H_FINE_PAPER, threshold).unwrap();
    check_mesh(&m);
    let mut in_band = 0;
    for (e, t) in m.triangles.iter().enumerate() {
        let p = t.map(|v| m.vertices[v]);
        let samples = (0..=4).flat_map(|i| (0..=4 - i).map(move |j| (i, j))).map(|(i, j)| {
            let (a, b) = (i as f64 / 4.0, j as f64 / 4.0);
            let c = 1.0 - a - b;
            [a * p[0][0] + b * p[1][0] + c * p[2][0], a * p[0][1] + b * p[1][1] + c * p[2][1]]
        });
        let touches = samples.into_iter().any(|x| phi(x).abs() < 0.99);
        if touches {
            in_band += 1;
            assert!(m.element_diameters[e] <= H_FINE_PAPER * (1.0 + 1e-9), "h_K = {}", m.element_diameters[e]);
        }
    }
    assert!(in_band > 1000);
    assert!(m.h_max() > 0.44 && m.h_min() <= H_FINE_PAPER);
    let again = coarse.refine_near_interface(PhiSource::Function(&*phi), H_FINE_PAPER, threshold).unwrap();
    assert_eq!(again.vertices, m.vertices);
    assert_eq!(again.triangles, m.triangles);
}

#[test]
fn field_driven_refinement_regenerates_from_coarse_grid() {
    let eps = 0.1;
    let phi0 = tumour_profile(eps);
    let threshold = 0.02 / (std::f64::consts::SQRT_2 * eps);
    let coarse = square(8);
    let m1 = coarse.refine_near_interface(PhiSource::Function(&*phi0), 0.3, threshold).unwrap();
    // shifting the tumour moves the band: elements around the old interface
    // return to the coarse size
    let shifted: Vec<f64> = m1.vertices.iter().map(|&x| phi0([x[0] - 2.0, x[1]])).collect();
    let m2 = m1.refine_near_interface(PhiSource::Field(&shifted), 0.3, threshold).unwrap();
    check_mesh(&m2);
    let e = m2.locate_element([-1.1, 0.0]).unwrap();
    assert!(m2.element_diameters[e] > 1.0);
    let e = m2.locate_element([0.9, 0.0]).unwrap();
    assert!(m2.element_diameters[e] <= 0.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn structured_and_refined_meshes_are_valid(
        x0 in -3.0f64..3.0, y0 in -3.0f64..3.0, w in 0.5f64..6.0, hgt in 0.5f64..6.0,
        n in 1usize..7, gens in 0u32..4,
    ) {
        let d = BoxDomain::new([x0, y0], [x0 + w, y0 + hgt]).unwrap();
        let m = TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Top, &d)]).unwrap();
        check_mesh(&m);
        let square_cells = (w - hgt).abs() <= 1e-12 * w;
        match m.refine_uniform(gens) {
            Ok(r) => {
                prop_assert!(square_cells || gens == 0);
                check_mesh(&r);
                prop_assert!((facet_length(&r, BoundaryTag::Dirichlet) - w).abs() < 1e-10);
                prop_assert!((facet_length(&r, BoundaryTag::Neumann) - (w + 2.0 * hgt)).abs() < 1e-10);
            }
            Err(_) => prop_assert!(!square_cells && gens > 0),
        }
    }

    #[test]
    fn square_cells_refine_to_valid_meshes(x0 in -3.0f64..3.0, y0 in -3.0f64..3.0, w in 0.5f64..6.0, n in 1usize..7, gens in 0u32..5) {
        let d = BoxDomain::new([x0, y0], [x0 + w, y0 + w]).unwrap();
        let m = TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Left, &d)]).unwrap();
        let r = m.refine_uniform(gens).unwrap();
        check_mesh(&r);
        prop_assert_eq!(r.num_elements(), m.num_elements() << gens);
    }
}
