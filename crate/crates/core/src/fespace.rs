//! Finite element spaces on a [`TriMesh`]: scalar P1, symmetric-matrix P1 and
//! the velocity space (Taylor-Hood P2 or the P1-bubble mini element).

use std::sync::Arc;

use rayon::prelude::*;

use crate::affine::AffineMap;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, TriMesh};
use crate::quadrature::Rule;
use crate::sparse::{Csr, TripletBuilder};
use crate::tensor::SymMat;

/// Per-element geometry shared by all spaces on one mesh.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grads: [[f64; 2]; 3],
    pub map: AffineMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySelector {
    All,
    Tag(BoundaryTag),
}

/// Scalar continuous P1 space `S_h`.
#[derive(Clone, Debug)]
pub struct ScalarSpace {
    pub mesh: Arc<TriMesh>,
    pub geometry: Arc<Vec<ElementGeometry>>,
    /// Lumped vertex weights `sum_{K ni P} |K| / 3`.
    pub weights: Vec<f64>,
}

impl ScalarSpace {
    pub fn new(mesh: Arc<TriMesh>) -> Self {
        let geometry: Vec<ElementGeometry> = (0..mesh.num_elements())
            .map(|e| {
                let map = mesh.affine_map(e);
                let g = map.barycentric_gradients();
                ElementGeometry {
                    area: map.volume(),
                    grads: [[g[0][0], g[0][1]], [g[1][0], g[1][1]], [g[2][0], g[2][1]]],
                    map,
                }
            })
            .collect();
        let mut weights = vec![0.0; mesh.num_vertices()];
        for (t, g) in mesh.triangles.iter().zip(&geometry) {
            for &v in t {
                weights[v] += g.area / 3.0;
            }
        }
        Self { mesh, geometry: Arc::new(geometry), weights }
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// Nodal interpolation `I_h f`.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
        self.mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let v = f(p);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::invalid(format!("non-finite value {v} at vertex {i}")))
                }
            })
            .collect()
    }

    /// `<f, g>_h = sum_P w_P f(P) g(P)`
    pub fn lumped_inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        if f.len() != self.dim() || g.len() != self.dim() {
            return Err(Error::invalid("field does not belong to this space"));
        }
        Ok(self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum())
    }

    pub fn lumped_integral(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a).sum()
    }

    /// Lumped projection `Q_h f`: `w_P (Q_h f)(P) = int f eta_P`.
    pub fn lumped_project(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let rule = Rule::of_degree(5);
        let mut rhs = vec![0.0; self.dim()];
        for (e, t) in self.mesh.triangles.iter().enumerate() {
            let g = &self.geometry[e];
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                let x = self.point(e, q);
                let fx = f(x);
                for k in 0..3 {
                    rhs[t[k]] += w * g.area * fx * q[k];
                }
            }
        }
        rhs.iter().zip(&self.weights).map(|(r, w)| r / w).collect()
    }

    /// Physical point with barycentric coordinates `b` in element `e`.
    pub fn point(&self, e: usize, b: &[f64; 3]) -> [f64; 2] {
        let t = self.mesh.triangles[e];
        let v = &self.mesh.vertices;
        [
            b[0] * v[t[0]][0] + b[1] * v[t[1]][0] + b[2] * v[t[2]][0],
            b[0] * v[t[0]][1] + b[1] * v[t[1]][1] + b[2] * v[t[2]][1],
        ]
    }

    /// Constant gradient of a P1 field on element `e`.
    pub fn gradient(&self, e: usize, f: &[f64]) -> [f64; 2] {
        let t = self.mesh.triangles[e];
        let g = &self.geometry[e].grads;
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += f[t[k]] * g[k][0];
            out[1] += f[t[k]] * g[k][1];
        }
        out
    }

    fn assemble_local<F>(&self, local: F) -> Csr
    where
        F: Fn(usize, &ElementGeometry) -> [[f64; 3]; 3] + Sync,
    {
        let n = self.dim();
        let locals: Vec<[[f64; 3]; 3]> = self.geometry.par_iter().enumerate().map(|(e, g)| local(e, g)).collect();
        let mut b = TripletBuilder::with_capacity(n, n, 9 * locals.len());
        for (t, m) in self.mesh.triangles.iter().zip(&locals) {
            for a in 0..3 {
                for c in 0..3 {
                    b.push(t[a], t[c], m[a][c]);
                }
            }
        }
        b.build()
    }

    /// `int I_h[coef] grad eta_a . grad eta_b` (plain stiffness when `coef` is `None`).
    pub fn stiffness(&self, coef: Option<&[f64]>) -> Csr {
        self.assemble_local(|e, g| {
            let t = self.mesh.triangles[e];
            let c = coef.map_or(1.0, |c| (c[t[0]] + c[t[1]] + c[t[2]]) / 3.0);
            let mut m = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] = c * g.area * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
                }
            }
            m
        })
    }

    /// Consistent (non-lumped) mass matrix.
    pub fn mass(&self) -> Csr {
        self.assemble_local(|_, g| {
            let mut m = [[g.area / 12.0; 3]; 3];
            for (k, row) in m.iter_mut().enumerate() {
                row[k] = g.area / 6.0;
            }
            m
        })
    }

    pub fn lumped_mass(&self) -> Csr {
        Csr::diagonal_matrix(&self.weights)
    }

    /// Exact P1 mass matrix on the selected boundary facets.
    pub fn boundary_mass(&self, sel: BoundarySelector) -> Csr {
        let n = self.dim();
        let mut b = TripletBuilder::new(n, n);
        for f in &self.mesh.boundary_facets {
            if let BoundarySelector::Tag(tag) = sel {
                if f.tag != tag {
                    continue;
                }
            }
            let [i, j] = f.vertices;
            let (p, q) = (self.mesh.vertices[i], self.mesh.vertices[j]);
            let len = (p[0] - q[0]).hypot(p[1] - q[1]);
            b.push(i, i, len / 3.0);
            b.push(j, j, len / 3.0);
            b.push(i, j, len / 6.0);
            b.push(j, i, len / 6.0);
        }
        b.build()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        let m = self.mass();
        crate::sparse::dot(f, &m.mul_vec(f)).max(0.0).sqrt()
    }

    pub fn lumped_norm(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a * a).sum::<f64>().sqrt()
    }

    /// Full `H^1` norm with the consistent mass matrix.
    pub fn h1_norm(&self, f: &[f64]) -> f64 {
        let m = self.mass().add_scaled(1.0, &self.stiffness(None));
        crate::sparse::dot(f, &m.mul_vec(f)).max(0.0).sqrt()
    }

    /// `L^2` norm of the trace on the whole boundary.
    pub fn boundary_l2_norm(&self, f: &[f64]) -> f64 {
        let m = self.boundary_mass(BoundarySelector::All);
        crate::sparse::dot(f, &m.mul_vec(f)).max(0.0).sqrt()
    }

    /// `int I_h[f] dx` over element `e`.
    pub fn element_mean(&self, e: usize, f: &[f64]) -> f64 {
        let t = self.mesh.triangles[e];
        (f[t[0]] + f[t[1]] + f[t[2]]) / 3.0
    }
}

/// Symmetric-matrix P1 space `W_h`, one [`SymMat`] per vertex.
#[derive(Clone, Debug)]
pub struct MatrixSpace {
    pub scalar: ScalarSpace,
}

impl MatrixSpace {
    pub fn new(scalar: ScalarSpace) -> Self {
        Self { scalar }
    }

    pub fn dim(&self) -> usize {
        self.scalar.dim() * 3
    }

    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> SymMat) -> Result<Vec<SymMat>> {
        self.scalar
            .mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let b = f(p);
                if b.dim() != 2 || !b.is_finite() {
                    return Err(Error::invalid(format!("invalid matrix value at vertex {i}")));
                }
                Ok(b)
            })
            .collect()
    }

    /// `<A, B>_h = sum_P w_P A(P) : B(P)`
    pub fn lumped_inner(&self, a: &[SymMat], b: &[SymMat]) -> Result<f64> {
        if a.len() != self.scalar.dim() || b.len() != self.scalar.dim() {
            return Err(Error::invalid("field does not belong to this space"));
        }
        Ok(self.scalar.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x.ddot(y)).sum())
    }

    /// Component-wise lumped projection.
    pub fn lumped_project(&self, f: impl Fn([f64; 2]) -> SymMat) -> Vec<SymMat> {
        let comps: Vec<Vec<f64>> = (0..3).map(|k| self.scalar.lumped_project(|x| f(x).components()[k])).collect();
        (0..self.scalar.dim()).map(|i| SymMat::from_components(2, &[comps[0][i], comps[1][i], comps[2][i]])).collect()
    }

    pub fn component(field: &[SymMat], k: usize) -> Vec<f64> {
        field.iter().map(|b| b.components()[k]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementVariant {
    TaylorHood,
    Mini,
}

/// Vector velocity space. DOF `c * n_nodes + k` is component `c` of node `k`.
#[derive(Clone, Debug)]
pub struct VelocitySpace {
    pub scalar: ScalarSpace,
    pub variant: ElementVariant,
    pub n_nodes: usize,
    /// Node indices of each element: 3 vertices, then 3 edges (opposite the
    /// vertices) for Taylor-Hood or 1 bubble for mini.
    pub element_nodes: Vec<[usize; 6]>,
    pub node_points: Vec<[f64; 2]>,
    /// Per vector DOF: constrained by the Dirichlet condition.
    pub dirichlet: Vec<bool>,
    pub rule: Rule,
}

/// Values and gradients of the local velocity basis at one point.
#[derive(Clone, Copy, Debug)]
pub struct LocalBasis {
    pub n: usize,
    pub val: [f64; 6],
    pub grad: [[f64; 2]; 6],
}

impl VelocitySpace {
    pub fn new(scalar: ScalarSpace, variant: ElementVariant) -> Self {
        let mesh = scalar.mesh.clone();
        let nv = mesh.num_vertices();
        let mut node_points = mesh.vertices.clone();
        let mut element_nodes = Vec::with_capacity(mesh.num_elements());
        let dir_v = mesh.dirichlet_vertices();
        let mut dir_node: Vec<bool> = dir_v.clone();
        let rule;
        match variant {
            ElementVariant::TaylorHood => {
                let (edges, elem_edges) = mesh.edges();
                for e in &edges {
                    let (a, b) = (mesh.vertices[e[0]], mesh.vertices[e[1]]);
                    node_points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                }
                let mut dir_edge = vec![false; edges.len()];
                let mut edge_of = std::collections::HashMap::new();
                for (k, e) in edges.iter().enumerate() {
                    edge_of.insert((e[0], e[1]), k);
                }
                for f in &mesh.boundary_facets {
                    if f.tag == BoundaryTag::Dirichlet {
                        let [a, b] = f.vertices;
                        let key = if a < b { (a, b) } else { (b, a) };
                        dir_edge[edge_of[&key]] = true;
                    }
                }
                dir_node.extend(dir_edge);
                for (t, ee) in mesh.triangles.iter().zip(&elem_edges) {
                    element_nodes.push([t[0], t[1], t[2], nv + ee[0], nv + ee[1], nv + ee[2]]);
                }
                rule = Rule::of_degree(4);
            }
            ElementVariant::Mini => {
                for (e, t) in mesh.triangles.iter().enumerate() {
                    let c = scalar.point(e, &[1.0 / 3.0; 3]);
                    node_points.push(c);
                    dir_node.push(false);
                    element_nodes.push([t[0], t[1], t[2], nv + e, usize::MAX, usize::MAX]);
                }
                rule = Rule::of_degree(5);
            }
        }
        let n_nodes = node_points.len();
        let mut dirichlet = dir_node.clone();
        dirichlet.extend(dir_node);
        Self { scalar, variant, n_nodes, element_nodes, node_points, dirichlet, rule }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_nodes
    }

    pub fn local_count(&self) -> usize {
        match self.variant {
            ElementVariant::TaylorHood => 6,
            ElementVariant::Mini => 4,
        }
    }

    pub fn basis(&self, e: usize, l: &[f64; 3]) -> LocalBasis {
        let g = &self.scalar.geometry[e].grads;
        let mut val = [0.0; 6];
        let mut grad = [[0.0; 2]; 6];
        match self.variant {
            ElementVariant::TaylorHood => {
                for k in 0..3 {
                    val[k] = l[k] * (2.0 * l[k] - 1.0);
                    let c = 4.0 * l[k] - 1.0;
                    grad[k] = [c * g[k][0], c * g[k][1]];
                    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                    val[3 + k] = 4.0 * l[i] * l[j];
                    grad[3 + k] = [4.0 * (l[i] * g[j][0] + l[j] * g[i][0]), 4.0 * (l[i] * g[j][1] + l[j] * g[i][1])];
                }
                LocalBasis { n: 6, val, grad }
            }
            ElementVariant::Mini => {
                val[..3].copy_from_slice(&l[..3]);
                grad[..3].copy_from_slice(&g[..3]);
                val[3] = 27.0 * l[0] * l[1] * l[2];
                for d in 0..2 {
                    grad[3][d] = 27.0 * (l[1] * l[2] * g[0][d] + l[0] * l[2] * g[1][d] + l[0] * l[1] * g[2][d]);
                }
                LocalBasis { n: 4, val, grad }
            }
        }
    }

    /// Velocity and its gradient `G[i][j] = d_j v_i` at a point of element `e`.
    pub fn eval(&self, e: usize, l: &[f64; 3], v: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let b = self.basis(e, l);
        let nodes = &self.element_nodes[e];
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for k in 0..b.n {
            for c in 0..2 {
                let coef = v[c * self.n_nodes + nodes[k]];
                val[c] += coef * b.val[k];
                grad[c][0] += coef * b.grad[k][0];
                grad[c][1] += coef * b.grad[k][1];
            }
        }
        (val, grad)
    }

    /// Nodal interpolation. For the mini element the bubble coefficient is
    /// chosen so the interpolant matches `f` at the barycentre.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (k, p) in self.node_points.iter().enumerate() {
            let v = f(*p);
            out[k] = v[0];
            out[self.n_nodes + k] = v[1];
        }
        if self.variant == ElementVariant::Mini {
            for nodes in &self.element_nodes {
                let b = nodes[3];
                for c in 0..2 {
                    let lin: f64 = (0..3).map(|k| out[c * self.n_nodes + nodes[k]]).sum::<f64>() / 3.0;
                    out[c * self.n_nodes + b] -= lin;
                }
            }
        }
        out
    }

    fn assemble_blocks<F>(&self, nrows: usize, ncols: usize, local: F) -> Csr
    where
        F: Fn(usize) -> Vec<(usize, usize, f64)> + Sync,
    {
        let locals: Vec<Vec<(usize, usize, f64)>> = (0..self.element_nodes.len()).into_par_iter().map(&local).collect();
        let mut b = TripletBuilder::with_capacity(nrows, ncols, locals.iter().map(Vec::len).sum());
        for l in &locals {
            for &(i, j, v) in l {
                b.push(i, j, v);
            }
        }
        b.build()
    }

    /// `2 eta <D(u), D(w)>` for constant `eta`.
    pub fn viscous(&self, eta: f64) -> Csr {
        let n = self.dim();
        let nn = self.n_nodes;
        self.assemble_blocks(n, n, |e| {
            let area = self.scalar.geometry[e].area;
            let nodes = &self.element_nodes[e];
            let nl = self.local_count();
            let mut loc = [[[[0.0; 2]; 2]; 6]; 6];
            for (q, w) in self.rule.points.iter().zip(&self.rule.weights) {
                let b = self.basis(e, q);
                let s = w * area * eta;
                for a in 0..nl {
                    for c in 0..nl {
                        let dot = b.grad[a][0] * b.grad[c][0] + b.grad[a][1] * b.grad[c][1];
                        for al in 0..2 {
                            for be in 0..2 {
                                let delta = if al == be { dot } else { 0.0 };
                                loc[a][c][al][be] += s * (delta + b.grad[c][al] * b.grad[a][be]);
                            }
                        }
                    }
                }
            }
            let mut out = Vec::with_capacity(4 * nl * nl);
            for a in 0..nl {
                for c in 0..nl {
                    for al in 0..2 {
                        for be in 0..2 {
                            out.push((al * nn + nodes[a], be * nn + nodes[c], loc[a][c][al][be]));
                        }
                    }
                }
            }
            out
        })
    }

    /// `B[q, w] = <div w, eta_q>` with `eta_q` the P1 pressure basis.
    pub fn divergence(&self) -> Csr {
        let np = self.scalar.dim();
        let nn = self.n_nodes;
        self.assemble_blocks(np, self.dim(), |e| {
            let area = self.scalar.geometry[e].area;
            let nodes = &self.element_nodes[e];
            let t = self.scalar.mesh.triangles[e];
            let nl = self.local_count();
            let mut loc = [[[0.0; 2]; 6]; 3];
            for (q, w) in self.rule.points.iter().zip(&self.rule.weights) {
                let b = self.basis(e, q);
                for p in 0..3 {
                    for a in 0..nl {
                        for c in 0..2 {
                            loc[p][a][c] += w * area * q[p] * b.grad[a][c];
                        }
                    }
                }
            }
            let mut out = Vec::with_capacity(3 * nl * 2);
            for p in 0..3 {
                for a in 0..nl {
                    for c in 0..2 {
                        out.push((t[p], c * nn + nodes[a], loc[p][a][c]));
                    }
                }
            }
            out
        })
    }

    /// Consistent velocity mass matrix (both components).
    pub fn mass(&self) -> Csr {
        let n = self.dim();
        let nn = self.n_nodes;
        self.assemble_blocks(n, n, |e| {
            let area = self.scalar.geometry[e].area;
            let nodes = &self.element_nodes[e];
            let nl = self.local_count();
            let mut loc = [[0.0; 6]; 6];
            for (q, w) in self.rule.points.iter().zip(&self.rule.weights) {
                let b = self.basis(e, q);
                for a in 0..nl {
                    for c in 0..nl {
                        loc[a][c] += w * area * b.val[a] * b.val[c];
                    }
                }
            }
            let mut out = Vec::new();
            for a in 0..nl {
                for c in 0..nl {
                    for comp in 0..2 {
                        out.push((comp * nn + nodes[a], comp * nn + nodes[c], loc[a][c]));
                    }
                }
            }
            out
        })
    }

    /// Evaluate a velocity field at an arbitrary point.
    pub fn eval_at(&self, v: &[f64], x: [f64; 2]) -> Option<[f64; 2]> {
        let e = self.scalar.mesh.locate_element(x)?;
        let l = self.scalar.mesh.barycentric(e, x);
        Some(self.eval(e, &l, v).0)
    }

    pub fn max_magnitude(&self, v: &[f64]) -> f64 {
        (0..self.n_nodes).map(|k| v[k].hypot(v[self.n_nodes + k])).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoxDomain, DirichletSegment, Side};

    fn space(n: usize) -> ScalarSpace {
        let d = BoxDomain::new([-5.0, -5.0], [5.0, 5.0]).unwrap();
        let m = TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Left, &d)]).unwrap();
        ScalarSpace::new(Arc::new(m))
    }

    #[test]
    fn weights_and_stiffness() {
        let s = space(4);
        assert!((s.weights.iter().sum::<f64>() - 100.0).abs() < 1e-12);
        let k = s.stiffness(None);
        for r in k.row_sums() {
            assert!(r.abs() < 1e-12);
        }
        let x = s.interpolate(|p| p[0]).unwrap();
        let e = crate::sparse::dot(&x, &k.mul_vec(&x));
        assert!((e - 100.0).abs() < 1e-10);
        let bm = s.boundary_mass(BoundarySelector::All);
        let ones = vec![1.0; s.dim()];
        assert!((crate::sparse::dot(&ones, &bm.mul_vec(&ones)) - 40.0).abs() < 1e-12);
        let bd = s.boundary_mass(BoundarySelector::Tag(BoundaryTag::Dirichlet));
        assert!((crate::sparse::dot(&ones, &bd.mul_vec(&ones)) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_divergence_of_linear_field() {
        for variant in [ElementVariant::TaylorHood, ElementVariant::Mini] {
            let s = space(3);
            let v = VelocitySpace::new(s.clone(), variant);
            let u = v.interpolate(|x| [x[0], 2.0 * x[1]]);
            let b = v.divergence();
            let div = b.mul_vec(&u);
            // <div u, eta_q> = 3 w_q
            for (q, d) in div.iter().enumerate() {
                assert!((d - 3.0 * s.weights[q]).abs() < 1e-10, "{variant:?}");
            }
        }
    }
}
