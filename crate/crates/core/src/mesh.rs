//! Structured right-triangle meshes of rectangles with newest-vertex
//! bisection refinement.
//!
//! Every triangle is a right isoceles triangle stored as `(v0, v1, v2)`,
//! counter-clockwise, with the right angle at `v0` and the hypotenuse `v1 v2`
//! as refinement edge. Bisection at the hypotenuse midpoint `m` produces
//! `(m, v0, v1)` and `(m, v2, v0)`, again right isoceles, so all angles stay
//! in `{45, 90}` degrees. Conformity is restored by recursively bisecting the
//! neighbour across the refinement edge.
//!
//! A mesh keeps its bisection forest (rooted in the coarse grid), which gives
//! cheap point location and lets a new mesh match its elements with those of
//! an older mesh built from the same coarse grid.

use std::collections::HashMap;

use crate::affine::AffineMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxDomain {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoxDomain {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let ok = (0..2).all(|k| min[k].is_finite() && max[k].is_finite() && max[k] > min[k]);
        if !ok {
            return Err(Error::invalid(format!("degenerate box {min:?} .. {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.max[0] - self.min[0]) + (self.max[1] - self.min[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Part of one side of the box, given by the coordinate range along it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletSegment {
    pub side: Side,
    pub from: f64,
    pub to: f64,
}

impl DirichletSegment {
    pub fn whole(side: Side, domain: &BoxDomain) -> Self {
        let (from, to) = match side {
            Side::Left | Side::Right => (domain.min[1], domain.max[1]),
            Side::Bottom | Side::Top => (domain.min[0], domain.max[0]),
        };
        Self { side, from, to }
    }

    fn contains(&self, domain: &BoxDomain, a: [f64; 2], b: [f64; 2]) -> bool {
        let tol = 1e-12 * (domain.max[0] - domain.min[0]).max(domain.max[1] - domain.min[1]);
        let (fixed_axis, value) = match self.side {
            Side::Left => (0, domain.min[0]),
            Side::Right => (0, domain.max[0]),
            Side::Bottom => (1, domain.min[1]),
            Side::Top => (1, domain.max[1]),
        };
        let run = 1 - fixed_axis;
        let on_side = (a[fixed_axis] - value).abs() <= tol && (b[fixed_axis] - value).abs() <= tol;
        let (lo, hi) = (a[run].min(b[run]), a[run].max(b[run]));
        on_side && lo >= self.from - tol && hi <= self.to + tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// `(root, depth, path bits)`: identity of a bisection-tree node that is
/// stable across meshes built from the same coarse grid.
type NodeKey = (u32, u16, u64);

const NONE: u32 = u32::MAX;
const MAX_DEPTH: u16 = 60;

#[derive(Clone, Debug)]
struct Node {
    v: [u32; 3],
    children: Option<[u32; 2]>,
    key: NodeKey,
}

#[derive(Clone, Debug)]
pub struct TriMesh {
    pub domain: BoxDomain,
    pub n_coarse: usize,
    pub dirichlet: Vec<DirichletSegment>,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_facets: Vec<BoundaryFacet>,
    pub element_diameters: Vec<f64>,
    pub levels: Vec<u32>,
    nodes: Vec<Node>,
    leaf_node: Vec<u32>,
    node_leaf: Vec<u32>,
    key_index: HashMap<NodeKey, u32>,
}

/// Where a point of one mesh sits in another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location {
    Vertex(usize),
    Element { element: usize, bary: [f64; 3] },
}

/// Source of the interface indicator for [`TriMesh::refine_near_interface`].
pub enum PhiSource<'a> {
    /// Nodal values on the mesh the method is called on.
    Field(&'a [f64]),
    /// A pointwise function, sampled on a sub-lattice of each element.
    Function(&'a dyn Fn([f64; 2]) -> f64),
}

struct Forest {
    vertices: Vec<[f64; 2]>,
    nodes: Vec<Node>,
    roots: Vec<u32>,
    edges: HashMap<(u32, u32), [u32; 2]>,
    mids: HashMap<(u32, u32), u32>,
}

fn ekey(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Forest {
    fn coarse(domain: &BoxDomain, n: usize) -> Self {
        let hx = (domain.max[0] - domain.min[0]) / n as f64;
        let hy = (domain.max[1] - domain.min[1]) / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // exact end points so boundary tests are robust
                let x = if i == n { domain.max[0] } else { domain.min[0] + i as f64 * hx };
                let y = if j == n { domain.max[1] } else { domain.min[1] + j as f64 * hy };
                vertices.push([x, y]);
            }
        }
        let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut f =
            Forest { vertices, nodes: Vec::new(), roots: Vec::new(), edges: HashMap::new(), mids: HashMap::new() };
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                for v in [[b, c, a], [d, a, c]] {
                    let id = f.nodes.len() as u32;
                    f.nodes.push(Node { v, children: None, key: (id, 0, 0) });
                    f.roots.push(id);
                    f.attach(id);
                }
            }
        }
        f
    }

    fn tri_edges(v: [u32; 3]) -> [(u32, u32); 3] {
        [ekey(v[0], v[1]), ekey(v[1], v[2]), ekey(v[2], v[0])]
    }

    fn attach(&mut self, t: u32) {
        for e in Self::tri_edges(self.nodes[t as usize].v) {
            let slot = self.edges.entry(e).or_insert([NONE, NONE]);
            if slot[0] == NONE {
                slot[0] = t;
            } else {
                slot[1] = t;
            }
        }
    }

    fn detach(&mut self, t: u32) {
        for e in Self::tri_edges(self.nodes[t as usize].v) {
            if let Some(slot) = self.edges.get_mut(&e) {
                if slot[0] == t {
                    slot[0] = slot[1];
                    slot[1] = NONE;
                } else if slot[1] == t {
                    slot[1] = NONE;
                }
                if slot[0] == NONE {
                    self.edges.remove(&e);
                }
            }
        }
    }

    fn neighbour(&self, t: u32, e: (u32, u32)) -> Option<u32> {
        let slot = self.edges.get(&e)?;
        let other = if slot[0] == t { slot[1] } else { slot[0] };
        (other != NONE).then_some(other)
    }

    fn hyp(&self, t: u32) -> (u32, u32) {
        let v = self.nodes[t as usize].v;
        ekey(v[1], v[2])
    }

    fn diameter(&self, t: u32) -> f64 {
        let v = self.nodes[t as usize].v;
        let (a, b) = (self.vertices[v[1] as usize], self.vertices[v[2] as usize]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    fn split(&mut self, t: u32, m: u32) -> Result<()> {
        let Node { v, key, .. } = self.nodes[t as usize].clone();
        if key.1 >= MAX_DEPTH {
            return Err(Error::Mesh("bisection depth limit reached".into()));
        }
        let p = v.map(|k| self.vertices[k as usize]);
        let leg = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
        let (l1, l2) = (leg(p[0], p[1]), leg(p[0], p[2]));
        if (l1 - l2).abs() > 1e-9 * l1.max(l2) {
            return Err(Error::Mesh(format!(
                "bisecting a right triangle with legs {l1} and {l2} would create an obtuse angle; use square cells"
            )));
        }
        self.detach(t);
        let ca = self.nodes.len() as u32;
        let cb = ca + 1;
        let (root, depth, path) = key;
        self.nodes.push(Node { v: [m, v[0], v[1]], children: None, key: (root, depth + 1, path) });
        self.nodes.push(Node { v: [m, v[2], v[0]], children: None, key: (root, depth + 1, path | (1u64 << depth)) });
        self.nodes[t as usize].children = Some([ca, cb]);
        self.attach(ca);
        self.attach(cb);
        Ok(())
    }

    fn midpoint(&mut self, e: (u32, u32)) -> u32 {
        if let Some(&m) = self.mids.get(&e) {
            return m;
        }
        let (a, b) = (self.vertices[e.0 as usize], self.vertices[e.1 as usize]);
        let id = self.vertices.len() as u32;
        self.vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        self.mids.insert(e, id);
        id
    }

    /// Bisect leaf `t`, first making its refinement edge compatible.
    fn bisect(&mut self, t: u32) -> Result<()> {
        if self.nodes[t as usize].children.is_some() {
            return Ok(());
        }
        let e = self.hyp(t);
        let mut guard = 0;
        loop {
            match self.neighbour(t, e) {
                Some(nb) if self.hyp(nb) != e => {
                    self.bisect(nb)?;
                    guard += 1;
                    if guard > 4 {
                        return Err(Error::Mesh("refinement closure failed to converge".into()));
                    }
                }
                other => {
                    let m = self.midpoint(e);
                    self.split(t, m)?;
                    if let Some(nb) = other {
                        self.split(nb, m)?;
                    }
                    return Ok(());
                }
            }
        }
    }

    fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for &r in &self.roots {
            stack.push(r);
            while let Some(t) = stack.pop() {
                match self.nodes[t as usize].children {
                    Some([a, b]) => {
                        stack.push(b);
                        stack.push(a);
                    }
                    None => out.push(t),
                }
            }
        }
        out
    }

    /// Repeatedly bisect the leaves selected by `mark` that are still coarser
    /// than `target_h`.
    fn refine_until(&mut self, target_h: f64, mut mark: impl FnMut(&Forest, u32) -> bool) -> Result<()> {
        let limit = target_h * (1.0 + 1e-9);
        // a node's mark depends only on its geometry, so rejections are final
        let mut rejected = std::collections::HashSet::new();
        for _ in 0..MAX_DEPTH {
            let mut marked = Vec::new();
            for t in self.leaves() {
                if self.diameter(t) > limit && !rejected.contains(&t) {
                    if mark(self, t) {
                        marked.push(t);
                    } else {
                        rejected.insert(t);
                    }
                }
            }
            if marked.is_empty() {
                return Ok(());
            }
            for t in marked {
                self.bisect(t)?;
            }
        }
        Err(Error::Mesh("refinement did not terminate".into()))
    }

    fn into_mesh(self, domain: BoxDomain, n_coarse: usize, dirichlet: Vec<DirichletSegment>) -> TriMesh {
        let leaves = self.leaves();
        let mut node_leaf = vec![NONE; self.nodes.len()];
        let mut triangles = Vec::with_capacity(leaves.len());
        let mut diam = Vec::with_capacity(leaves.len());
        let mut levels = Vec::with_capacity(leaves.len());
        for (k, &t) in leaves.iter().enumerate() {
            node_leaf[t as usize] = k as u32;
            let n = &self.nodes[t as usize];
            triangles.push([n.v[0] as usize, n.v[1] as usize, n.v[2] as usize]);
            diam.push(self.diameter(t));
            levels.push(n.key.1 as u32);
        }
        let mut boundary_facets = Vec::new();
        for &t in &leaves {
            let v = self.nodes[t as usize].v;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                if self.neighbour(t, ekey(a, b)).is_none() {
                    let (pa, pb) = (self.vertices[a as usize], self.vertices[b as usize]);
                    let tag = if dirichlet.iter().any(|s| s.contains(&domain, pa, pb)) {
                        BoundaryTag::Dirichlet
                    } else {
                        BoundaryTag::Neumann
                    };
                    boundary_facets.push(BoundaryFacet { vertices: [a as usize, b as usize], tag });
                }
            }
        }
        let key_index = self.nodes.iter().enumerate().map(|(i, n)| (n.key, i as u32)).collect();
        TriMesh {
            domain,
            n_coarse,
            dirichlet,
            vertices: self.vertices,
            triangles,
            boundary_facets,
            element_diameters: diam,
            levels,
            nodes: self.nodes,
            leaf_node: leaves,
            node_leaf,
            key_index,
        }
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

impl TriMesh {
    /// Criss-cross-free structured mesh: each of the `n x n` cells is split
    /// along its `(+1, +1)` diagonal.
    pub fn build_structured(domain: BoxDomain, n: usize, dirichlet: &[DirichletSegment]) -> Result<Self> {
        let domain = BoxDomain::new(domain.min, domain.max)?;
        if n == 0 {
            return Err(Error::invalid("n_per_axis must be at least 1"));
        }
        let h = [(domain.max[0] - domain.min[0]) / n as f64, (domain.max[1] - domain.min[1]) / n as f64];
        for s in dirichlet {
            let (axis, lo, hi) = match s.side {
                Side::Left | Side::Right => (1, domain.min[1], domain.max[1]),
                Side::Bottom | Side::Top => (0, domain.min[0], domain.max[0]),
            };
            let on_grid = |x: f64| {
                let r = (x - domain.min[axis]) / h[axis];
                (r - r.round()).abs() <= 1e-9
            };
            if !(s.from < s.to && s.from >= lo - 1e-12 && s.to <= hi + 1e-12 && on_grid(s.from) && on_grid(s.to)) {
                return Err(Error::invalid(format!(
                    "Dirichlet segment {s:?} is not a union of mesh facets for n = {n}"
                )));
            }
        }
        Ok(Forest::coarse(&domain, n).into_mesh(domain, n, dirichlet.to_vec()))
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_vertices(&self, e: usize) -> [[f64; 3]; 3] {
        let t = self.triangles[e];
        t.map(|v| [self.vertices[v][0], self.vertices[v][1], 0.0])
    }

    pub fn affine_map(&self, e: usize) -> AffineMap {
        AffineMap::from_vertices(2, &self.element_vertices(e)).expect("mesh elements are non-degenerate")
    }

    pub fn area(&self, e: usize) -> f64 {
        let t = self.triangles[e];
        0.5 * orient(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.area(e)).sum()
    }

    pub fn h_min(&self) -> f64 {
        self.element_diameters.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.element_diameters.iter().copied().fold(0.0, f64::max)
    }

    /// Largest interior angle over all elements, in radians.
    pub fn max_angle(&self) -> f64 {
        let mut worst = 0.0f64;
        for t in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[t[k]];
                let a = self.vertices[t[(k + 1) % 3]];
                let b = self.vertices[t[(k + 2) % 3]];
                let u = [a[0] - p[0], a[1] - p[1]];
                let v = [b[0] - p[0], b[1] - p[1]];
                let c = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.max(c.clamp(-1.0, 1.0).acos());
            }
        }
        worst
    }

    /// Element containing `x` (the first found when `x` lies on an edge).
    pub fn locate_element(&self, x: [f64; 2]) -> Option<usize> {
        let d = &self.domain;
        let tol = 1e-12 * (d.max[0] - d.min[0]);
        if x[0] < d.min[0] - tol || x[0] > d.max[0] + tol || x[1] < d.min[1] - tol || x[1] > d.max[1] + tol {
            return None;
        }
        let n = self.n_coarse;
        let hx = (d.max[0] - d.min[0]) / n as f64;
        let hy = (d.max[1] - d.min[1]) / n as f64;
        let i = (((x[0] - d.min[0]) / hx).floor().max(0.0) as usize).min(n - 1);
        let j = (((x[1] - d.min[1]) / hy).floor().max(0.0) as usize).min(n - 1);
        let u = (x[0] - d.min[0]) / hx - i as f64;
        let v = (x[1] - d.min[1]) / hy - j as f64;
        let mut t = 2 * (j * n + i) as u32 + if u >= v { 0 } else { 1 };
        while let Some([a, b]) = self.nodes[t as usize].children {
            let na = &self.nodes[a as usize];
            let m = self.vertices[na.v[0] as usize];
            let v0 = self.vertices[na.v[1] as usize];
            t = if orient(m, v0, x) >= 0.0 { a } else { b };
        }
        Some(self.node_leaf[t as usize] as usize)
    }

    /// Barycentric coordinates of `x` in element `e`.
    pub fn barycentric(&self, e: usize, x: [f64; 2]) -> [f64; 3] {
        let m = self.affine_map(e);
        let xh = m.apply_inverse(&[x[0], x[1], 0.0]);
        [1.0 - xh[0] - xh[1], xh[0], xh[1]]
    }

    /// Interpolate nodal values at an arbitrary point of the domain.
    pub fn eval_p1(&self, values: &[f64], x: [f64; 2]) -> Option<f64> {
        let e = self.locate_element(x)?;
        let b = self.barycentric(e, x);
        let t = self.triangles[e];
        Some(b[0] * values[t[0]] + b[1] * values[t[1]] + b[2] * values[t[2]])
    }

    /// Locate every vertex of `self` in `old`; shared vertices are matched
    /// exactly by coordinates.
    pub fn locate_vertices_in(&self, old: &TriMesh) -> Vec<Location> {
        let mut by_coord: HashMap<(u64, u64), usize> = HashMap::with_capacity(old.num_vertices());
        for (i, p) in old.vertices.iter().enumerate() {
            by_coord.insert((p[0].to_bits(), p[1].to_bits()), i);
        }
        self.vertices
            .iter()
            .map(|p| match by_coord.get(&(p[0].to_bits(), p[1].to_bits())) {
                Some(&i) => Location::Vertex(i),
                None => {
                    let e = old.locate_element(*p).expect("point inside the domain");
                    Location::Element { element: e, bary: old.barycentric(e, *p) }
                }
            })
            .collect()
    }

    /// Build a new mesh from the coarse grid of `self`, bisecting elements
    /// whose interface indicator exceeds `threshold` until their diameter is
    /// at most `target_h`. Elements away from the interface return to the
    /// coarse grid.
    pub fn refine_near_interface(&self, phi: PhiSource<'_>, target_h: f64, threshold: f64) -> Result<TriMesh> {
        if !(target_h > 0.0) {
            return Err(Error::invalid("target_h must be positive"));
        }
        let mut forest = Forest::coarse(&self.domain, self.n_coarse);
        match phi {
            PhiSource::Field(values) => {
                if values.len() != self.num_vertices() {
                    return Err(Error::invalid("phi field does not live on this mesh"));
                }
                let subtree = self.subtree_gradient_max(values);
                forest.refine_until(target_h, |f, t| {
                    self.indicator_for_key(&subtree, f.nodes[t as usize].key) > threshold
                })?;
            }
            PhiSource::Function(func) => {
                forest.refine_until(target_h, |f, t| {
                    let v = f.nodes[t as usize].v.map(|k| f.vertices[k as usize]);
                    let s = (4.0 * (f.diameter(t) / target_h).ceil()).clamp(4.0, 64.0) as usize;
                    lattice_gradient_max(&v, s, func) > threshold
                })?;
            }
        }
        Ok(forest.into_mesh(self.domain, self.n_coarse, self.dirichlet.clone()))
    }

    /// Bisect every element `generations` times (with closure).
    pub fn refine_uniform(&self, generations: u32) -> Result<TriMesh> {
        let mut forest = Forest::coarse(&self.domain, self.n_coarse);
        // replay the current tree first
        forest.refine_until(0.0, |f, t| {
            let key = f.nodes[t as usize].key;
            self.key_index.get(&key).is_some_and(|&n| self.nodes[n as usize].children.is_some())
        })?;
        for _ in 0..generations {
            for t in forest.leaves() {
                forest.bisect(t)?;
            }
        }
        Ok(forest.into_mesh(self.domain, self.n_coarse, self.dirichlet.clone()))
    }

    fn subtree_gradient_max(&self, values: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0f64; self.nodes.len()];
        for (e, &node) in self.leaf_node.iter().enumerate() {
            let t = self.triangles[e];
            let m = self.affine_map(e);
            let grad = m.gradient(&[values[t[0]], values[t[1]], values[t[2]]]);
            g[node as usize] = grad[0].hypot(grad[1]);
        }
        // children always come after their parents
        for i in (0..self.nodes.len()).rev() {
            if let Some([a, b]) = self.nodes[i].children {
                g[i] = g[a as usize].max(g[b as usize]);
            }
        }
        g
    }

    fn indicator_for_key(&self, subtree: &[f64], key: NodeKey) -> f64 {
        let (root, depth, path) = key;
        for d in (0..=depth).rev() {
            let mask = if d == 0 { 0 } else { u64::MAX >> (64 - d as u32) };
            if let Some(&n) = self.key_index.get(&(root, d, path & mask)) {
                return subtree[n as usize];
            }
        }
        0.0
    }

    /// Pairs of vertices forming the element edges, each listed once, in
    /// order of first appearance.
    pub fn edges(&self) -> (Vec<[usize; 2]>, Vec<[usize; 3]>) {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut elem_edges = Vec::with_capacity(self.num_elements());
        for t in &self.triangles {
            let mut ee = [0usize; 3];
            // local edge k is opposite local vertex k
            for (k, slot) in ee.iter_mut().enumerate() {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                *slot = *index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
            }
            elem_edges.push(ee);
        }
        (edges, elem_edges)
    }

    /// Vertices lying on a Dirichlet facet.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        let mut mark = vec![false; self.num_vertices()];
        for f in &self.boundary_facets {
            if f.tag == BoundaryTag::Dirichlet {
                mark[f.vertices[0]] = true;
                mark[f.vertices[1]] = true;
            }
        }
        mark
    }
}

/// Maximum gradient magnitude of the piecewise linear interpolant of `f`
/// on an `s`-fold regular subdivision of the triangle `v`.
fn lattice_gradient_max(v: &[[f64; 2]; 3], s: usize, f: &dyn Fn([f64; 2]) -> f64) -> f64 {
    // central differences at the lattice points; secants between lattice
    // points underestimate steep exponential tails
    let spacing =
        (0..3).map(|k| (v[k][0] - v[(k + 1) % 3][0]).hypot(v[k][1] - v[(k + 1) % 3][1])).fold(0.0, f64::max) / s as f64;
    let h = 1e-3 * spacing;
    let mut best = 0.0f64;
    for j in 0..=s {
        for i in 0..=(s - j) {
            let (a, b) = (i as f64 / s as f64, j as f64 / s as f64);
            let x = [
                v[0][0] + a * (v[1][0] - v[0][0]) + b * (v[2][0] - v[0][0]),
                v[0][1] + a * (v[1][1] - v[0][1]) + b * (v[2][1] - v[0][1]),
            ];
            let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
            let gy = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
            best = best.max(gx.hypot(gy));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> TriMesh {
        let d = BoxDomain::new([-5.0, -5.0], [5.0, 5.0]).unwrap();
        TriMesh::build_structured(d, n, &[DirichletSegment::whole(Side::Left, &d)]).unwrap()
    }

    #[test]
    fn unit_square_single_cell() {
        let d = BoxDomain::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let m = TriMesh::build_structured(d, 1, &[]).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_elements(), 2);
        assert!(m.max_angle() <= std::f64::consts::FRAC_PI_2 + 1e-12);
        assert_eq!(m.boundary_facets.len(), 4);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(BoxDomain::new([0.0, 0.0], [0.0, 1.0]).is_err());
        let d = BoxDomain::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!(TriMesh::build_structured(d, 0, &[]).is_err());
        let bad = DirichletSegment { side: Side::Left, from: 0.0, to: 0.3 };
        assert!(TriMesh::build_structured(d, 2, &[bad]).is_err());
    }

    #[test]
    fn bisection_preserves_area_and_angles() {
        let m = square(4);
        let r = m.refine_uniform(3).unwrap();
        assert_eq!(r.num_elements(), m.num_elements() * 8);
        assert!((r.total_area() - 100.0).abs() < 1e-12 * 100.0);
        assert!(r.max_angle() <= std::f64::consts::FRAC_PI_2 + 1e-12);
        let perim: f64 = r
            .boundary_facets
            .iter()
            .map(|f| {
                let (a, b) = (r.vertices[f.vertices[0]], r.vertices[f.vertices[1]]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .sum();
        assert!((perim - 40.0).abs() < 1e-12);
    }

    #[test]
    fn point_location_finds_vertices() {
        let m = square(4);
        let f = |x: [f64; 2]| (-(x[0] * x[0] + x[1] * x[1] - 4.0).powi(2)).exp();
        let r = m.refine_near_interface(PhiSource::Function(&f), 0.3, 0.5).unwrap();
        for e in 0..r.num_elements() {
            let v = r.element_vertices(e);
            let c = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
            assert_eq!(r.locate_element(c), Some(e));
        }
    }
}
