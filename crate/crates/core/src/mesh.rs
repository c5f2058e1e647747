//! Quadrilateral meshes with 1-irregular refinement.
//!
//! A mesh keeps its whole refinement history: refined elements stay in the
//! element list (inactive) and split edges keep links to their two halves.
//! Refinement returns a new mesh; an existing one is never mutated.
//!
//! Local numbering of an element: vertices counterclockwise, vertex 0 at
//! reference point (-1, -1); side `s` runs from vertex `s` to vertex `s + 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// (0, 1)^2
    UnitSquare,
    /// (-1, 1)^2 minus the quadrant {x > 0, y < 0}
    LShape,
}

impl Domain {
    pub fn area(self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::LShape => 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints; the edge parameter runs from `vertices[0]` (-1) to `vertices[1]` (+1).
    pub vertices: [usize; 2],
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    pub midpoint: Option<usize>,
    pub boundary: bool,
}

#[derive(Debug, Clone)]
pub struct Element {
    pub vertices: [usize; 4],
    pub sides: [usize; 4],
    pub level: u32,
    pub parent: Option<usize>,
    pub children: Option<[usize; 4]>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    /// Elements having the edge as one of their sides (at most two).
    edge_owners: Vec<Vec<usize>>,
}

/// A piece of an element side lying on one unsplit edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideSegment {
    pub edge: usize,
    /// Sub-interval of the element side parameter covered by the edge.
    pub s_range: [f64; 2],
}

impl Mesh {
    pub fn build_initial(domain: Domain, n_per_side: usize) -> Result<Mesh> {
        if n_per_side == 0 {
            return Err(Error::InvalidInput("n_per_side must be at least 1".into()));
        }
        let n = n_per_side;
        let h = 1.0 / n as f64;
        // blocks given by lower-left corners of unit squares
        let blocks: Vec<[f64; 2]> = match domain {
            Domain::UnitSquare => vec![[0.0, 0.0]],
            Domain::LShape => vec![[-1.0, -1.0], [-1.0, 0.0], [0.0, 0.0]],
        };
        let key = |x: f64, y: f64| ((x * n as f64).round() as i64, (y * n as f64).round() as i64);
        let mut vid: BTreeMap<(i64, i64), usize> = BTreeMap::new();
        let mut vertices = Vec::new();
        let mut quads = Vec::new();
        for b in &blocks {
            for j in 0..n {
                for i in 0..n {
                    let x0 = b[0] + i as f64 * h;
                    let y0 = b[1] + j as f64 * h;
                    let corners = [[x0, y0], [x0 + h, y0], [x0 + h, y0 + h], [x0, y0 + h]];
                    let mut ids = [0; 4];
                    for (k, c) in corners.iter().enumerate() {
                        let id = *vid.entry(key(c[0], c[1])).or_insert_with(|| {
                            vertices.push(*c);
                            vertices.len() - 1
                        });
                        ids[k] = id;
                    }
                    quads.push(ids);
                }
            }
        }
        let mut edge_map: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut edge_owners: Vec<Vec<usize>> = Vec::new();
        let mut elements = Vec::new();
        for (k, q) in quads.iter().enumerate() {
            let mut sides = [0; 4];
            for s in 0..4 {
                let (a, b) = (q[s], q[(s + 1) % 4]);
                let id = *edge_map.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [a.min(b), a.max(b)],
                        parent: None,
                        children: None,
                        midpoint: None,
                        boundary: false,
                    });
                    edge_owners.push(Vec::new());
                    edges.len() - 1
                });
                edge_owners[id].push(k);
                sides[s] = id;
            }
            elements.push(Element { vertices: *q, sides, level: 0, parent: None, children: None });
        }
        for (e, owners) in edges.iter_mut().zip(&edge_owners) {
            e.boundary = owners.len() == 1;
        }
        Ok(Mesh { domain, vertices, elements, edges, edge_owners })
    }

    pub fn is_active(&self, element: usize) -> bool {
        self.elements[element].children.is_none()
    }

    /// Active element ids in increasing order.
    pub fn active_elements(&self) -> Vec<usize> {
        (0..self.elements.len()).filter(|&k| self.is_active(k)).collect()
    }

    pub fn n_active(&self) -> usize {
        self.elements.iter().filter(|e| e.children.is_none()).count()
    }

    pub fn edge_owners(&self, edge: usize) -> &[usize] {
        &self.edge_owners[edge]
    }

    fn active_owners(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        self.edge_owners[edge].iter().copied().filter(|&k| self.is_active(k))
    }

    /// Active elements touching the edge: its owners, the coarse owner of its
    /// parent and the fine owners of its halves.
    pub fn adjacent_active(&self, edge: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.active_owners(edge).collect();
        if let Some(p) = self.edges[edge].parent {
            out.extend(self.active_owners(p));
        }
        if let Some(ch) = self.edges[edge].children {
            for c in ch {
                out.extend(self.active_owners(c));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Unsplit edges, i.e. the edges carrying flux unknowns.
    pub fn leaf_edges(&self) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].children.is_none()).collect()
    }

    /// Edge on which the trace of `element`'s side `s` is a single polynomial:
    /// the side itself, or its parent when the side is the fine half of a
    /// hanging edge.
    pub fn trace_master(&self, element: usize, s: usize) -> usize {
        let e = self.elements[element].sides[s];
        if let Some(p) = self.edges[e].parent {
            if self.active_owners(p).next().is_some() {
                return p;
            }
        }
        e
    }

    /// All trace master edges of the active mesh, sorted.
    pub fn trace_master_edges(&self) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for k in self.active_elements() {
            for s in 0..4 {
                set.insert(self.trace_master(k, s));
            }
        }
        set.into_iter().collect()
    }

    /// Hanging vertices mapped to the split master edge they bisect.
    pub fn hanging_vertices(&self) -> BTreeMap<usize, usize> {
        self.trace_master_edges()
            .into_iter()
            .filter_map(|e| self.edges[e].midpoint.map(|m| (m, e)))
            .collect()
    }

    pub fn side_endpoints(&self, element: usize, s: usize) -> (usize, usize) {
        let v = &self.elements[element].vertices;
        (v[s], v[(s + 1) % 4])
    }

    /// Parameter (in [-1, 1]) of a point on the straight side `s` of `element`.
    pub fn side_param(&self, element: usize, s: usize, x: [f64; 2]) -> f64 {
        let (a, b) = self.side_endpoints(element, s);
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        -1.0 + 2.0 * ((x[0] - pa[0]) * d[0] + (x[1] - pa[1]) * d[1]) / l2
    }

    /// Parameter of a point on a straight edge.
    pub fn edge_param(&self, edge: usize, x: [f64; 2]) -> f64 {
        let [a, b] = self.edges[edge].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        -1.0 + 2.0 * ((x[0] - pa[0]) * d[0] + (x[1] - pa[1]) * d[1]) / l2
    }

    /// Unsplit edges covering side `s` of `element`, in side order.
    pub fn side_segments(&self, element: usize, s: usize) -> Vec<SideSegment> {
        let e = self.elements[element].sides[s];
        let pieces: Vec<usize> = match self.edges[e].children {
            Some(ch) => ch.to_vec(),
            None => vec![e],
        };
        let mut segs: Vec<SideSegment> = pieces
            .into_iter()
            .map(|c| {
                let [a, b] = self.edges[c].vertices;
                let sa = self.side_param(element, s, self.vertices[a]);
                let sb = self.side_param(element, s, self.vertices[b]);
                SideSegment { edge: c, s_range: [sa.min(sb), sa.max(sb)] }
            })
            .collect();
        segs.sort_by(|x, y| x.s_range[0].total_cmp(&y.s_range[0]));
        segs
    }

    /// Bilinear map of `element` at reference point `(xi, eta)`: physical
    /// point and Jacobian `[[dx/dxi, dx/deta], [dy/dxi, dy/deta]]`.
    pub fn reference_map(&self, element: usize, xi: f64, eta: f64) -> Result<([f64; 2], [[f64; 2]; 2])> {
        if element >= self.elements.len() || !self.is_active(element) {
            return Err(Error::InactiveElement(element));
        }
        Ok(self.map_point(element, xi, eta))
    }

    pub(crate) fn map_point(&self, element: usize, xi: f64, eta: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let v = self.elements[element].vertices.map(|i| self.vertices[i]);
        let n = [
            0.25 * (1.0 - xi) * (1.0 - eta),
            0.25 * (1.0 + xi) * (1.0 - eta),
            0.25 * (1.0 + xi) * (1.0 + eta),
            0.25 * (1.0 - xi) * (1.0 + eta),
        ];
        let dxi = [-0.25 * (1.0 - eta), 0.25 * (1.0 - eta), 0.25 * (1.0 + eta), -0.25 * (1.0 + eta)];
        let deta = [-0.25 * (1.0 - xi), -0.25 * (1.0 + xi), 0.25 * (1.0 + xi), 0.25 * (1.0 - xi)];
        let mut x = [0.0; 2];
        let mut j = [[0.0; 2]; 2];
        for k in 0..4 {
            for c in 0..2 {
                x[c] += n[k] * v[k][c];
                j[c][0] += dxi[k] * v[k][c];
                j[c][1] += deta[k] * v[k][c];
            }
        }
        (x, j)
    }

    pub fn element_area(&self, element: usize) -> f64 {
        let v = self.elements[element].vertices.map(|i| self.vertices[i]);
        let mut a = 0.0;
        for k in 0..4 {
            let (p, q) = (v[k], v[(k + 1) % 4]);
            a += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * a
    }

    /// Longest side length of an element.
    pub fn element_diameter(&self, element: usize) -> f64 {
        let v = self.elements[element].vertices.map(|i| self.vertices[i]);
        (0..4)
            .map(|k| {
                let (p, q) = (v[k], v[(k + 1) % 4]);
                (q[0] - p[0]).hypot(q[1] - p[1])
            })
            .fold(0.0, f64::max)
    }

    /// Reference point of a side parameter.
    pub fn side_reference_point(s: usize, t: f64) -> [f64; 2] {
        match s {
            0 => [t, -1.0],
            1 => [1.0, t],
            2 => [-t, 1.0],
            _ => [-1.0, -t],
        }
    }

    /// Uniform refinement of every active element.
    pub fn refine_uniform(&self) -> Mesh {
        self.refine_marked(&self.active_elements().into_iter().collect())
    }

    /// Refine the marked active elements plus whatever coarse neighbors are
    /// needed to keep the mesh 1-irregular.
    pub fn refine_marked(&self, marked: &BTreeSet<usize>) -> Mesh {
        let mut out = self.clone();
        for &k in marked {
            if k < out.elements.len() && out.is_active(k) {
                out.refine_with_closure(k);
            }
        }
        out
    }

    fn refine_with_closure(&mut self, k: usize) {
        if !self.is_active(k) {
            return;
        }
        for s in 0..4 {
            let e = self.elements[k].sides[s];
            if self.edges[e].children.is_some() {
                continue;
            }
            if let Some(p) = self.edges[e].parent {
                let coarse: Vec<usize> = self.active_owners(p).collect();
                for n in coarse {
                    self.refine_with_closure(n);
                }
            }
        }
        self.split_element(k);
    }

    fn split_edge(&mut self, e: usize) -> usize {
        if let Some(m) = self.edges[e].midpoint {
            return m;
        }
        let [a, b] = self.edges[e].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        self.vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        let m = self.vertices.len() - 1;
        let boundary = self.edges[e].boundary;
        let first = self.edges.len();
        for vs in [[a, m], [m, b]] {
            self.edges.push(Edge { vertices: vs, parent: Some(e), children: None, midpoint: None, boundary });
            self.edge_owners.push(Vec::new());
        }
        self.edges[e].children = Some([first, first + 1]);
        self.edges[e].midpoint = Some(m);
        m
    }

    fn half_at(&self, e: usize, vertex: usize) -> usize {
        let ch = self.edges[e].children.expect("edge is split");
        if self.edges[ch[0]].vertices.contains(&vertex) {
            ch[0]
        } else {
            ch[1]
        }
    }

    fn new_edge(&mut self, a: usize, b: usize) -> usize {
        self.edges.push(Edge { vertices: [a, b], parent: None, children: None, midpoint: None, boundary: false });
        self.edge_owners.push(Vec::new());
        self.edges.len() - 1
    }

    fn split_element(&mut self, k: usize) {
        let el = self.elements[k].clone();
        let v = el.vertices;
        let mut m = [0; 4];
        for s in 0..4 {
            m[s] = self.split_edge(el.sides[s]);
        }
        let (c, _) = self.map_point(k, 0.0, 0.0);
        self.vertices.push(c);
        let c = self.vertices.len() - 1;
        let inner: Vec<usize> = (0..4).map(|s| self.new_edge(m[s], c)).collect();
        let half = |mesh: &Mesh, s: usize, vertex: usize| mesh.half_at(el.sides[s], vertex);
        let specs = [
            ([v[0], m[0], c, m[3]], [half(self, 0, v[0]), inner[0], inner[3], half(self, 3, v[0])]),
            ([m[0], v[1], m[1], c], [half(self, 0, v[1]), half(self, 1, v[1]), inner[1], inner[0]]),
            ([c, m[1], v[2], m[2]], [inner[1], half(self, 1, v[2]), half(self, 2, v[2]), inner[2]]),
            ([m[3], c, m[2], v[3]], [inner[3], inner[2], half(self, 2, v[3]), half(self, 3, v[3])]),
        ];
        let first = self.elements.len();
        for (i, (vs, sides)) in specs.into_iter().enumerate() {
            for e in sides {
                self.edge_owners[e].push(first + i);
            }
            self.elements.push(Element {
                vertices: vs,
                sides,
                level: el.level + 1,
                parent: Some(k),
                children: None,
            });
        }
        self.elements[k].children = Some([first, first + 1, first + 2, first + 3]);
    }

    /// Check 1-irregularity, edge sharing and positive Jacobians.
    pub fn validate(&self) -> Result<()> {
        for k in self.active_elements() {
            for s in 0..4 {
                let e = self.elements[k].sides[s];
                if let Some(ch) = self.edges[e].children {
                    if ch.iter().any(|&c| self.edges[c].children.is_some()) {
                        return Err(Error::InvalidMesh(format!("side {s} of element {k} is split twice")));
                    }
                }
            }
            for &(xi, eta) in &[(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (0.0, 0.0)] {
                let (_, j) = self.map_point(k, xi, eta);
                if j[0][0] * j[1][1] - j[0][1] * j[1][0] <= 0.0 {
                    return Err(Error::InvalidMesh(format!("nonpositive Jacobian in element {k}")));
                }
            }
        }
        for e in self.leaf_edges() {
            let mut count = self.active_owners(e).count();
            if let Some(p) = self.edges[e].parent {
                count += self.active_owners(p).count();
            }
            let expected = if self.edges[e].boundary { 1 } else { 2 };
            if count != expected {
                return Err(Error::InvalidMesh(format!(
                    "edge {e} touches {count} active elements, expected {expected}"
                )));
            }
        }
        Ok(())
    }

    /// Element (active) whose closure contains the point as a vertex.
    pub fn elements_touching(&self, point: [f64; 2]) -> Vec<usize> {
        self.active_elements()
            .into_iter()
            .filter(|&k| {
                self.elements[k].vertices.iter().any(|&v| {
                    let x = self.vertices[v];
                    (x[0] - point[0]).abs() < 1e-12 && (x[1] - point[1]).abs() < 1e-12
                })
            })
            .collect()
    }
}

/// Polynomial degrees of elements and edges plus the test-space enrichment.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeMap {
    /// Degree per element id (entries of inactive elements are ignored).
    pub element: Vec<usize>,
    /// Degree per edge id, by the maximum rule over adjacent active elements.
    pub edge: Vec<usize>,
    pub delta_p: usize,
}

impl DegreeMap {
    pub fn uniform(mesh: &Mesh, p: usize, delta_p: usize) -> Result<Self> {
        if p < 1 {
            return Err(Error::InvalidInput("element degree must be at least 1".into()));
        }
        if delta_p < 1 {
            return Err(Error::InvalidInput("delta_p must be at least 1".into()));
        }
        let mut d = DegreeMap { element: vec![p; mesh.elements.len()], edge: Vec::new(), delta_p };
        d.update_edges(mesh);
        Ok(d)
    }

    /// Extend to a refined mesh: new elements inherit their parent's degree.
    pub fn inherit(&self, mesh: &Mesh) -> Self {
        let mut element = self.element.clone();
        for k in element.len()..mesh.elements.len() {
            let parent = mesh.elements[k].parent.expect("new elements come from refinement");
            element.push(element[parent]);
        }
        let mut d = DegreeMap { element, edge: Vec::new(), delta_p: self.delta_p };
        d.update_edges(mesh);
        d
    }

    pub fn set_element(&mut self, mesh: &Mesh, element: usize, p: usize) {
        self.element[element] = p.max(1);
        self.update_edges(mesh);
    }

    pub fn update_edges(&mut self, mesh: &Mesh) {
        self.edge = (0..mesh.edges.len())
            .map(|e| mesh.adjacent_active(e).iter().map(|&k| self.element[k]).max().unwrap_or(0))
            .collect();
    }

    pub fn test_degree(&self, element: usize) -> usize {
        self.element[element] + self.delta_p
    }

    pub fn max_active(&self, mesh: &Mesh) -> usize {
        mesh.active_elements().iter().map(|&k| self.element[k]).max().unwrap_or(0)
    }
}

/// Plain-text dump: `v x y` per vertex, `e v0 v1 v2 v3 pK` per active element.
pub fn dump(mesh: &Mesh, degrees: &DegreeMap) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {}", v[0], v[1]);
    }
    for k in mesh.active_elements() {
        let v = mesh.elements[k].vertices;
        let _ = writeln!(out, "e {} {} {} {} {}", v[0], v[1], v[2], v[3], degrees.element[k]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total_area(m: &Mesh) -> f64 {
        m.active_elements().iter().map(|&k| m.element_area(k)).sum()
    }

    #[test]
    fn initial_counts() {
        let m = Mesh::build_initial(Domain::UnitSquare, 2).unwrap();
        assert_eq!((m.elements.len(), m.edges.len(), m.vertices.len()), (4, 12, 9));
        let l = Mesh::build_initial(Domain::LShape, 1).unwrap();
        assert_eq!((l.elements.len(), l.edges.len(), l.vertices.len()), (3, 10, 8));
        assert!(Mesh::build_initial(Domain::UnitSquare, 0).is_err());
        m.validate().unwrap();
        l.validate().unwrap();
        assert_eq!(l.edges.iter().filter(|e| e.boundary).count(), 8);
    }

    #[test]
    fn jacobian_of_quarter_squares() {
        let m = Mesh::build_initial(Domain::UnitSquare, 4).unwrap();
        assert_eq!(m.n_active(), 16);
        for k in m.active_elements() {
            for &(a, b) in &[(0.0, 0.0), (-0.5, 0.9)] {
                let (_, j) = m.reference_map(k, a, b).unwrap();
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                assert!((det - 1.0 / 64.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_map_points() {
        let m = Mesh::build_initial(Domain::UnitSquare, 1).unwrap();
        let (x, j) = m.reference_map(0, 0.0, 0.0).unwrap();
        assert_eq!(x, [0.5, 0.5]);
        assert_eq!(j, [[0.5, 0.0], [0.0, 0.5]]);
        let (x0, _) = m.reference_map(0, -1.0, -1.0).unwrap();
        assert_eq!(x0, m.vertices[m.elements[0].vertices[0]]);
        let mut sheared = m.clone();
        sheared.vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.5, 1.0], [0.5, 1.0]];
        sheared.elements[0].vertices = [0, 1, 2, 3];
        let (x, _) = sheared.reference_map(0, 0.0, 0.0).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
        let r = m.refine_uniform();
        assert!(matches!(r.reference_map(0, 0.0, 0.0), Err(Error::InactiveElement(0))));
    }

    #[test]
    fn uniform_refinement_counts() {
        let m = Mesh::build_initial(Domain::UnitSquare, 2).unwrap();
        let r1 = m.refine_uniform();
        assert_eq!(r1.n_active(), 16);
        assert_eq!(r1.refine_uniform().n_active(), 64);
        let l = Mesh::build_initial(Domain::LShape, 1).unwrap().refine_uniform();
        assert_eq!(l.n_active(), 12);
        for mesh in [&r1, &l] {
            mesh.validate().unwrap();
            assert!((total_area(mesh) - mesh.domain.area()).abs() < 1e-12);
            assert!(mesh.hanging_vertices().is_empty());
        }
        // original untouched
        assert_eq!(m.n_active(), 4);
    }

    #[test]
    fn marked_refinement() {
        let m = Mesh::build_initial(Domain::UnitSquare, 2).unwrap();
        let same = m.refine_marked(&BTreeSet::new());
        assert_eq!(same.n_active(), 4);
        let all: BTreeSet<usize> = m.active_elements().into_iter().collect();
        assert_eq!(m.refine_marked(&all).n_active(), m.refine_uniform().n_active());
        let one = m.refine_marked(&BTreeSet::from([0]));
        assert_eq!(one.n_active(), 7);
        assert_eq!(one.hanging_vertices().len(), 2);
        one.validate().unwrap();
    }

    #[test]
    fn closure_refines_coarse_neighbors() {
        let m = Mesh::build_initial(Domain::UnitSquare, 1).unwrap().refine_uniform();
        // refine corner child twice at the same spot
        let m1 = m.refine_marked(&BTreeSet::from([1]));
        let corner = m1.elements[1].children.unwrap()[2];
        let m2 = m1.refine_marked(&BTreeSet::from([corner]));
        m2.validate().unwrap();
        assert!(m2.n_active() > m1.n_active() + 3);
        assert!((total_area(&m2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degrees_follow_maximum_rule() {
        let m = Mesh::build_initial(Domain::UnitSquare, 2).unwrap();
        let mut d = DegreeMap::uniform(&m, 1, 2).unwrap();
        d.set_element(&m, 0, 3);
        for e in 0..m.edges.len() {
            let adj = m.adjacent_active(e);
            let want = adj.iter().map(|&k| d.element[k]).max().unwrap();
            assert_eq!(d.edge[e], want);
        }
        assert_eq!(d.test_degree(0), 5);
        assert!(DegreeMap::uniform(&m, 1, 0).is_err());
        let r = m.refine_marked(&BTreeSet::from([0]));
        let dr = d.inherit(&r);
        for c in r.elements[0].children.unwrap() {
            assert_eq!(dr.element[c], 3);
        }
        let text = dump(&r, &dr);
        assert_eq!(text.lines().filter(|l| l.starts_with("e ")).count(), 7);
    }

    #[test]
    fn segments_cover_sides() {
        let m = Mesh::build_initial(Domain::UnitSquare, 2).unwrap().refine_marked(&BTreeSet::from([0]));
        for k in m.active_elements() {
            for s in 0..4 {
                let segs = m.side_segments(k, s);
                assert_eq!(segs.first().unwrap().s_range[0], -1.0);
                assert_eq!(segs.last().unwrap().s_range[1], 1.0);
                for w in segs.windows(2) {
                    assert_eq!(w[0].s_range[1], w[1].s_range[0]);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_refinement_keeps_invariants(
            picks in prop::collection::vec(prop::collection::vec(0usize..1000, 1..4), 1..5),
            lshape in any::<bool>(),
        ) {
            let domain = if lshape { Domain::LShape } else { Domain::UnitSquare };
            let mut m = Mesh::build_initial(domain, 1).unwrap();
            let mut d = DegreeMap::uniform(&m, 2, 2).unwrap();
            for round in picks {
                let active = m.active_elements();
                let marked: BTreeSet<usize> = round.iter().map(|i| active[i % active.len()]).collect();
                m = m.refine_marked(&marked);
                d = d.inherit(&m);
                prop_assert!(m.validate().is_ok(), "{:?}", m.validate());
                prop_assert!((total_area(&m) - domain.area()).abs() < 1e-12 * domain.area());
                for e in 0..m.edges.len() {
                    let want = m.adjacent_active(e).iter().map(|&k| d.element[k]).max().unwrap_or(0);
                    prop_assert_eq!(d.edge[e], want);
                }
            }
        }
    }
}
