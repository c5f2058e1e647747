//! Global degrees of freedom, constrained assembly and the global solve.
//!
//! Unknowns are numbered in an "extended" index space: free dofs first
//! (element interiors, then skeleton vertex traces, trace bubbles and
//! fluxes), followed by the pinned boundary trace dofs. Every local trial
//! function of an element expands into a short linear combination of extended
//! dofs. The expansion absorbs hanging-node constraints (a fine side sees the
//! restriction of its parent edge's trace polynomial) and orientation, so the
//! global matrix is `C^T K C` accumulated element by element.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::basis::{edge_basis_eval, gauss_rule, q_basis_eval, transfer_matrix};
use crate::local::{LocalSystem, TrialLayout};
use crate::material::{Mat2, Material};
use crate::mesh::{DegreeMap, Mesh};
use crate::sparse::{conjugate_gradient, CsrMatrix, SpdFactor};
use crate::{Error, Result};

/// What an extended dof represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Stress { element: usize, component: usize, index: usize },
    Displacement { element: usize, component: usize, index: usize },
    TraceVertex { vertex: usize, component: usize },
    TraceBubble { edge: usize, component: usize, index: usize },
    Flux { edge: usize, component: usize, index: usize },
}

/// Local-to-global map of one active element.
#[derive(Debug, Clone)]
pub struct ElementMap {
    pub element: usize,
    pub layout: TrialLayout,
    pub interior_start: usize,
    /// Sorted extended dofs touched by the element.
    pub globals: Vec<usize>,
    /// Per local trial dof: `(position in globals, coefficient)`.
    pub expansion: Vec<Vec<(usize, f64)>>,
}

impl ElementMap {
    /// Local trial coefficients of a global extended vector.
    pub fn gather(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.expansion.len(),
            self.expansion.iter().map(|e| e.iter().map(|&(g, c)| c * x[self.globals[g]]).sum::<f64>()),
        )
    }
}

#[derive(Debug, Clone)]
pub struct DofLayout {
    pub n_free: usize,
    pub n_pinned: usize,
    /// Interior dofs occupy `0..n_interior`.
    pub n_interior: usize,
    pub kinds: Vec<DofKind>,
    pub vertex_dof: BTreeMap<usize, usize>,
    pub bubble_dof: BTreeMap<usize, usize>,
    pub flux_dof: BTreeMap<usize, usize>,
    /// Hanging vertex -> split master edge.
    pub hanging: BTreeMap<usize, usize>,
    pub maps: Vec<ElementMap>,
    /// Element id -> index into `maps`.
    slot: Vec<Option<usize>>,
}

impl DofLayout {
    pub fn n_total(&self) -> usize {
        self.n_free + self.n_pinned
    }

    pub fn element_map(&self, element: usize) -> Option<&ElementMap> {
        self.slot.get(element).copied().flatten().map(|i| &self.maps[i])
    }

    pub fn is_pinned(&self, dof: usize) -> bool {
        dof >= self.n_free
    }
}

/// Number all dofs of the active mesh. Every boundary trace dof is pinned
/// (displacement data on the whole boundary).
pub fn build_dof_layout(mesh: &Mesh, degrees: &DegreeMap) -> Result<DofLayout> {
    if degrees.element.len() != mesh.elements.len() || degrees.edge.len() != mesh.edges.len() {
        return Err(Error::Layout("degree map does not match the mesh".into()));
    }
    let active = mesh.active_elements();
    let masters = mesh.trace_master_edges();
    let hanging = mesh.hanging_vertices();
    let mut kinds = Vec::new();

    let mut interior_start = BTreeMap::new();
    for &k in &active {
        let m = (degrees.element[k] + 1).pow(2);
        interior_start.insert(k, kinds.len());
        for component in 0..3 {
            kinds.extend((0..m).map(|index| DofKind::Stress { element: k, component, index }));
        }
        for component in 0..2 {
            kinds.extend((0..m).map(|index| DofKind::Displacement { element: k, component, index }));
        }
    }
    let n_interior = kinds.len();

    let mut trace_vertices = BTreeSet::new();
    let mut boundary_vertices = BTreeSet::new();
    for &e in &masters {
        for v in mesh.edges[e].vertices {
            if hanging.contains_key(&v) {
                continue;
            }
            trace_vertices.insert(v);
            if mesh.edges[e].boundary {
                boundary_vertices.insert(v);
            }
        }
    }
    let mut leaf = BTreeSet::new();
    for &k in &active {
        for s in 0..4 {
            leaf.extend(mesh.side_segments(k, s).into_iter().map(|seg| seg.edge));
        }
    }

    let mut vertex_dof = BTreeMap::new();
    let mut bubble_dof = BTreeMap::new();
    let mut flux_dof = BTreeMap::new();
    let push_vertex = |v: usize, kinds: &mut Vec<DofKind>, map: &mut BTreeMap<usize, usize>| {
        map.insert(v, kinds.len());
        kinds.extend((0..2).map(|component| DofKind::TraceVertex { vertex: v, component }));
    };
    let push_bubbles = |e: usize, kinds: &mut Vec<DofKind>, map: &mut BTreeMap<usize, usize>| {
        let q = degrees.edge[e] + 1;
        map.insert(e, kinds.len());
        for component in 0..2 {
            kinds.extend((2..=q).map(|index| DofKind::TraceBubble { edge: e, component, index }));
        }
    };
    for &v in trace_vertices.difference(&boundary_vertices) {
        push_vertex(v, &mut kinds, &mut vertex_dof);
    }
    for &e in masters.iter().filter(|&&e| !mesh.edges[e].boundary) {
        push_bubbles(e, &mut kinds, &mut bubble_dof);
    }
    for &e in &leaf {
        let pe = degrees.edge[e];
        flux_dof.insert(e, kinds.len());
        for component in 0..2 {
            kinds.extend((0..=pe).map(|index| DofKind::Flux { edge: e, component, index }));
        }
    }
    let n_free = kinds.len();
    for &v in &boundary_vertices {
        push_vertex(v, &mut kinds, &mut vertex_dof);
    }
    for &e in masters.iter().filter(|&&e| mesh.edges[e].boundary) {
        push_bubbles(e, &mut kinds, &mut bubble_dof);
    }
    let n_pinned = kinds.len() - n_free;

    let mut layout = DofLayout {
        n_free,
        n_pinned,
        n_interior,
        kinds,
        vertex_dof,
        bubble_dof,
        flux_dof,
        hanging,
        maps: Vec::with_capacity(active.len()),
        slot: vec![None; mesh.elements.len()],
    };
    for &k in &active {
        let map = element_map(mesh, degrees, &layout, k, interior_start[&k])?;
        layout.slot[k] = Some(layout.maps.len());
        layout.maps.push(map);
    }
    Ok(layout)
}

fn expand_vertex(
    mesh: &Mesh,
    degrees: &DegreeMap,
    layout: &DofLayout,
    v: usize,
    c: usize,
    scale: f64,
    out: &mut BTreeMap<usize, f64>,
) -> Result<()> {
    if let Some(&e) = layout.hanging.get(&v) {
        // value of the parent trace at its midpoint
        let q = degrees.edge[e] + 1;
        let phi = edge_basis_eval(q, 0.0);
        let [a, b] = mesh.edges[e].vertices;
        expand_vertex(mesh, degrees, layout, a, c, 0.5 * scale, out)?;
        expand_vertex(mesh, degrees, layout, b, c, 0.5 * scale, out)?;
        let start = bubble_start(layout, e)?;
        for k in 2..=q {
            if phi[k] != 0.0 {
                *out.entry(start + c * (q - 1) + k - 2).or_insert(0.0) += scale * phi[k];
            }
        }
        return Ok(());
    }
    let d = *layout
        .vertex_dof
        .get(&v)
        .ok_or_else(|| Error::Layout(format!("vertex {v} carries no trace dof")))?;
    *out.entry(d + c).or_insert(0.0) += scale;
    Ok(())
}

fn bubble_start(layout: &DofLayout, e: usize) -> Result<usize> {
    layout
        .bubble_dof
        .get(&e)
        .copied()
        .ok_or_else(|| Error::Layout(format!("edge {e} carries no trace dofs")))
}

fn element_map(mesh: &Mesh, degrees: &DegreeMap, layout: &DofLayout, k: usize, start: usize) -> Result<ElementMap> {
    let tl = TrialLayout::new(mesh, degrees, k);
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); tl.n_trial];
    for (i, row) in rows.iter_mut().enumerate().take(tl.n_interior()) {
        row.insert(start + i, 1.0);
    }
    for (s, side) in tl.sides.iter().enumerate() {
        let m = side.master;
        let q = side.trace_degree;
        let (va, vb) = mesh.side_endpoints(k, s);
        let t0 = mesh.edge_param(m, mesh.vertices[va]);
        let t1 = mesh.edge_param(m, mesh.vertices[vb]);
        let t = transfer_matrix(q, t0, t1);
        let [ma, mb] = mesh.edges[m].vertices;
        for c in 0..2 {
            // expansions of the master basis functions
            let mut master: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); q + 1];
            expand_vertex(mesh, degrees, layout, ma, c, 1.0, &mut master[0])?;
            expand_vertex(mesh, degrees, layout, mb, c, 1.0, &mut master[1])?;
            if q >= 2 {
                let b0 = bubble_start(layout, m)?;
                for (j, mj) in master.iter_mut().enumerate().skip(2) {
                    mj.insert(b0 + c * (q - 1) + j - 2, 1.0);
                }
            }
            for i in 0..=q {
                let row = &mut rows[side.trace_offset + c * (q + 1) + i];
                for (j, mj) in master.iter().enumerate() {
                    let tij = t[(i, j)];
                    if tij.abs() < 1e-14 {
                        continue;
                    }
                    for (&g, &w) in mj {
                        *row.entry(g).or_insert(0.0) += tij * w;
                    }
                }
            }
        }
        for seg in &side.segments {
            let f0 = layout.flux_dof[&seg.edge];
            for i in 0..2 * (seg.degree + 1) {
                rows[seg.offset + i].insert(f0 + i, 1.0);
            }
        }
    }
    let globals: Vec<usize> = rows.iter().flat_map(|r| r.keys().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let pos: BTreeMap<usize, usize> = globals.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let expansion = rows
        .into_iter()
        .map(|r| r.into_iter().filter(|&(_, w)| w != 0.0).map(|(g, w)| (pos[&g], w)).collect())
        .collect();
    Ok(ElementMap { element: k, layout: tl, interior_start: start, globals, expansion })
}

/// Assembly choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssemblyOptions {
    /// Eliminate element interior (stress, displacement) blocks locally.
    pub condense: bool,
}

#[derive(Debug, Clone)]
struct Condensed {
    /// `K_ii^{-1} K_is`
    z: DMatrix<f64>,
    /// `K_ii^{-1} f_i`
    zf: DVector<f64>,
}

/// Global SPD system over the free unknowns.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Coupling of the unknowns with the pinned dofs.
    pub coupling: CsrMatrix,
    pub pinned_values: Vec<f64>,
    /// Extended index of unknown 0 (`n_interior` when condensed).
    pub offset: usize,
    /// Relative asymmetry of the matrix before round-off averaging.
    pub asymmetry: f64,
    condensed: Option<Vec<Condensed>>,
}

impl GlobalSystem {
    pub fn n(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn is_condensed(&self) -> bool {
        self.condensed.is_some()
    }

    /// Load minus the pinned-column contribution.
    pub fn effective_rhs(&self) -> Vec<f64> {
        let lift = self.coupling.matvec(&self.pinned_values);
        self.rhs.iter().zip(&lift).map(|(a, b)| a - b).collect()
    }
}

/// Dense element matrix in the element's `globals` numbering.
fn scatter_local(map: &ElementMap, k: &DMatrix<f64>, f: &DVector<f64>, first: usize) -> (DMatrix<f64>, DVector<f64>) {
    let ng = map.globals.len();
    let nl = k.nrows();
    let mut kc = DMatrix::zeros(nl, ng);
    for b in 0..nl {
        for &(g, w) in &map.expansion[first + b] {
            let mut col = kc.column_mut(g);
            col.axpy(w, &k.column(b), 1.0);
        }
    }
    let mut kg = DMatrix::zeros(ng, ng);
    let mut fg = DVector::zeros(ng);
    for a in 0..nl {
        for &(g, w) in &map.expansion[first + a] {
            for b in 0..ng {
                kg[(g, b)] += w * kc[(a, b)];
            }
            fg[g] += w * f[a];
        }
    }
    (kg, fg)
}

/// Assemble the global system of the first method.
pub fn assemble<F>(
    mesh: &Mesh,
    degrees: &DegreeMap,
    material: &Material,
    f: F,
    layout: &DofLayout,
    options: AssemblyOptions,
) -> Result<GlobalSystem>
where
    F: Fn(f64, f64) -> [f64; 2] + Sync,
{
    let offset = if options.condense { layout.n_interior } else { 0 };
    let n = layout.n_free - offset;
    let n_pinned = layout.n_pinned;
    let unknown = |g: usize| (g >= offset && g < layout.n_free).then(|| g - offset);

    // sparsity pattern
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, map) in layout.maps.iter().enumerate() {
        for &g in &map.globals {
            if let Some(r) = unknown(g) {
                touching[r].push(i);
            }
        }
    }
    let rows: Vec<Vec<usize>> = touching
        .par_iter()
        .map(|elems| {
            let mut cols: Vec<usize> =
                elems.iter().flat_map(|&i| layout.maps[i].globals.iter().filter_map(|&g| unknown(g))).collect();
            cols.sort_unstable();
            cols.dedup();
            cols
        })
        .collect();
    drop(touching);
    let mut matrix = CsrMatrix::from_pattern(n, rows);
    let mut rhs = vec![0.0; n];
    let mut coupling = Vec::new();
    let mut condensed = options.condense.then(Vec::new);

    const CHUNK: usize = 64;
    for chunk in layout.maps.chunks(CHUNK) {
        let results: Vec<Result<(DMatrix<f64>, DVector<f64>, Option<Condensed>)>> = chunk
            .par_iter()
            .map(|map| {
                let sys = LocalSystem::build(mesh, degrees, map.element, material, &f)?;
                let (k, fl) = sys.stiffness();
                if !options.condense {
                    let (kg, fg) = scatter_local(map, &k, &fl, 0);
                    return Ok((kg, fg, None));
                }
                let ni = map.layout.n_interior();
                let ns = k.nrows() - ni;
                let kii = k.view((0, 0), (ni, ni)).into_owned();
                let kis = k.view((0, ni), (ni, ns)).into_owned();
                let chol: Cholesky<f64, Dyn> =
                    Cholesky::new(kii).ok_or_else(|| Error::NotSpd(format!("interior block of element {}", map.element)))?;
                let z = chol.solve(&kis);
                let zf = chol.solve(&fl.rows(0, ni).into_owned());
                let kss = k.view((ni, ni), (ns, ns)) - kis.transpose() * &z;
                let kss = (&kss + kss.transpose()) * 0.5;
                let fs = fl.rows(ni, ns) - kis.transpose() * &zf;
                let (kg, fg) = scatter_local(map, &kss, &fs, ni);
                Ok((kg, fg, Some(Condensed { z, zf })))
            })
            .collect();
        for (map, res) in chunk.iter().zip(results) {
            let (kg, fg, cond) = res?;
            for (a, &ga) in map.globals.iter().enumerate() {
                let Some(r) = unknown(ga) else { continue };
                rhs[r] += fg[a];
                for (b, &gb) in map.globals.iter().enumerate() {
                    let v = kg[(a, b)];
                    if let Some(c) = unknown(gb) {
                        let pos = matrix.find(r, c).ok_or_else(|| Error::Layout("entry outside pattern".into()))?;
                        matrix.values[pos] += v;
                    } else if gb >= layout.n_free {
                        coupling.push((r, gb - layout.n_free, v));
                    }
                }
            }
            if let (Some(list), Some(c)) = (condensed.as_mut(), cond) {
                list.push(c);
            }
        }
    }
    let asymmetry = matrix.symmetry_error();
    matrix.symmetrize();
    Ok(GlobalSystem {
        matrix,
        rhs,
        coupling: CsrMatrix::from_triplets(n, n_pinned, &coupling),
        pinned_values: vec![0.0; n_pinned],
        offset,
        asymmetry,
        condensed,
    })
}

/// Pin the boundary trace dofs to the displacement data `g`: vertex values
/// interpolated, bubbles by L2 projection along each boundary edge.
pub fn apply_dirichlet<G>(mut system: GlobalSystem, mesh: &Mesh, degrees: &DegreeMap, layout: &DofLayout, g: G) -> GlobalSystem
where
    G: Fn(f64, f64) -> [f64; 2],
{
    let n_free = layout.n_free;
    let mut values = vec![0.0; layout.n_pinned];
    for (&v, &d) in &layout.vertex_dof {
        if d >= n_free {
            let x = mesh.vertices[v];
            let gv = g(x[0], x[1]);
            values[d - n_free] = gv[0];
            values[d + 1 - n_free] = gv[1];
        }
    }
    for (&e, &d) in &layout.bubble_dof {
        if d < n_free {
            continue;
        }
        let q = degrees.edge[e] + 1;
        if q < 2 {
            continue;
        }
        let [a, b] = mesh.edges[e].vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let (ga, gb) = (g(pa[0], pa[1]), g(pb[0], pb[1]));
        let nb = q - 1;
        let rule = gauss_rule(2 * q + 6);
        let mut mass = DMatrix::zeros(nb, nb);
        let mut rhs = DMatrix::zeros(nb, 2);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let phi = edge_basis_eval(q, t);
            let s = 0.5 * (t + 1.0);
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let gx = g(x[0], x[1]);
            for i in 0..nb {
                for j in 0..nb {
                    mass[(i, j)] += w * phi[i + 2] * phi[j + 2];
                }
                for c in 0..2 {
                    let r = gx[c] - ga[c] * phi[0] - gb[c] * phi[1];
                    rhs[(i, c)] += w * r * phi[i + 2];
                }
            }
        }
        let coef = mass.cholesky().expect("bubble mass matrix is SPD").solve(&rhs);
        for c in 0..2 {
            for i in 0..nb {
                values[d - n_free + c * nb + i] = coef[(i, c)];
            }
        }
    }
    system.pinned_values = values;
    system
}

/// Linear solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    #[default]
    Cholesky,
    ConjugateGradient,
}

/// Solve the system; returns the full extended coefficient vector (free
/// unknowns, recovered interiors and pinned values).
pub fn solve_spd(system: &GlobalSystem, layout: &DofLayout, solver: SolverKind) -> Result<Vec<f64>> {
    let b = system.effective_rhs();
    let y = match solver {
        SolverKind::Cholesky => SpdFactor::new(&system.matrix)?.solve(&b),
        SolverKind::ConjugateGradient => conjugate_gradient(&system.matrix, &b, 1e-12, 20 * b.len().max(100))?.x,
    };
    Ok(expand_solution(system, layout, &y))
}

/// Full extended vector from the solution `y` of the reduced system.
pub fn expand_solution(system: &GlobalSystem, layout: &DofLayout, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; layout.n_total()];
    x[system.offset..layout.n_free].copy_from_slice(y);
    x[layout.n_free..].copy_from_slice(&system.pinned_values);
    if let Some(cond) = &system.condensed {
        for (map, c) in layout.maps.iter().zip(cond) {
            let ni = map.layout.n_interior();
            let local = map.gather(&x);
            let xs = local.rows(ni, local.len() - ni);
            let xi = &c.zf - &c.z * xs;
            x[map.interior_start..map.interior_start + ni].copy_from_slice(xi.as_slice());
        }
    }
    x
}

/// Element energy-error indicators `eta_K` in `layout.maps` order.
pub fn energy_indicators<F>(
    mesh: &Mesh,
    degrees: &DegreeMap,
    material: &Material,
    f: F,
    layout: &DofLayout,
    x: &[f64],
) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> [f64; 2] + Sync,
{
    layout
        .maps
        .par_iter()
        .map(|map| {
            let sys = LocalSystem::build(mesh, degrees, map.element, material, &f)?;
            Ok(sys.error_representation(&map.gather(x)).1)
        })
        .collect()
}

/// Discrete stress and displacement at a reference point of an element.
pub fn evaluate_fields(map: &ElementMap, x: &[f64], xi: f64, eta: f64) -> (Mat2, [f64; 2]) {
    let tl = &map.layout;
    let m = tl.n_scalar();
    let q = q_basis_eval(tl.degree, xi, eta);
    let base = map.interior_start;
    let comp = |c: usize| -> f64 { (0..m).map(|a| q.values[a] * x[base + c * m + a]).sum() };
    let (s11, s12, s22) = (comp(0), comp(1), comp(2));
    ([[s11, s12], [s12, s22]], [comp(3), comp(4)])
}
