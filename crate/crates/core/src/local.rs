//! Element-local DPG computations.
//!
//! On each element `K` the enriched test space holds symmetric `tau` (three
//! scalar components 11, 12, 22) and vector `v`, every component in
//! `Q_{p+dp, p+dp}`. Its Gram matrix in the broken norm
//!
//! ```text
//! ||(tau, v)||^2 = (tau, tau) + (div tau, div tau) + (v, v) + (grad v, grad v)
//! ```
//!
//! turns the element rows of the bilinear form into optimal test functions:
//! the local stiffness is `B^T G^{-1} B` and the residual's Riesz
//! representative `G^{-1} (l - B x)` doubles as the error indicator.
//!
//! Test vector layout: `[tau11, tau12, tau22, v1, v2]`, each a block of
//! `(p+dp+1)^2` scalars. Trial vector layout: `[sigma11, sigma12, sigma22,
//! u1, u2]` blocks of `(p+1)^2`, then per side the trace (`u_hat1`,
//! `u_hat2`, each `q+1` with `q` the trace degree of the side), then per side
//! and per covering edge segment the flux (`sigma_hat1`, `sigma_hat2`).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::basis::{edge_basis_eval, gauss_rule, q_basis_eval, q_coefficients_of_one};
use crate::material::Material;
use crate::mesh::{DegreeMap, Mesh};
use crate::{Error, Result};

/// Trial unknowns of a single flux segment on an element side.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSegment {
    pub edge: usize,
    pub s_range: [f64; 2],
    pub degree: usize,
    /// +1 when the element's outward normal equals the edge's global normal.
    pub sign: f64,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideLayout {
    /// Edge carrying the single trace polynomial seen by this side.
    pub master: usize,
    /// Trace degree on this side (`p_E + 1` of the master edge).
    pub trace_degree: usize,
    pub trace_offset: usize,
    pub segments: Vec<FluxSegment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLayout {
    pub element: usize,
    pub degree: usize,
    pub sides: [SideLayout; 4],
    pub n_trial: usize,
}

impl TrialLayout {
    pub fn new(mesh: &Mesh, degrees: &DegreeMap, element: usize) -> Self {
        let p = degrees.element[element];
        let m = (p + 1) * (p + 1);
        let mut offset = 5 * m;
        let mut sides: Vec<SideLayout> = Vec::with_capacity(4);
        for s in 0..4 {
            let master = mesh.trace_master(element, s);
            let q = degrees.edge[master] + 1;
            sides.push(SideLayout { master, trace_degree: q, trace_offset: offset, segments: Vec::new() });
            offset += 2 * (q + 1);
        }
        for (s, side) in sides.iter_mut().enumerate() {
            for seg in mesh.side_segments(element, s) {
                let pe = degrees.edge[seg.edge];
                let adj = mesh.adjacent_active(seg.edge);
                let sign = if mesh.edges[seg.edge].boundary || adj.first() == Some(&element) { 1.0 } else { -1.0 };
                side.segments.push(FluxSegment { edge: seg.edge, s_range: seg.s_range, degree: pe, sign, offset });
                offset += 2 * (pe + 1);
            }
        }
        let sides: [SideLayout; 4] = sides.try_into().expect("four sides");
        TrialLayout { element, degree: p, sides, n_trial: offset }
    }

    pub fn n_scalar(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    /// Number of interior (stress and displacement) unknowns.
    pub fn n_interior(&self) -> usize {
        5 * self.n_scalar()
    }

    pub fn sigma_offset(&self, component: usize) -> usize {
        component * self.n_scalar()
    }

    pub fn u_offset(&self, component: usize) -> usize {
        (3 + component) * self.n_scalar()
    }
}

/// Test space of one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalTestSpace {
    pub element: usize,
    pub degree: usize,
}

impl LocalTestSpace {
    pub fn n_scalar(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn dim(&self) -> usize {
        5 * self.n_scalar()
    }

    /// Test vector of the constant field `(tau, v) = (c I, 0)`.
    pub fn identity_tau(&self, c: f64) -> DVector<f64> {
        let n = self.n_scalar();
        let one = q_coefficients_of_one(self.degree);
        let mut out = DVector::zeros(self.dim());
        for a in 0..n {
            out[a] = c * one[a];
            out[2 * n + a] = c * one[a];
        }
        out
    }
}

/// Physical gradients and integration weight at one reference point.
struct Geometry {
    x: [f64; 2],
    weight: f64,
    inv: [[f64; 2]; 2],
}

fn geometry(mesh: &Mesh, element: usize, xi: f64, eta: f64, w: f64) -> Result<Geometry> {
    let (x, j) = mesh.map_point(element, xi, eta);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det > 1e-300) {
        return Err(Error::DegenerateJacobian(element));
    }
    // rows give d(xi)/dx and d(eta)/dx ... as grad_x = inv^T grad_ref
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    Ok(Geometry { x, weight: w * det, inv })
}

fn phys_grad(inv: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    // grad_x phi = J^{-T} grad_ref phi
    [inv[0][0] * g[0] + inv[1][0] * g[1], inv[0][1] * g[0] + inv[1][1] * g[1]]
}

/// Gram matrix of the broken test norm on `element` with test degree `degree`.
pub fn local_gram(mesh: &Mesh, element: usize, degree: usize) -> Result<DMatrix<f64>> {
    if !mesh.is_active(element) {
        return Err(Error::InactiveElement(element));
    }
    let n = (degree + 1) * (degree + 1);
    let rule = gauss_rule(degree + 2);
    let mut mass = DMatrix::zeros(n, n);
    let mut sxx = DMatrix::zeros(n, n);
    let mut sxy = DMatrix::zeros(n, n);
    let mut syy = DMatrix::zeros(n, n);
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for ([xi, eta], w) in rule.tensor() {
        let geo = geometry(mesh, element, xi, eta, w)?;
        let q = q_basis_eval(degree, xi, eta);
        for a in 0..n {
            let g = phys_grad(&geo.inv, q.grads[a]);
            gx[a] = g[0];
            gy[a] = g[1];
        }
        let wt = geo.weight;
        for b in 0..n {
            let (vb, xb, yb) = (wt * q.values[b], wt * gx[b], wt * gy[b]);
            for a in 0..n {
                mass[(a, b)] += q.values[a] * vb;
                sxx[(a, b)] += gx[a] * xb;
                sxy[(a, b)] += gx[a] * yb;
                syy[(a, b)] += gy[a] * yb;
            }
        }
    }
    let syx = sxy.transpose();
    let mut g = DMatrix::zeros(5 * n, 5 * n);
    let mut put = |i: usize, j: usize, blk: &DMatrix<f64>| {
        g.view_mut((i * n, j * n), (n, n)).copy_from(blk);
    };
    put(0, 0, &(&mass + &sxx));
    put(0, 1, &sxy);
    put(1, 0, &syx);
    put(1, 1, &(&mass * 2.0 + &sxx + &syy));
    put(1, 2, &sxy);
    put(2, 1, &syx);
    put(2, 2, &(&mass + &syy));
    let hv = &mass + &sxx + &syy;
    put(3, 3, &hv);
    put(4, 4, &hv);
    Ok(g)
}

/// Coupling matrix `B[i, j] = b(e_j, t_i)` on `element` and the load
/// `l[i] = -(f, v_i)` (the body force enters as `div sigma = f`).
pub fn local_bmat<F>(
    mesh: &Mesh,
    degrees: &DegreeMap,
    element: usize,
    material: &Material,
    body_force: F,
) -> Result<(DMatrix<f64>, DVector<f64>, TrialLayout)>
where
    F: Fn(f64, f64) -> [f64; 2],
{
    if !mesh.is_active(element) {
        return Err(Error::InactiveElement(element));
    }
    let layout = TrialLayout::new(mesh, degrees, element);
    let p = layout.degree;
    let pt = degrees.test_degree(element);
    let n = (pt + 1) * (pt + 1);
    let m = layout.n_scalar();
    let mut b = DMatrix::zeros(5 * n, layout.n_trial);
    let mut load = DVector::zeros(5 * n);

    // volume terms
    let rule = gauss_rule(pt + 2);
    let mut mt = DMatrix::zeros(n, m);
    let mut dx = DMatrix::zeros(n, m);
    let mut dy = DMatrix::zeros(n, m);
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    for ([xi, eta], w) in rule.tensor() {
        let geo = geometry(mesh, element, xi, eta, w)?;
        let test = q_basis_eval(pt, xi, eta);
        let trial = q_basis_eval(p, xi, eta);
        for a in 0..n {
            let g = phys_grad(&geo.inv, test.grads[a]);
            gx[a] = g[0];
            gy[a] = g[1];
        }
        let wt = geo.weight;
        for c in 0..m {
            let phi = wt * trial.values[c];
            for a in 0..n {
                mt[(a, c)] += test.values[a] * phi;
                dx[(a, c)] += gx[a] * phi;
                dy[(a, c)] += gy[a] * phi;
            }
        }
        let f = body_force(geo.x[0], geo.x[1]);
        for a in 0..n {
            let v = wt * test.values[a];
            load[3 * n + a] -= f[0] * v;
            load[4 * n + a] -= f[1] * v;
        }
    }
    let (cs, cc, csh) = material.symmetric_coupling();
    let (s11, s12, s22) = (layout.sigma_offset(0), layout.sigma_offset(1), layout.sigma_offset(2));
    let (u1, u2) = (layout.u_offset(0), layout.u_offset(1));
    let mut add = |row_blk: usize, col: usize, scale: f64, blk: &DMatrix<f64>| {
        let mut view = b.view_mut((row_blk * n, col), (n, m));
        view += blk * scale;
    };
    add(0, s11, cs, &mt);
    add(0, s22, cc, &mt);
    add(2, s22, cs, &mt);
    add(2, s11, cc, &mt);
    add(1, s12, csh, &mt);
    add(0, u1, 1.0, &dx);
    add(1, u1, 1.0, &dy);
    add(1, u2, 1.0, &dx);
    add(2, u2, 1.0, &dy);
    add(3, s11, 1.0, &dx);
    add(3, s12, 1.0, &dy);
    add(4, s12, 1.0, &dx);
    add(4, s22, 1.0, &dy);

    // side terms, integrated segment by segment
    for s in 0..4 {
        let side = &layout.sides[s];
        let (va, vb) = mesh.side_endpoints(element, s);
        let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = d[0].hypot(d[1]);
        let normal = [d[1] / len, -d[0] / len];
        let q = side.trace_degree;
        for seg in &side.segments {
            let npts = pt.max(q).max(seg.degree) + 2;
            let rule = gauss_rule(npts);
            let half = 0.5 * (seg.s_range[1] - seg.s_range[0]);
            let mid = 0.5 * (seg.s_range[1] + seg.s_range[0]);
            for (&r, &w) in rule.points.iter().zip(&rule.weights) {
                let sp = mid + half * r;
                let ds = w * half * 0.5 * len;
                let [xi, eta] = Mesh::side_reference_point(s, sp);
                let (x, _) = mesh.map_point(element, xi, eta);
                let test = q_basis_eval(pt, xi, eta);
                let trace = edge_basis_eval(q, sp);
                let flux = edge_basis_eval(seg.degree, mesh.edge_param(seg.edge, x));
                let (to, fo) = (side.trace_offset, seg.offset);
                for a in 0..n {
                    let psi = test.values[a] * ds;
                    for (k, &th) in trace.iter().enumerate() {
                        let v = psi * th;
                        b[(a, to + k)] -= normal[0] * v;
                        b[(n + a, to + k)] -= normal[1] * v;
                        b[(n + a, to + q + 1 + k)] -= normal[0] * v;
                        b[(2 * n + a, to + q + 1 + k)] -= normal[1] * v;
                    }
                    for (k, &chi) in flux.iter().enumerate() {
                        let v = seg.sign * psi * chi;
                        b[(3 * n + a, fo + k)] -= v;
                        b[(4 * n + a, fo + seg.degree + 1 + k)] -= v;
                    }
                }
            }
        }
    }
    Ok((b, load, layout))
}

/// Gram matrix, coupling matrix and load of one element together with the
/// Cholesky factor of the Gram matrix.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub test: LocalTestSpace,
    pub layout: TrialLayout,
    pub gram: DMatrix<f64>,
    pub bmat: DMatrix<f64>,
    pub load: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LocalSystem {
    pub fn build<F>(
        mesh: &Mesh,
        degrees: &DegreeMap,
        element: usize,
        material: &Material,
        body_force: F,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> [f64; 2],
    {
        let degree = degrees.test_degree(element);
        let gram = local_gram(mesh, element, degree)?;
        let (bmat, load, layout) = local_bmat(mesh, degrees, element, material, body_force)?;
        let chol = Cholesky::new(gram.clone()).ok_or(Error::GramNotSpd { element })?;
        Ok(LocalSystem { test: LocalTestSpace { element, degree }, layout, gram, bmat, load, chol })
    }

    /// `(B^T G^{-1} B, B^T G^{-1} l)`.
    pub fn stiffness(&self) -> (DMatrix<f64>, DVector<f64>) {
        let w = self.chol.l_dirty().solve_lower_triangular(&self.bmat).expect("nonsingular factor");
        let wl = self.chol.l_dirty().solve_lower_triangular(&self.load).expect("nonsingular factor");
        let k = w.tr_mul(&w);
        let k = (&k + k.transpose()) * 0.5;
        (k, w.tr_mul(&wl))
    }

    /// Solve `G t = rhs` in the test space.
    pub fn solve_gram(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// Optimal test functions (as columns) of the given local trial vectors.
    pub fn optimal_test(&self, trial: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(&(&self.bmat * trial))
    }

    /// Riesz representative of the local residual and its norm.
    pub fn error_representation(&self, x_loc: &DVector<f64>) -> (DVector<f64>, f64) {
        let r = &self.load - &self.bmat * x_loc;
        let e = self.chol.solve(&r);
        let eta2 = e.dot(&(&self.gram * &e)).max(0.0);
        (e, eta2.sqrt())
    }
}

/// Local stiffness from explicit matrices: `(B^T G^{-1} B, B^T G^{-1} l)`.
pub fn local_stiffness(
    gram: &DMatrix<f64>,
    bmat: &DMatrix<f64>,
    load: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let chol = Cholesky::new(gram.clone()).ok_or(Error::GramNotSpd { element: usize::MAX })?;
    let w = chol.l_dirty().solve_lower_triangular(bmat).expect("nonsingular factor");
    let wl = chol.l_dirty().solve_lower_triangular(load).expect("nonsingular factor");
    let k = w.tr_mul(&w);
    Ok(((&k + k.transpose()) * 0.5, w.tr_mul(&wl)))
}

/// Error representation `e = G^{-1}(l - B x)` and `eta = sqrt(e^T G e)`.
pub fn error_representation(
    gram: &DMatrix<f64>,
    bmat: &DMatrix<f64>,
    load: &DVector<f64>,
    x_loc: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let chol = Cholesky::new(gram.clone()).ok_or(Error::GramNotSpd { element: usize::MAX })?;
    let r = load - bmat * x_loc;
    let e = chol.solve(&r);
    let eta2 = e.dot(&(gram * &e)).max(0.0);
    Ok((e, eta2.sqrt()))
}

/// Local trial vector of `sigma = I`, `u = 0`, `u_hat = 0`, flux `= I n`.
pub fn identity_stress_trial(mesh: &Mesh, layout: &TrialLayout) -> DVector<f64> {
    let mut x = DVector::zeros(layout.n_trial);
    let one = q_coefficients_of_one(layout.degree);
    let m = layout.n_scalar();
    for a in 0..m {
        x[layout.sigma_offset(0) + a] = one[a];
        x[layout.sigma_offset(2) + a] = one[a];
    }
    for (s, side) in layout.sides.iter().enumerate() {
        let (va, vb) = mesh.side_endpoints(layout.element, s);
        let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = d[0].hypot(d[1]);
        let outward = [d[1] / len, -d[0] / len];
        for seg in &side.segments {
            // global normal = sign * outward; constant has vertex coefficients 1
            let ones = if seg.degree == 0 { vec![0] } else { vec![0, 1] };
            for c in 0..2 {
                for &k in &ones {
                    x[seg.offset + c * (seg.degree + 1) + k] = seg.sign * outward[c];
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;
    use nalgebra::SymmetricEigen;

    fn unit() -> Mesh {
        Mesh::build_initial(Domain::UnitSquare, 1).unwrap()
    }

    fn sheared() -> Mesh {
        let mut m = unit();
        m.vertices = vec![[0.0, 0.0], [1.0, 0.1], [1.4, 1.2], [0.3, 0.9]];
        m.elements[0].vertices = [0, 1, 2, 3];
        m
    }

    #[test]
    fn gram_of_identity_tau() {
        let m = unit();
        let g = local_gram(&m, 0, 3).unwrap();
        let t = LocalTestSpace { element: 0, degree: 3 }.identity_tau(1.0);
        let v = t.dot(&(&g * &t));
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gram_symmetric_on_sheared_quad() {
        let m = sheared();
        m.validate().unwrap();
        let g = local_gram(&m, 0, 3).unwrap();
        assert!((&g - g.transpose()).amax() < 1e-13 * g.amax());
    }

    #[test]
    fn gram_positive_definite() {
        let m = unit();
        let g = local_gram(&m, 0, 4).unwrap();
        let eig = SymmetricEigen::new(g.clone());
        assert!(eig.eigenvalues.min() > 0.0);
        for d in 1..=8 {
            assert!(Cholesky::new(local_gram(&m, 0, d).unwrap()).is_some(), "degree {d}");
            assert!(Cholesky::new(local_gram(&sheared(), 0, d).unwrap()).is_some(), "degree {d}");
        }
    }

    #[test]
    fn compliance_entry_of_identity() {
        let m = unit();
        let d = DegreeMap::uniform(&m, 1, 2).unwrap();
        let mat = Material::isotropic(0.0, 0.5).unwrap();
        let (b, l, layout) = local_bmat(&m, &d, 0, &mat, |_, _| [0.0; 2]).unwrap();
        assert!(l.amax() == 0.0);
        let test = LocalTestSpace { element: 0, degree: 3 }.identity_tau(1.0);
        let mut trial = DVector::zeros(layout.n_trial);
        let one = q_coefficients_of_one(1);
        for a in 0..4 {
            trial[layout.sigma_offset(0) + a] = one[a];
            trial[layout.sigma_offset(2) + a] = one[a];
        }
        // (A I, I)_K = tr(A I) |K| = 2
        assert!((test.dot(&(&b * &trial)) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn constant_trace_against_identity_tau() {
        let m = Mesh::build_initial(Domain::UnitSquare, 3).unwrap();
        let d = DegreeMap::uniform(&m, 1, 2).unwrap();
        let mat = Material::isotropic(1.0, 1.0).unwrap();
        let k = 4; // interior element
        let (b, _, layout) = local_bmat(&m, &d, k, &mat, |_, _| [0.0; 2]).unwrap();
        let test = LocalTestSpace { element: k, degree: 3 }.identity_tau(1.0);
        let mut trial = DVector::zeros(layout.n_trial);
        for side in &layout.sides {
            // u_hat = (1, 0): vertex coefficients of component 1
            trial[side.trace_offset] = 1.0;
            trial[side.trace_offset + 1] = 1.0;
        }
        assert!(test.dot(&(&b * &trial)).abs() < 1e-14);
    }

    #[test]
    fn zero_coupling_gives_zero_stiffness() {
        let g = local_gram(&unit(), 0, 2).unwrap();
        let b = DMatrix::zeros(g.nrows(), 7);
        let (k, f) = local_stiffness(&g, &b, &DVector::zeros(g.nrows())).unwrap();
        assert_eq!(k.amax(), 0.0);
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn stiffness_matches_two_step_formula() {
        let m = sheared();
        let d = DegreeMap::uniform(&m, 2, 2).unwrap();
        let mat = Material::isotropic(2.0, 0.6).unwrap();
        let sys = LocalSystem::build(&m, &d, 0, &mat, |x, y| [x + y, x * y]).unwrap();
        let (k, f) = sys.stiffness();
        let t = sys.gram.clone().cholesky().unwrap().solve(&sys.bmat);
        let k2 = sys.bmat.transpose() * &t;
        let f2 = t.transpose() * &sys.load;
        let scale = k.amax();
        assert!((&k - &k2).amax() < 1e-12 * scale);
        assert!((&f - &f2).amax() < 1e-12 * (1.0 + f.amax()));
        assert!((&k - k.transpose()).amax() <= 1e-12 * scale);
        // single trial column: positive
        let col = sys.bmat.column(3).into_owned();
        let (k1, _) = local_stiffness(&sys.gram, &DMatrix::from_column_slice(col.len(), 1, col.as_slice()), &sys.load).unwrap();
        assert!(k1[(0, 0)] > 0.0);
    }

    #[test]
    fn stiffness_invariant_under_orthogonal_test_mix() {
        use rand::{Rng, SeedableRng};
        let m = unit();
        let d = DegreeMap::uniform(&m, 1, 1).unwrap();
        let mat = Material::isotropic(1.0, 1.0).unwrap();
        let sys = LocalSystem::build(&m, &d, 0, &mat, |_, _| [1.0, 0.0]).unwrap();
        let n = sys.gram.nrows();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let r = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = r.qr().q();
        let g2 = q.transpose() * &sys.gram * &q;
        let b2 = q.transpose() * &sys.bmat;
        let l2 = q.transpose() * &sys.load;
        let (k1, f1) = sys.stiffness();
        let (k2, f2) = local_stiffness(&g2, &b2, &l2).unwrap();
        assert!((&k1 - &k2).amax() < 1e-10 * k1.amax());
        assert!((&f1 - &f2).amax() < 1e-10 * (1.0 + f1.amax()));
    }

    #[test]
    fn error_representation_basic_cases() {
        let g = local_gram(&unit(), 0, 2).unwrap();
        let n = g.nrows();
        let b = DMatrix::from_fn(n, 5, |i, j| ((i * 3 + j * 7) % 5) as f64 - 2.0);
        let (e, eta) = error_representation(&g, &b, &DVector::zeros(n), &DVector::zeros(5)).unwrap();
        assert_eq!(eta, 0.0);
        assert_eq!(e.amax(), 0.0);
    }

    #[test]
    fn error_indicator_is_a_dual_norm() {
        // eta^2 = max_t (r . t)^2 / (t^T G t), checked by a generalized eigen oracle
        let m = sheared();
        let d = DegreeMap::uniform(&m, 0 + 1, 1).unwrap();
        let mat = Material::isotropic(1.0, 0.7).unwrap();
        let sys = LocalSystem::build(&m, &d, 0, &mat, |x, _| [x, 1.0]).unwrap();
        let x = DVector::from_fn(sys.layout.n_trial, |i, _| ((i % 7) as f64 - 3.0) * 0.1);
        let (_, eta) = sys.error_representation(&x);
        let r = &sys.load - &sys.bmat * &x;
        // G = V D V^T; maximize (r.t)^2/(t G t) = r^T G^{-1} r = sum (v_i.r)^2/d_i
        let eig = SymmetricEigen::new(sys.gram.clone());
        let mut dual = 0.0;
        for i in 0..eig.eigenvalues.len() {
            let c = eig.eigenvectors.column(i).dot(&r);
            dual += c * c / eig.eigenvalues[i];
        }
        assert!((eta * eta - dual).abs() < 1e-10 * dual.max(1.0));
    }

    #[test]
    fn identity_stress_gives_scaled_identity_test_function() {
        // one homogeneous element: T(I, 0, 0, I n) = (Q0 I, 0)
        let m = unit();
        let d = DegreeMap::uniform(&m, 1, 2).unwrap();
        let mat = Material::isotropic(2.0, 0.8).unwrap();
        let sys = LocalSystem::build(&m, &d, 0, &mat, |_, _| [0.0; 2]).unwrap();
        let trial = identity_stress_trial(&m, &sys.layout);
        let t = sys.optimal_test(&DMatrix::from_column_slice(trial.len(), 1, trial.as_slice()));
        let want = sys.test.identity_tau(mat.q0);
        assert!((t.column(0) - want).amax() < 1e-11);
    }
}
