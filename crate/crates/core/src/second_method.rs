//! Second DPG method: a scalar multiplier `alpha` enforces
//! `Q0^{-1} int tr(A sigma) = 0` with test multiplier `beta`.
//!
//! Its trial-block stiffness is `E + l l^T` (`l_j = Q0^{-1} (A sigma_j, I)`)
//! bordered by one row and column for `alpha`. The bordered system is solved
//! with a single factorization of the first method's `E`: Sherman-Morrison
//! handles the rank-one term and a Schur complement handles the border.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::assembly::{expand_solution, DofKind, DofLayout, GlobalSystem};
use crate::basis::{gauss_rule, q_basis_eval};
use crate::local::LocalSystem;
use crate::material::Material;
use crate::mesh::{DegreeMap, Mesh};
use crate::sparse::SpdFactor;
use crate::{Error, Result};

/// First-method system plus the border data of the second method.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub base: GlobalSystem,
    /// `l` over the free unknowns.
    pub ell: Vec<f64>,
    /// Border column over the free unknowns.
    pub c: Vec<f64>,
    /// Border column over the pinned dofs.
    pub c_pinned: Vec<f64>,
    pub d: f64,
}

/// Trace of `A e` for the unit symmetric stress components `e11, e12, e22`.
fn compliance_traces(material: &Material) -> [f64; 3] {
    let tr = |s: [[f64; 2]; 2]| {
        let a = material.apply_compliance(&s);
        a[0][0] + a[1][1]
    };
    [
        tr([[1.0, 0.0], [0.0, 0.0]]),
        tr([[0.0, 1.0], [1.0, 0.0]]),
        tr([[0.0, 0.0], [0.0, 1.0]]),
    ]
}

/// `l_j = Q0^{-1} (A sigma_j, I)` over the extended dofs; zero off the stress block.
pub fn ell_vector(mesh: &Mesh, degrees: &DegreeMap, material: &Material, layout: &DofLayout) -> Vec<f64> {
    let traces = compliance_traces(material);
    let mut ell = vec![0.0; layout.n_total()];
    for map in &layout.maps {
        let p = degrees.element[map.element];
        let m = (p + 1) * (p + 1);
        let rule = gauss_rule(p + 2);
        let mut integrals = vec![0.0; m];
        for ([xi, eta], w) in rule.tensor() {
            let (_, j) = mesh.reference_map(map.element, xi, eta).expect("active element");
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let q = q_basis_eval(p, xi, eta);
            for a in 0..m {
                integrals[a] += w * det * q.values[a];
            }
        }
        for (c, tr) in traces.iter().enumerate() {
            for a in 0..m {
                ell[map.interior_start + c * m + a] = tr * integrals[a] / material.q0;
            }
        }
    }
    debug_assert!(layout
        .kinds
        .iter()
        .zip(&ell)
        .all(|(k, &v)| v == 0.0 || matches!(k, DofKind::Stress { .. })));
    ell
}

/// `(A I, tau_i)_K / Q0` for every test function of the element.
fn border_rhs(sys: &LocalSystem, material: &Material) -> DVector<f64> {
    let (cs, cc, _) = material.symmetric_coupling();
    let n = sys.test.n_scalar();
    // int psi_a: the tau11 block of G is M + S_xx and S_xx annihilates constants
    let one = sys.test.identity_tau(1.0);
    let integrals = sys.gram.view((0, 0), (n, n)) * one.rows(0, n);
    let mut rhs = DVector::zeros(sys.test.dim());
    for a in 0..n {
        // (A I) : tau = (c_same + c_cross) (tau11 + tau22)
        let v = (cs + cc) * integrals[a] / material.q0;
        rhs[a] = v;
        rhs[2 * n + a] = v;
    }
    rhs
}

/// Optimal test function of the `alpha` unknown on one element and its
/// contribution `r^T t` to the border diagonal.
pub fn element_border(sys: &LocalSystem, material: &Material) -> (DVector<f64>, f64) {
    let rhs = border_rhs(sys, material);
    let t = sys.solve_gram(&rhs);
    let d = rhs.dot(&t);
    (t, d)
}

/// Border column `c` and diagonal `d` of the bordered system.
pub fn border_terms<F>(
    mesh: &Mesh,
    degrees: &DegreeMap,
    material: &Material,
    f: F,
    layout: &DofLayout,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64, f64) -> [f64; 2] + Sync,
{
    let parts: Vec<Result<(Vec<f64>, f64)>> = layout
        .maps
        .par_iter()
        .map(|map| {
            let sys = LocalSystem::build(mesh, degrees, map.element, material, &f)?;
            let (t, d) = element_border(&sys, material);
            let local_c = sys.bmat.tr_mul(&t);
            let mut cg = vec![0.0; map.globals.len()];
            for (i, exp) in map.expansion.iter().enumerate() {
                for &(g, w) in exp {
                    cg[g] += w * local_c[i];
                }
            }
            Ok((cg, d))
        })
        .collect();
    let mut c = vec![0.0; layout.n_total()];
    let mut d = 0.0;
    for (map, part) in layout.maps.iter().zip(parts) {
        let (cg, dk) = part?;
        for (g, v) in map.globals.iter().zip(cg) {
            c[*g] += v;
        }
        d += dk;
    }
    Ok((c, d))
}

/// Attach the border data to an assembled (uncondensed) first-method system.
pub fn build_bordered<F>(
    base: GlobalSystem,
    mesh: &Mesh,
    degrees: &DegreeMap,
    material: &Material,
    f: F,
    layout: &DofLayout,
) -> Result<BorderedSystem>
where
    F: Fn(f64, f64) -> [f64; 2] + Sync,
{
    if base.is_condensed() {
        return Err(Error::Layout("the second method needs the uncondensed system".into()));
    }
    let ell = ell_vector(mesh, degrees, material, layout);
    let (c, d) = border_terms(mesh, degrees, material, f, layout)?;
    let nf = layout.n_free;
    Ok(BorderedSystem {
        base,
        ell: ell[..nf].to_vec(),
        c: c[..nf].to_vec(),
        c_pinned: c[nf..].to_vec(),
        d,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `[E + l l^T, c; c^T, d] [x; alpha] = [g; h]` given a solver for `E`.
///
/// Uses exactly three applications of `solve` (for `l`, `c` and `g`).
pub fn bordered_solve(
    solve: impl Fn(&[f64]) -> Vec<f64>,
    ell: &[f64],
    c: &[f64],
    d: f64,
    g: &[f64],
    h: f64,
) -> Result<(Vec<f64>, f64)> {
    let y_l = solve(ell);
    let y_c = solve(c);
    let y_g = solve(g);
    let a = 1.0 / (1.0 + dot(ell, &y_l));
    // (E + l l^T)^{-1} v = E^{-1} v - a (l . E^{-1} v) E^{-1} l
    let sm = |y: &[f64]| -> Vec<f64> {
        let s = a * dot(ell, y);
        y.iter().zip(&y_l).map(|(yi, li)| yi - s * li).collect()
    };
    let x_c = sm(&y_c);
    let x_g = sm(&y_g);
    let schur = d - dot(c, &x_c);
    if !(schur.abs() > 1e-14 * d.abs().max(1e-300)) {
        return Err(Error::BorderBreakdown(schur));
    }
    let alpha = (h - dot(c, &x_g)) / schur;
    let x = x_g.iter().zip(&x_c).map(|(g, c)| g - c * alpha).collect();
    Ok((x, alpha))
}

/// Solve the second method; returns the extended coefficient vector and `alpha`.
pub fn solve_second_method(bordered: &BorderedSystem, layout: &DofLayout) -> Result<(Vec<f64>, f64)> {
    let base = &bordered.base;
    let factor = SpdFactor::new(&base.matrix)?;
    let g = base.effective_rhs();
    let h = -dot(&bordered.c_pinned, &base.pinned_values);
    let (x, alpha) = bordered_solve(|v| factor.solve(v), &bordered.ell, &bordered.c, bordered.d, &g, h)?;
    Ok((expand_solution(base, layout, &x), alpha))
}
