//! Closed-form benchmark solutions.
//!
//! * `smooth_solution`: `u_x = u_y = sin(pi x) sin(pi y)` on the unit square,
//!   stress from the material's inverse compliance and `f = div sigma`.
//! * `lshape_solution`: the corner-singular solution on the L-shaped domain
//!   `(-1,1)^2 \ [0,1) x (-1,0]`, written in an angular coordinate measured
//!   from the bisector of the 3pi/2 corner so that the clamped reentrant edges
//!   sit at `theta = +-3pi/4`.

use std::f64::consts::PI;

use crate::material::{Mat2, Material};
use crate::{Error, Result};

/// Displacement, stress and body force at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub u: [f64; 2],
    pub sigma: Mat2,
    pub f: [f64; 2],
}

pub fn smooth_solution(material: &Material, x: f64, y: f64) -> PointValues {
    let (sx, cx) = (PI * x).sin_cos();
    let (sy, cy) = (PI * y).sin_cos();
    let w = sx * sy;
    let gx = PI * cx * sy;
    let gy = PI * sx * cy;
    // both components share the same scalar field
    let eps = [[gx, 0.5 * (gy + gx)], [0.5 * (gy + gx), gy]];
    let sigma = material.stress_from_strain(&eps);
    let l = material.lambda_eff();
    let mu = material.mu;
    let pi2 = PI * PI;
    let fc = -(3.0 * mu + l) * pi2 * sx * sy + (l + mu) * pi2 * cx * cy;
    PointValues { u: [w, w], sigma, f: [fc, fc] }
}

/// Exponent and coefficients of the L-shape corner solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LShapeParams {
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub nu: f64,
    pub mu: f64,
    /// `1 - kappa` where `A tau = (tau - kappa tr(tau) I)/(2 mu)`; equals
    /// `1 - nu/(1+nu)` for plane stress.
    pub factor: f64,
}

const OPENING: f64 = 0.75 * PI;

fn c1_of(a: f64, factor: f64) -> f64 {
    (4.0 * factor - (a + 1.0)) * ((a - 1.0) * OPENING).sin() / ((a + 1.0) * ((a + 1.0) * OPENING).sin())
}

/// Left-hand side of the transcendental equation for the exponent.
pub fn lshape_equation(a: f64, factor: f64) -> f64 {
    let c1 = c1_of(a, factor);
    c1 * ((a + 1.0) * OPENING).cos() * (a + 1.0)
        + ((a - 1.0) * OPENING).cos() * (a - 1.0)
        + 4.0 * factor * ((a - 1.0) * OPENING).cos()
}

fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let (mut fa, mut fb) = (f(a), f(b));
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs();
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    b
}

/// Corner exponent `a` in (0, 1) for the given material.
///
/// Scans (0.01, 0.999) for sign changes, refines each with Brent's method and
/// keeps the first genuine root; sign changes across the pole of `C1` are
/// rejected by their residual.
pub fn lshape_exponent(material: &Material) -> Result<f64> {
    let factor = 1.0 - material.kappa();
    if !(material.nu > 0.0 && material.nu < 0.5) {
        return Err(Error::NoRoot(format!("Poisson ratio {} outside (0, 0.5)", material.nu)));
    }
    let f = |a: f64| lshape_equation(a, factor);
    let (lo, hi) = (0.01, 0.999);
    let n = 2000;
    let mut prev = (lo, f(lo));
    for k in 1..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        let fx = f(x);
        if prev.1.is_finite() && fx.is_finite() && prev.1 * fx <= 0.0 {
            let root = brent(f, prev.0, x);
            let r = f(root);
            if r.abs() <= 1e-12 {
                return Ok(root);
            }
        }
        prev = (x, fx);
    }
    Err(Error::NoRoot("no sign change of the corner equation in (0.01, 0.999)".into()))
}

impl LShapeParams {
    pub fn new(material: &Material) -> Result<Self> {
        let a = lshape_exponent(material)?;
        let factor = 1.0 - material.kappa();
        Ok(LShapeParams {
            a,
            c1: c1_of(a, factor),
            c2: 0.0,
            c3: 1.0,
            c4: 0.0,
            nu: material.nu,
            mu: material.mu,
            factor,
        })
    }

    /// F, F', F'' at theta.
    pub fn f_derivs(&self, th: f64) -> [f64; 3] {
        let (a, c1, c2, c3, c4) = (self.a, self.c1, self.c2, self.c3, self.c4);
        let (bp, bm) = (a + 1.0, a - 1.0);
        let (sp, cp) = (bp * th).sin_cos();
        let (sm, cm) = (bm * th).sin_cos();
        [
            c1 * sp + c2 * cp + c3 * sm + c4 * cm,
            bp * (c1 * cp - c2 * sp) + bm * (c3 * cm - c4 * sm),
            -bp * bp * (c1 * sp + c2 * cp) - bm * bm * (c3 * sm + c4 * cm),
        ]
    }

    /// G, G' at theta.
    pub fn g_derivs(&self, th: f64) -> [f64; 2] {
        let (a, c3, c4) = (self.a, self.c3, self.c4);
        let bm = a - 1.0;
        let (sm, cm) = (bm * th).sin_cos();
        let k = 4.0 / bm;
        [k * (-c3 * cm + c4 * sm), k * bm * (c3 * sm + c4 * cm)]
    }

    /// Polar components `(sigma_r, sigma_theta, sigma_rtheta, u_r, u_theta)`.
    pub fn polar(&self, r: f64, th: f64) -> [f64; 5] {
        let a = self.a;
        let [f, fp, fpp] = self.f_derivs(th);
        let [g, gp] = self.g_derivs(th);
        let ra1 = r.powf(a - 1.0);
        let ra = ra1 * r;
        let s = 1.0 / (2.0 * self.mu);
        [
            ra1 * (fpp + (a + 1.0) * f),
            a * (a + 1.0) * ra1 * f,
            -a * ra1 * fp,
            s * ra * (-(a + 1.0) * f + self.factor * gp),
            s * ra * (-fp + self.factor * (a - 1.0) * g),
        ]
    }
}

/// Polar angle in (-pi/2, 3pi/2] so the L-shape interior is contiguous.
fn domain_angle(x: f64, y: f64) -> f64 {
    let phi = y.atan2(x);
    if phi <= -0.5 * PI {
        phi + 2.0 * PI
    } else {
        phi
    }
}

pub fn lshape_solution(params: &LShapeParams, x: f64, y: f64) -> Result<PointValues> {
    let r = x.hypot(y);
    if r == 0.0 {
        return Err(Error::Singular("L-shape solution evaluated at the reentrant corner".into()));
    }
    let phi = domain_angle(x, y);
    let th = phi - OPENING;
    let [sr, st, srt, ur, ut] = params.polar(r, th);
    let (s, c) = phi.sin_cos();
    // R [[sr, srt], [srt, st]] R^T with R = [[c, -s], [s, c]]
    let s11 = c * c * sr - 2.0 * c * s * srt + s * s * st;
    let s22 = s * s * sr + 2.0 * c * s * srt + c * c * st;
    let s12 = c * s * (sr - st) + (c * c - s * s) * srt;
    Ok(PointValues {
        u: [c * ur - s * ut, s * ur + c * ut],
        sigma: [[s11, s12], [s12, s22]],
        f: [0.0, 0.0],
    })
}

/// Benchmark selector with everything needed to evaluate it.
#[derive(Debug, Clone, Copy)]
pub enum ExactSolution {
    Smooth(Material),
    LShape(LShapeParams),
}

impl ExactSolution {
    pub fn eval(&self, x: f64, y: f64) -> PointValues {
        match self {
            ExactSolution::Smooth(m) => smooth_solution(m, x, y),
            ExactSolution::LShape(p) => lshape_solution(p, x, y).unwrap_or(PointValues {
                u: [0.0; 2],
                sigma: [[0.0; 2]; 2],
                f: [0.0; 2],
            }),
        }
    }

    pub fn displacement(&self, x: f64, y: f64) -> [f64; 2] {
        self.eval(x, y).u
    }

    pub fn body_force(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            ExactSolution::Smooth(m) => smooth_solution(m, x, y).f,
            ExactSolution::LShape(_) => [0.0; 2],
        }
    }

    /// Point where the stress is singular, if any.
    pub fn singular_point(&self) -> Option<[f64; 2]> {
        match self {
            ExactSolution::Smooth(_) => None,
            ExactSolution::LShape(_) => Some([0.0, 0.0]),
        }
    }

    /// True when the boundary data vanish identically.
    pub fn homogeneous_boundary(&self) -> bool {
        matches!(self, ExactSolution::Smooth(_))
    }
}
