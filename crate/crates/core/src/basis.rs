//! Hierarchical shape functions and Gauss-Legendre quadrature on the
//! reference interval [-1, 1] and the reference square [-1, 1]^2.
//!
//! The 1D family is the usual integrated-Legendre one:
//!
//! ```text
//! phi_0(t) = (1 - t) / 2,   phi_1(t) = (1 + t) / 2,
//! phi_k(t) = (L_k(t) - L_{k-2}(t)) / sqrt(2 (2k - 1)),   k >= 2
//! ```
//!
//! so `phi_k(-t) = (-1)^k phi_k(t)` for the bubbles and every degree-p space is
//! nested in the degree-(p+1) one. Degree 0 is the single constant function.
//! The 2D basis of `Q_{p,p}` is the tensor product with index `i + (p + 1) j`
//! for `phi_i(xi) phi_j(eta)`.

use std::f64::consts::PI;

/// Quadrature points and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Tensor rule on [-1, 1]^2 as `((xi, eta), weight)` triples, xi fastest.
    pub fn tensor(&self) -> Vec<([f64; 2], f64)> {
        let mut out = Vec::with_capacity(self.len() * self.len());
        for (&eta, &w_eta) in self.points.iter().zip(&self.weights) {
            for (&xi, &w_xi) in self.points.iter().zip(&self.weights) {
                out.push(([xi, eta], w_xi * w_eta));
            }
        }
        out
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

/// Legendre polynomial `L_n(x)` and its derivative by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    // derivative from n (x L_n - L_{n-1}) / (x^2 - 1), fine away from the endpoints
    let nf = n as f64;
    let dp = if (x * x - 1.0).abs() > 1e-14 {
        nf * (x * p1 - p0) / (x * x - 1.0)
    } else {
        let s = if x > 0.0 { 1.0 } else if n % 2 == 0 { -1.0 } else { 1.0 };
        s * nf * (nf + 1.0) / 2.0
    };
    (p1, dp)
}

/// n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_rule(n: usize) -> QuadratureRule {
    assert!(n >= 1, "gauss_rule needs at least one point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    QuadratureRule { points, weights }
}

/// Values and derivatives of the p+1 hierarchical functions at `t`.
pub fn hierarchical_1d(p: usize, t: f64, vals: &mut [f64], ders: &mut [f64]) {
    debug_assert!(vals.len() > p && ders.len() > p);
    if p == 0 {
        vals[0] = 1.0;
        ders[0] = 0.0;
        return;
    }
    vals[0] = 0.5 * (1.0 - t);
    ders[0] = -0.5;
    vals[1] = 0.5 * (1.0 + t);
    ders[1] = 0.5;
    if p < 2 {
        return;
    }
    // Legendre values L_0..L_p
    let mut leg = vec![0.0; p + 1];
    leg[0] = 1.0;
    leg[1] = t;
    for k in 2..=p {
        let kf = k as f64;
        leg[k] = ((2.0 * kf - 1.0) * t * leg[k - 1] - (kf - 1.0) * leg[k - 2]) / kf;
    }
    for k in 2..=p {
        let kf = k as f64;
        vals[k] = (leg[k] - leg[k - 2]) / (2.0 * (2.0 * kf - 1.0)).sqrt();
        ders[k] = ((2.0 * kf - 1.0) / 2.0).sqrt() * leg[k - 1];
    }
}

/// The p+1 edge functions of `P_p` at `t`.
pub fn edge_basis_eval(p: usize, t: f64) -> Vec<f64> {
    let mut v = vec![0.0; p + 1];
    let mut d = vec![0.0; p + 1];
    hierarchical_1d(p, t, &mut v, &mut d);
    v
}

/// Values and reference gradients of the (p+1)^2 functions of `Q_{p,p}`.
#[derive(Debug, Clone)]
pub struct QValues {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

pub fn q_basis_eval(p: usize, xi: f64, eta: f64) -> QValues {
    let n = p + 1;
    let (mut vx, mut dx, mut vy, mut dy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    hierarchical_1d(p, xi, &mut vx, &mut dx);
    hierarchical_1d(p, eta, &mut vy, &mut dy);
    let mut values = Vec::with_capacity(n * n);
    let mut grads = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            values.push(vx[i] * vy[j]);
            grads.push([dx[i] * vy[j], vx[i] * dy[j]]);
        }
    }
    QValues { values, grads }
}

/// Coefficients of the constant function 1 in the `Q_{p,p}` basis.
pub fn q_coefficients_of_one(p: usize) -> Vec<f64> {
    let n = p + 1;
    let mut c = vec![0.0; n * n];
    if p == 0 {
        c[0] = 1.0;
    } else {
        for j in 0..2 {
            for i in 0..2 {
                c[i + n * j] = 1.0;
            }
        }
    }
    c
}

/// Tabulated values and reference gradients of the `Q_{p,p}` basis at a set
/// of reference points.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl ShapeTable {
    pub fn new(degree: usize, points: &[[f64; 2]]) -> Self {
        let mut values = Vec::with_capacity(points.len());
        let mut grads = Vec::with_capacity(points.len());
        for pt in points {
            let q = q_basis_eval(degree, pt[0], pt[1]);
            values.push(q.values);
            grads.push(q.grads);
        }
        ShapeTable { degree, points: points.to_vec(), values, grads }
    }

    pub fn dim(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }
}

/// Matrix `T` with `phi_j^{(q)}(t(s)) = sum_i T[i][j] phi_i^{(q)}(s)` where
/// `t(s)` is the affine map sending -1 to `t_start` and 1 to `t_end`.
///
/// Used to express a parent-edge polynomial on a sub-edge (or on a
/// reversed edge) in the sub-edge's own hierarchical basis.
pub fn transfer_matrix(q: usize, t_start: f64, t_end: f64) -> nalgebra::DMatrix<f64> {
    let n = q + 1;
    let map = |s: f64| t_start + 0.5 * (s + 1.0) * (t_end - t_start);
    let mut out = nalgebra::DMatrix::zeros(n, n);
    if q == 0 {
        out[(0, 0)] = 1.0;
        return out;
    }
    let rule = gauss_rule(q + 2);
    // bubble mass matrix on [-1, 1]
    let nb = n - 2;
    let mut mass = nalgebra::DMatrix::zeros(nb, nb);
    let mut vals = vec![0.0; n];
    let mut ders = vec![0.0; n];
    for (&s, &w) in rule.points.iter().zip(&rule.weights) {
        hierarchical_1d(q, s, &mut vals, &mut ders);
        for a in 0..nb {
            for b in 0..nb {
                mass[(a, b)] += w * vals[a + 2] * vals[b + 2];
            }
        }
    }
    let mass_chol = if nb > 0 { mass.clone().cholesky() } else { None };
    let mut parent = vec![0.0; n];
    for j in 0..n {
        hierarchical_1d(q, map(-1.0), &mut parent, &mut ders);
        let left = parent[j];
        hierarchical_1d(q, map(1.0), &mut parent, &mut ders);
        let right = parent[j];
        out[(0, j)] = left;
        out[(1, j)] = right;
        if nb == 0 {
            continue;
        }
        let mut rhs = nalgebra::DVector::zeros(nb);
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            hierarchical_1d(q, map(s), &mut parent, &mut ders);
            let fval = parent[j];
            hierarchical_1d(q, s, &mut vals, &mut ders);
            let resid = fval - left * vals[0] - right * vals[1];
            for a in 0..nb {
                rhs[a] += w * resid * vals[a + 2];
            }
        }
        let coef = mass_chol.as_ref().expect("bubble mass matrix is SPD").solve(&rhs);
        for a in 0..nb {
            out[(a + 2, j)] = coef[a];
        }
    }
    out
}
