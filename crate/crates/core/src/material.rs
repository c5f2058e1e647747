//! Homogeneous isotropic compliance in the deviatoric/volumetric split
//!
//! ```text
//! A tau = P tau_D + Q tr(tau) / N I,   tau_D = tau - tr(tau) / N I
//! ```
//!
//! valid for every (possibly nonsymmetric) 2x2 matrix, so skew parts are
//! scaled by `P`.

use crate::{Error, Result};

/// Spatial dimension of every problem handled here.
pub const DIM: usize = 2;

/// 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

/// How the 2D compliance is obtained from the Lame pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaneModel {
    /// `A tau = (tau - nu tr(tau) I) / (2 mu)`, nu = lambda / (2 (lambda + mu)).
    #[default]
    Strain,
    /// `A tau = (tau - nu / (1 + nu) tr(tau) I) / (2 mu)`.
    Stress,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub lambda: f64,
    pub mu: f64,
    pub model: PlaneModel,
    /// Coefficient of the deviatoric part.
    pub p: f64,
    /// Coefficient of the spherical part.
    pub q: f64,
    /// Essential infimum of `Q` (constant here).
    pub q0: f64,
    /// `||Q||_inf / Q0`, always 1 for homogeneous material.
    pub b_const: f64,
    /// Essential infimum of `P`.
    pub p0: f64,
    /// Poisson ratio `lambda / (2 (lambda + mu))`.
    pub nu: f64,
}

impl Material {
    /// Plane-strain isotropic material.
    pub fn isotropic(lambda: f64, mu: f64) -> Result<Self> {
        Self::with_model(lambda, mu, PlaneModel::Strain)
    }

    pub fn with_model(lambda: f64, mu: f64, model: PlaneModel) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidMaterial(format!("shear modulus must be positive, got {mu}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidMaterial(format!("lambda must be nonnegative, got {lambda}")));
        }
        let nu = lambda / (2.0 * (lambda + mu));
        let p = 1.0 / (2.0 * mu);
        let kappa = match model {
            PlaneModel::Strain => nu,
            PlaneModel::Stress => nu / (1.0 + nu),
        };
        // (tau - kappa tr tau I)/(2mu) = P tau_D + P (1 - N kappa) tr tau / N I
        let q = p * (1.0 - DIM as f64 * kappa);
        Ok(Material { lambda, mu, model, p, q, q0: q, b_const: 1.0, p0: p, nu })
    }

    /// Lame pair with the given Poisson ratio (plane strain).
    pub fn from_poisson(nu: f64, mu: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&nu) {
            return Err(Error::InvalidMaterial(format!("Poisson ratio must lie in [0, 0.5), got {nu}")));
        }
        Self::isotropic(2.0 * nu * mu / (1.0 - 2.0 * nu), mu)
    }

    /// Trace coupling `kappa` in `A tau = (tau - kappa tr(tau) I) / (2 mu)`.
    pub fn kappa(&self) -> f64 {
        match self.model {
            PlaneModel::Strain => self.nu,
            PlaneModel::Stress => self.nu / (1.0 + self.nu),
        }
    }

    /// Effective first Lame parameter of the inverse map `eps -> sigma`.
    pub fn lambda_eff(&self) -> f64 {
        let k = self.kappa();
        2.0 * self.mu * k / (1.0 - 2.0 * k)
    }

    pub fn apply_compliance(&self, tau: &Mat2) -> Mat2 {
        let tr = tau[0][0] + tau[1][1];
        let sph = (self.q - self.p) * tr / DIM as f64;
        [
            [self.p * tau[0][0] + sph, self.p * tau[0][1]],
            [self.p * tau[1][0], self.p * tau[1][1] + sph],
        ]
    }

    /// Inverse of the compliance restricted to symmetric strains.
    pub fn stress_from_strain(&self, eps: &Mat2) -> Mat2 {
        let tr = eps[0][0] + eps[1][1];
        let l = self.lambda_eff();
        [
            [2.0 * self.mu * eps[0][0] + l * tr, 2.0 * self.mu * eps[0][1]],
            [2.0 * self.mu * eps[1][0], 2.0 * self.mu * eps[1][1] + l * tr],
        ]
    }

    /// Coefficients `(c_same, c_cross, c_shear)` such that for symmetric
    /// sigma, tau stored as (11, 12, 22):
    /// `(A sigma) : tau = c_same (s11 t11 + s22 t22) + c_cross (s11 t22 + s22 t11) + c_shear s12 t12`.
    pub fn symmetric_coupling(&self) -> (f64, f64, f64) {
        let half = (self.q - self.p) / DIM as f64;
        (self.p + half, half, 2.0 * self.p)
    }
}

pub fn frobenius(a: &Mat2, b: &Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}
