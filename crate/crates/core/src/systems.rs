//! Concrete discrete Lagrangians with analytic derivatives, and the explicit
//! component equations for SO(3) and the heavy top, kept as independent
//! residual oracles for cross-validation against the generic solver.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::solver::DiscreteLagrangian;

/// A potential energy `V(x)` with gradient and optional Hessian.
pub trait Potential: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// `V = 0`.
pub struct FreePotential {
    dim: usize,
}

impl FreePotential {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Potential for FreePotential {
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim, self.dim))
    }
}

/// `V(x) = x^T K x / 2` with symmetric stiffness `K`.
pub struct HarmonicPotential {
    stiffness: DMatrix<f64>,
}

impl HarmonicPotential {
    pub fn new(stiffness: DMatrix<f64>) -> Result<Self> {
        if stiffness.nrows() != stiffness.ncols() {
            return Err(Error::Config("stiffness matrix must be square".into()));
        }
        if (&stiffness - stiffness.transpose()).norm() > 1e-12 * (1.0 + stiffness.norm()) {
            return Err(Error::Config("stiffness matrix must be symmetric".into()));
        }
        Ok(Self { stiffness })
    }

    pub fn scalar(k: f64) -> Self {
        Self {
            stiffness: DMatrix::from_element(1, 1, k),
        }
    }
}

impl Potential for HarmonicPotential {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.stiffness * x))
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.stiffness * x
    }
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.stiffness.clone())
    }
}

/// `V(x) = g . x` (constant force).
pub struct LinearPotential {
    slope: DVector<f64>,
}

impl LinearPotential {
    pub fn new(slope: DVector<f64>) -> Self {
        Self { slope }
    }
}

impl Potential for LinearPotential {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.slope.dot(x)
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.slope.clone()
    }
    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(x.len(), x.len()))
    }
}

fn validate_mass(mass: &DMatrix<f64>) -> Result<()> {
    if mass.nrows() != mass.ncols() {
        return Err(Error::Config("mass matrix must be square".into()));
    }
    if (mass - mass.transpose()).norm() > 1e-12 * (1.0 + mass.norm()) {
        return Err(Error::Config("mass matrix must be symmetric".into()));
    }
    let sv = mass.clone().svd(false, false).singular_values;
    let smin = sv.min();
    if !(smin > 0.0) || sv.max() / smin > 1e10 {
        return Err(Error::Config(
            "mass matrix must be invertible (condition below 1e10)".into(),
        ));
    }
    Ok(())
}

/// Midpoint discretization on the pair groupoid:
/// `L_d(x, u) = (h/2) u^T M u - h V(x + (h/2) u)`.
///
/// Its discrete Euler-Lagrange equations are the implicit midpoint rule.
pub struct MidpointLagrangian {
    mass: DMatrix<f64>,
    potential: Box<dyn Potential>,
    h: f64,
}

impl MidpointLagrangian {
    pub fn new(mass: DMatrix<f64>, potential: Box<dyn Potential>, h: f64) -> Result<Self> {
        validate_mass(&mass)?;
        if !(h > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        Ok(Self { mass, potential, h })
    }

    fn midpoint(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        x + u * (self.h * 0.5)
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
}

impl DiscreteLagrangian for MidpointLagrangian {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let m = self.midpoint(x, u);
        0.5 * self.h * u.dot(&(&self.mass * u)) - self.h * self.potential.value(&m)
    }

    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        -self.potential.gradient(&self.midpoint(x, u)) * self.h
    }

    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.mass * u * self.h
            - self.potential.gradient(&self.midpoint(x, u)) * (self.h * self.h * 0.5)
    }

    fn hess_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let hess = self.potential.hessian(&self.midpoint(x, u))?;
        Some(hess * (-self.h * self.h * 0.5))
    }

    fn hess_uu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let hess = self.potential.hessian(&self.midpoint(x, u))?;
        Some(&self.mass * self.h - hess * (self.h.powi(3) * 0.25))
    }
}

/// Trapezoidal discretization on the pair groupoid:
/// `L_d(x, u) = (h/2) u^T M u - (h/2) (V(x) + V(x + h u))`.
///
/// Its discrete Euler-Lagrange equations are the Stormer-Verlet method.
pub struct StormerVerletLagrangian {
    mass: DMatrix<f64>,
    potential: Box<dyn Potential>,
    h: f64,
}

impl StormerVerletLagrangian {
    pub fn new(mass: DMatrix<f64>, potential: Box<dyn Potential>, h: f64) -> Result<Self> {
        validate_mass(&mass)?;
        if !(h > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        Ok(Self { mass, potential, h })
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }
}

impl DiscreteLagrangian for StormerVerletLagrangian {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let y = x + u * self.h;
        0.5 * self.h * u.dot(&(&self.mass * u))
            - 0.5 * self.h * (self.potential.value(x) + self.potential.value(&y))
    }

    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let y = x + u * self.h;
        (self.potential.gradient(x) + self.potential.gradient(&y)) * (-0.5 * self.h)
    }

    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let y = x + u * self.h;
        &self.mass * u * self.h - self.potential.gradient(&y) * (0.5 * self.h * self.h)
    }

    fn hess_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let hess = self.potential.hessian(&(x + u * self.h))?;
        Some(hess * (-0.5 * self.h * self.h))
    }

    fn hess_uu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let hess = self.potential.hessian(&(x + u * self.h))?;
        Some(&self.mass * self.h - hess * (0.5 * self.h.powi(3)))
    }
}

/// Free rigid body on the Lie-group chart: `l(eta) = eta . (I eta) / 2` with
/// diagonal inertia.
pub struct RigidBodyLagrangian {
    inertia: Vector3<f64>,
}

impl RigidBodyLagrangian {
    pub fn new(inertia: Vector3<f64>) -> Result<Self> {
        if !inertia.iter().all(|i| *i > 0.0) {
            return Err(Error::Config("inertia entries must be positive".into()));
        }
        Ok(Self { inertia })
    }

    pub fn inertia(&self) -> &Vector3<f64> {
        &self.inertia
    }

    /// `dl/dxi = I eta` in coordinates.
    pub fn momentum(&self, eta: &Vector3<f64>) -> Vector3<f64> {
        self.inertia.component_mul(eta)
    }

    pub fn energy(&self, eta: &Vector3<f64>) -> f64 {
        0.5 * eta.dot(&self.momentum(eta))
    }
}

fn vec3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

impl DiscreteLagrangian for RigidBodyLagrangian {
    fn value(&self, _x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.energy(&vec3(u))
    }

    fn grad_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let p = self.momentum(&vec3(u));
        DVector::from_row_slice(p.as_slice())
    }

    fn hess_xu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(0, 3))
    }

    fn hess_uu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_row_slice(
            self.inertia.as_slice(),
        )))
    }
}

/// Heavy top on the action groupoid: `l(Gamma, Omega) = Omega . (I Omega)/2
/// - mgd Gamma . e` with `Gamma` the body-frame direction opposite to
/// gravity and `e` the unit body vector toward the center of mass.
pub struct HeavyTopLagrangian {
    inertia: Vector3<f64>,
    mgd: f64,
    body_axis: Vector3<f64>,
}

impl HeavyTopLagrangian {
    pub fn new(inertia: Vector3<f64>, mgd: f64, body_axis: Vector3<f64>) -> Result<Self> {
        if !inertia.iter().all(|i| *i > 0.0) {
            return Err(Error::Config("inertia entries must be positive".into()));
        }
        if (body_axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("body axis must be a unit vector".into()));
        }
        Ok(Self {
            inertia,
            mgd,
            body_axis,
        })
    }

    pub fn inertia(&self) -> &Vector3<f64> {
        &self.inertia
    }

    pub fn mgd(&self) -> f64 {
        self.mgd
    }

    pub fn body_axis(&self) -> &Vector3<f64> {
        &self.body_axis
    }

    pub fn momentum(&self, omega: &Vector3<f64>) -> Vector3<f64> {
        self.inertia.component_mul(omega)
    }

    pub fn energy(&self, gamma: &Vector3<f64>, omega: &Vector3<f64>) -> f64 {
        0.5 * omega.dot(&self.momentum(omega)) + self.mgd * gamma.dot(&self.body_axis)
    }
}

impl DiscreteLagrangian for HeavyTopLagrangian {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let omega = vec3(u);
        0.5 * omega.dot(&self.momentum(&omega)) - self.mgd * vec3(x).dot(&self.body_axis)
    }

    fn grad_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice((self.body_axis * (-self.mgd)).as_slice())
    }

    fn grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(self.momentum(&vec3(u)).as_slice())
    }

    fn hess_xu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(3, 3))
    }

    fn hess_uu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_row_slice(
            self.inertia.as_slice(),
        )))
    }
}

/// Discrete Euler-Poincare residual in the pairing form,
///
/// ```text
/// r_g = < (I + h hat(n_k)/2) e_g (I - h hat(n_k)/2),   dl(n_k)   >
///     - < (I - h hat(n_k1)/2) e_g (I + h hat(n_k1)/2), dl(n_k1) >
/// ```
///
/// with the coordinate dot pairing. Zero exactly at solutions of the
/// discrete Euler-Poincare equations.
pub fn so3_dep_residual_pairing(
    h: f64,
    grad_l: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
    eta_k: &Vector3<f64>,
    eta_k1: &Vector3<f64>,
) -> Vector3<f64> {
    let basis = crate::so3::so3_basis();
    let id = Matrix3::identity();
    let hk = crate::so3::hat(eta_k) * (h * 0.5);
    let hk1 = crate::so3::hat(eta_k1) * (h * 0.5);
    let dk = grad_l(eta_k);
    let dk1 = grad_l(eta_k1);
    let mut r = Vector3::zeros();
    for (gamma, e) in basis.iter().enumerate() {
        let left = (id + hk) * e * (id - hk);
        let right = (id - hk1) * e * (id + hk1);
        r[gamma] = crate::so3::vee(&((left - left.transpose()) * 0.5)).dot(&dk)
            - crate::so3::vee(&((right - right.transpose()) * 0.5)).dot(&dk1);
    }
    r
}

/// The same discrete Euler-Poincare equations written out in components for
/// so(3) coordinates `(x, y, z)`. Transcribed from the expanded displays;
/// the `(1 + h^2 z^2/4)` coefficients carry the square that the pattern of
/// the first two components requires. Agrees with
/// [`so3_dep_residual_pairing`] to roundoff.
pub fn so3_dep_residual_components(
    h: f64,
    grad_l: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
    eta_k: &Vector3<f64>,
    eta_k1: &Vector3<f64>,
) -> Vector3<f64> {
    let (xk, yk, zk) = (eta_k.x, eta_k.y, eta_k.z);
    let (x1, y1, z1) = (eta_k1.x, eta_k1.y, eta_k1.z);
    let dk = grad_l(eta_k);
    let d1 = grad_l(eta_k1);
    let (lx, ly, lz) = (dk.x, dk.y, dk.z);
    let (mx, my, mz) = (d1.x, d1.y, d1.z);
    let h2 = h * h;

    let r1 = (1.0 + h2 * xk * xk / 4.0) * lx
        + (h2 * xk * yk / 4.0 + h * zk / 2.0) * ly
        - (h * yk / 2.0 - h2 * xk * zk / 4.0) * lz
        - (1.0 + h2 * x1 * x1 / 4.0) * mx
        + (h * z1 / 2.0 - h2 * x1 * y1 / 4.0) * my
        - (h * y1 / 2.0 + h2 * x1 * z1 / 4.0) * mz;

    let r2 = (h2 * xk * yk / 4.0 - h * zk / 2.0) * lx
        + (1.0 + h2 * yk * yk / 4.0) * ly
        + (h * xk / 2.0 + h2 * yk * zk / 4.0) * lz
        - (h * z1 / 2.0 + h2 * x1 * y1 / 4.0) * mx
        - (1.0 + h2 * y1 * y1 / 4.0) * my
        + (h * x1 / 2.0 - h2 * y1 * z1 / 4.0) * mz;

    let r3 = (h * yk / 2.0 + h2 * xk * zk / 4.0) * lx
        - (h * xk / 2.0 - h2 * yk * zk / 4.0) * ly
        + (1.0 + h2 * zk * zk / 4.0) * lz
        + (h * y1 / 2.0 - h2 * x1 * z1 / 4.0) * mx
        - (h * x1 / 2.0 + h2 * y1 * z1 / 4.0) * my
        - (1.0 + h2 * z1 * z1 / 4.0) * mz;

    Vector3::new(r1, r2, r3)
}

/// Residual of the explicit discrete heavy-top equations at a pair of
/// consecutive states.
#[derive(Debug, Clone)]
pub struct HeavyTopResidual {
    /// The three momentum-balance component equations.
    pub equations: Vector3<f64>,
    /// Defect of the base update `Gamma_{k+1} = Gamma_k cay(h hat(Omega_k))`.
    pub gamma_defect: Vector3<f64>,
}

impl HeavyTopResidual {
    pub fn max_equation_residual(&self) -> f64 {
        self.equations.amax()
    }
}

/// Explicit discrete heavy-top equations, written with their own inline 3x3
/// arithmetic so they stand independent of the solver path.
///
/// The inertia terms are the so(3) component equations with `dl = I Omega`.
/// The gravity terms enter as `-h mgd (Gamma_{k+1} . e_gamma) . e`, the sign
/// that makes the equations the pairing-form Euler-Lagrange equations of
/// `l = Omega.(I Omega)/2 - mgd Gamma.e` under the row-vector update
/// `Gamma_{k+1} = Gamma_k cay(h hat(Omega_k))` (equivalently: the h -> 0
/// limit is the energy-conserving Euler-Poisson system).
pub fn heavy_top_explicit_residual(
    top: &HeavyTopLagrangian,
    h: f64,
    gamma_k: &Vector3<f64>,
    omega_k: &Vector3<f64>,
    gamma_k1: &Vector3<f64>,
    omega_k1: &Vector3<f64>,
) -> HeavyTopResidual {
    let inertia = top.inertia();
    let grad = |eta: &Vector3<f64>| inertia.component_mul(eta);
    let mut equations = so3_dep_residual_components(h, &grad, omega_k, omega_k1);

    // Gravity: -h mgd (Gamma_{k+1} . e_gamma) . e with row-vector action,
    // so (Gamma . e_1) = (0, Z, -Y) etc.
    let (x1, y1, z1) = (gamma_k1.x, gamma_k1.y, gamma_k1.z);
    let e = top.body_axis();
    let hmgd = h * top.mgd();
    equations[0] -= hmgd * (z1 * e.y - y1 * e.z);
    equations[1] -= hmgd * (x1 * e.z - z1 * e.x);
    equations[2] -= hmgd * (y1 * e.x - x1 * e.y);

    // Base update by inline Cayley arithmetic: cay(A) = (I - A/2)^{-1}(I + A/2).
    let a = crate::so3::hat(omega_k) * (h * 0.5);
    let id = Matrix3::identity();
    let cay = (id - a)
        .try_inverse()
        .map(|inv| inv * (id + a))
        .unwrap_or_else(Matrix3::identity);
    let moved = cay.transpose() * gamma_k; // row vector times matrix
    HeavyTopResidual {
        equations,
        gamma_defect: gamma_k1 - moved,
    }
}
