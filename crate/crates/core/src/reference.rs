//! Independently coded classical one-step integrators, used as oracles for
//! the groupoid-based solver and as baselines in drift comparisons. These
//! touch none of the chart machinery.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn solve_mass(mass: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    mass.clone()
        .lu()
        .solve(rhs)
        .expect("mass matrix invertible")
}

/// One step of the implicit midpoint rule on `(q, p)` for
/// `H = p^T M^{-1} p / 2 + V(q)`, solved by fixed-point iteration to 1e-14.
pub fn implicit_midpoint_step(
    mass: &DMatrix<f64>,
    grad_v: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    q: &DVector<f64>,
    p: &DVector<f64>,
    h: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut qn = q.clone();
    let mut pn = p.clone();
    for _ in 0..200 {
        let qm = (q + &qn) * 0.5;
        let pm = (p + &pn) * 0.5;
        let q_next = q + solve_mass(mass, &pm) * h;
        let p_next = p - grad_v(&qm) * h;
        let delta = (&q_next - &qn).amax().max((&p_next - &pn).amax());
        qn = q_next;
        pn = p_next;
        if delta <= 1e-14 * (1.0 + qn.amax().max(pn.amax())) {
            return Ok((qn, pn));
        }
    }
    Err(Error::NewtonDiverged {
        iterations: 200,
        residual: f64::NAN,
        tolerance: 1e-14,
        best_iterate: qn.as_slice().to_vec(),
    })
}

/// One step of velocity Verlet (kick-drift-kick leapfrog) on `(q, v)`.
pub fn leapfrog_step(
    mass: &DMatrix<f64>,
    grad_v: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> (DVector<f64>, DVector<f64>) {
    let a0 = -solve_mass(mass, &grad_v(q));
    let v_half = v + a0 * (0.5 * h);
    let q_next = q + &v_half * h;
    let a1 = -solve_mass(mass, &grad_v(&q_next));
    let v_next = v_half + a1 * (0.5 * h);
    (q_next, v_next)
}

/// One step of the explicit midpoint (RK2) method on `(q, v)`. Second order
/// but not symplectic: on a harmonic oscillator its energy grows
/// monotonically by a factor `1 + O(h^4)` per step.
pub fn rk2_step(
    mass: &DMatrix<f64>,
    grad_v: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> (DVector<f64>, DVector<f64>) {
    let aq = v.clone();
    let av = -solve_mass(mass, &grad_v(q));
    let qm = q + aq * (0.5 * h);
    let vm = v + av * (0.5 * h);
    let bq = vm;
    let bv = -solve_mass(mass, &grad_v(&qm));
    (q + bq * h, v + bv * h)
}
