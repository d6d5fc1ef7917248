//! Discrete Lie-Poisson stepping on the Lie-group chart.
//!
//! For a Lagrangian `l` on the algebra, the discrete Euler-Poincare
//! equations are equivalent to the momentum update
//!
//! ```text
//! mu_k    = (dcay^{-1}_{h eta_k})^* dl(eta_k)
//! mu_{k+1} = Ad^*_{cay(h eta_k)} mu_k
//! ```
//!
//! followed by inverting the backward Legendre transform,
//! `F^- l (eta_{k+1}) = mu_{k+1}`, for the next velocity. This walks the same
//! solution set as [`DiscreteLagrangianSystem::del_step`] but through an
//! independent update structure, which makes it a useful cross-check; it also
//! exposes the momenta, whose coordinate norm is preserved exactly by the
//! coadjoint update on SO(3).

use nalgebra::{DVector, Vector3};

use crate::error::Result;
use crate::lie_group::So3CayleyChart;
use crate::so3;
use crate::solver::{
    newton_solve, DiscreteLagrangian, DiscreteLagrangianSystem, SimulationFailure,
    StepDiagnostics,
};

fn vec3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn dvec(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_row_slice(v.as_slice())
}

/// Momentum `mu = (dcay^{-1}_{h eta})^* dl(eta)`, the value of the backward
/// Legendre transform on the Lie-group chart.
pub fn lie_poisson_momentum<L: DiscreteLagrangian>(
    sys: &DiscreteLagrangianSystem<So3CayleyChart, L>,
    eta: &Vector3<f64>,
) -> Vector3<f64> {
    let h = sys.chart().time_step();
    let dl = vec3(&sys.lagrangian().grad_u(&DVector::zeros(0), &dvec(eta)));
    so3::dcay_inv_matrix(&(eta * h)).transpose() * dl
}

/// One discrete Lie-Poisson step: transports the momentum by the coadjoint
/// action and solves the Legendre relation for the next velocity. Returns
/// `(eta_next, mu_next, diagnostics)`.
pub fn lie_poisson_step<L: DiscreteLagrangian>(
    sys: &DiscreteLagrangianSystem<So3CayleyChart, L>,
    eta_k: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>, StepDiagnostics)> {
    let h = sys.chart().time_step();
    let none = DVector::zeros(0);

    let mu_k = lie_poisson_momentum(sys, eta_k);
    let g = so3::cay(&so3::hat(&(eta_k * h)))?;
    let mu_next = so3::coadjoint(&g, &mu_k)?;

    // Solve F^- l (eta) = mu_next by Newton from the previous velocity.
    let target = dvec(&mu_next);
    let residual = |eta: &DVector<f64>| Ok(sys.legendre_minus(&none, eta)?.mu - &target);
    // dF^-_mu/deta^gamma = -(FL_d)^gamma_mu.
    let jacobian = |eta: &DVector<f64>| Ok(-sys.del_jacobian(&none, eta)?.transpose());
    let out = newton_solve(&residual, &jacobian, dvec(eta_k), sys.newton_params())?;

    Ok((vec3(&out.solution), mu_next, out.diagnostics))
}

/// A Lie-Poisson run: velocities and momenta per step.
#[derive(Debug)]
pub struct LiePoissonRun {
    /// `(eta_k, mu_k)` for `k = 0..=steps` (as far as the run got).
    pub states: Vec<(Vector3<f64>, Vector3<f64>)>,
    pub failure: Option<SimulationFailure>,
}

/// Iterates [`lie_poisson_step`], recording `(eta_k, mu_k)` per step.
pub fn lie_poisson_simulate<L: DiscreteLagrangian>(
    sys: &DiscreteLagrangianSystem<So3CayleyChart, L>,
    eta0: &Vector3<f64>,
    steps: usize,
) -> LiePoissonRun {
    let mut states = Vec::with_capacity(steps + 1);
    states.push((*eta0, lie_poisson_momentum(sys, eta0)));
    let mut eta = *eta0;
    let mut failure = None;
    for k in 1..=steps {
        match lie_poisson_step(sys, &eta) {
            Ok((next, mu, _diag)) => {
                states.push((next, mu));
                eta = next;
            }
            Err(error) => {
                failure = Some(SimulationFailure {
                    step_index: k,
                    error,
                });
                break;
            }
        }
    }
    LiePoissonRun { states, failure }
}
