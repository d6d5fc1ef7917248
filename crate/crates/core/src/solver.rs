//! Discrete Euler-Lagrange machinery on a groupoid chart.
//!
//! For a discrete Lagrangian `L_d(x, u)` on chart coordinates, a composable
//! pair `(x, u), (y, v)` with `y = b(x, u)` solves the discrete
//! Euler-Lagrange equations when the residual
//!
//! ```text
//! lambda_mu(x,u,v) = L^g_mu(x,u) dL/du^g (x,u)
//!                  + rho^i_mu(y) dL/dx^i (y,v)
//!                  - R^g_mu(y,v) dL/du^g (y,v)
//! ```
//!
//! vanishes. The residual equals the difference of the two discrete Legendre
//! transforms, `lambda = F+(x,u) - F-(y,v)`, so accepted steps match momenta
//! across the step by construction. Steps are solved for `v` by a damped
//! Newton iteration whose Jacobian is the matrix `(FL_d)` of the regularity
//! theory; the backward evolution reuses the same machinery in the inverted
//! coordinates `(x, u) o i`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart::{self, ChartPoint, GroupoidChart};
use crate::diff;
use crate::error::{Error, Result};

/// A discrete Lagrangian with first (and optionally second) derivatives.
///
/// Gradients are validated against central differences when a system is
/// constructed. Second derivatives, when supplied, let the Newton iteration
/// assemble its Jacobian analytically.
pub trait DiscreteLagrangian: Send + Sync {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `d2 L / (dx^i du^gamma)`, `n x m`, entry `(i, gamma)`.
    fn hess_xu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `d2 L / (du^nu du^gamma)`, `m x m`, entry `(nu, gamma)`.
    fn hess_uu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

impl<L: DiscreteLagrangian + ?Sized> DiscreteLagrangian for &L {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (**self).value(x, u)
    }
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).grad_x(x, u)
    }
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).grad_u(x, u)
    }
    fn hess_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).hess_xu(x, u)
    }
    fn hess_uu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).hess_uu(x, u)
    }
}

/// A covector attached to a base point: the value of a discrete Legendre
/// transform. `F+ L_d (x,u)` lives at `b(x,u)`; `F- L_d (x,u)` lives at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub base: DVector<f64>,
    pub mu: DVector<f64>,
}

/// Newton solve parameters.
#[derive(Debug, Clone)]
pub struct NewtonParams {
    /// Accept when the max-norm of the residual is at or below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings attempted when a full step increases the residual.
    pub max_halvings: usize,
    /// Jacobian condition number beyond which the system counts as singular.
    pub condition_limit: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            max_halvings: 8,
            condition_limit: 1e12,
        }
    }
}

/// Condition-number threshold for the regularity predicate.
const REGULARITY_CONDITION_LIMIT: f64 = 1e8;

/// Per-step solve diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub jacobian_condition: f64,
    pub reanchored: bool,
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub point: ChartPoint,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug)]
pub struct SimulationFailure {
    /// 1-based index of the step that failed.
    pub step_index: usize,
    pub error: Error,
}

/// An accepted run: the initial element followed by solved steps, with the
/// failure that terminated the run, if any. Consecutive entries are
/// composable by construction (the base of each step is the target of the
/// previous element).
#[derive(Debug)]
pub struct Trajectory {
    pub initial: ChartPoint,
    pub steps: Vec<TrajectoryStep>,
    pub failure: Option<SimulationFailure>,
}

impl Trajectory {
    /// All elements of the admissible sequence, initial point included.
    pub fn elements(&self) -> impl Iterator<Item = &ChartPoint> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.point))
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

#[derive(Debug)]
pub(crate) struct NewtonOutcome {
    pub(crate) solution: DVector<f64>,
    pub(crate) diagnostics: StepDiagnostics,
}

/// Damped Newton iteration on `residual(v) = 0`.
///
/// Full steps with up to `max_halvings` halvings when the residual norm
/// fails to decrease; gives up if no candidate improves.
pub(crate) fn newton_solve(
    residual: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    jacobian: &dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
    v0: DVector<f64>,
    params: &NewtonParams,
) -> Result<NewtonOutcome> {
    let mut v = v0;
    let mut r = residual(&v)?;
    let mut rnorm = inf_norm(&r);
    let mut best_norm = rnorm;
    let mut best = v.clone();
    let mut last_condition = f64::NAN;

    for iter in 0..=params.max_iterations {
        if rnorm <= params.tolerance {
            if last_condition.is_nan() {
                last_condition = condition_number(&jacobian(&v)?);
            }
            return Ok(NewtonOutcome {
                solution: v,
                diagnostics: StepDiagnostics {
                    residual_norm: rnorm,
                    newton_iters: iter,
                    jacobian_condition: last_condition,
                    reanchored: false,
                },
            });
        }
        if iter == params.max_iterations {
            break;
        }

        let jac = jacobian(&v)?;
        let cond = condition_number(&jac);
        last_condition = cond;
        if !cond.is_finite() || cond > params.condition_limit {
            return Err(Error::SingularJacobian {
                condition: cond,
                limit: params.condition_limit,
            });
        }
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or(Error::SingularJacobian {
                condition: cond,
                limit: params.condition_limit,
            })?;

        let mut advanced = false;
        let mut scale = 1.0;
        for _ in 0..=params.max_halvings {
            let cand = &v + &delta * scale;
            let rc = residual(&cand)?;
            let rcnorm = inf_norm(&rc);
            if rcnorm < rnorm {
                v = cand;
                r = rc;
                rnorm = rcnorm;
                advanced = true;
                break;
            }
            scale *= 0.5;
        }
        if !advanced {
            break;
        }
        if rnorm < best_norm {
            best_norm = rnorm;
            best = v.clone();
        }
    }

    Err(Error::NewtonDiverged {
        iterations: params.max_iterations,
        residual: best_norm,
        tolerance: params.tolerance,
        best_iterate: best.as_slice().to_vec(),
    })
}

/// A chart together with a discrete Lagrangian and Newton parameters.
pub struct DiscreteLagrangianSystem<C: GroupoidChart, L: DiscreteLagrangian> {
    chart: C,
    lagrangian: L,
    newton: NewtonParams,
}

impl<C: GroupoidChart, L: DiscreteLagrangian> DiscreteLagrangianSystem<C, L> {
    /// Builds a system, validating the Lagrangian's gradients against
    /// central differences at a handful of sampled chart points.
    pub fn new(chart: C, lagrangian: L) -> Result<Self> {
        let sys = Self {
            chart,
            lagrangian,
            newton: NewtonParams::default(),
        };
        sys.validate_gradients()?;
        Ok(sys)
    }

    /// Builds a system without gradient validation (used internally for
    /// derived Lagrangians whose gradients come from validated ones).
    fn unchecked(chart: C, lagrangian: L, newton: NewtonParams) -> Self {
        Self {
            chart,
            lagrangian,
            newton,
        }
    }

    pub fn with_newton_params(mut self, params: NewtonParams) -> Self {
        self.newton = params;
        self
    }

    pub fn chart(&self) -> &C {
        &self.chart
    }

    pub fn lagrangian(&self) -> &L {
        &self.lagrangian
    }

    pub fn newton_params(&self) -> &NewtonParams {
        &self.newton
    }

    fn validate_gradients(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tol = 1e-6;
        for _ in 0..5 {
            let g = self.chart.sample_point(&mut rng);
            let gx = self.lagrangian.grad_x(&g.x, &g.u);
            let gu = self.lagrangian.grad_u(&g.x, &g.u);
            let fgx = diff::gradient(|x| self.lagrangian.value(x, &g.u), &g.x, "L_d in x")?;
            let fgu = diff::gradient(|u| self.lagrangian.value(&g.x, u), &g.u, "L_d in u")?;
            let scale = 1.0 + inf_norm(&gx).max(inf_norm(&gu));
            if inf_norm(&(&gx - &fgx)) > tol * scale || inf_norm(&(&gu - &fgu)) > tol * scale {
                return Err(Error::Config(format!(
                    "Lagrangian gradients disagree with finite differences at x = {:?}, u = {:?}",
                    g.x.as_slice(),
                    g.u.as_slice()
                )));
            }
        }
        Ok(())
    }

    fn check_domain(&self, x: &DVector<f64>, u: &DVector<f64>, what: &str) -> Result<()> {
        if self.chart.in_domain(x, u) {
            Ok(())
        } else {
            Err(Error::OutOfChart(format!(
                "{what}: x = {:?}, u = {:?}",
                x.as_slice(),
                u.as_slice()
            )))
        }
    }

    /// `F- L_d` fiber components at `(x, u)`, no domain check.
    fn legendre_minus_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let rho = chart::rho_of(&self.chart, x)?;
        let right = chart::right_of(&self.chart, x, u)?;
        let gx = self.lagrangian.grad_x(x, u);
        let gu = self.lagrangian.grad_u(x, u);
        Ok(right.transpose() * gu - rho.transpose() * gx)
    }

    /// `F+ L_d` fiber components at `(x, u)`, no domain check.
    fn legendre_plus_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let left = chart::left_of(&self.chart, x, u)?;
        let gu = self.lagrangian.grad_u(x, u);
        Ok(left.transpose() * gu)
    }

    /// Backward discrete Legendre transform: momentum at the source point,
    /// `mu_g = -rho^i_g(x) dL/dx^i + R^m_g(x,u) dL/du^m`.
    pub fn legendre_minus(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Momentum> {
        self.check_domain(x, u, "legendre_minus point")?;
        Ok(Momentum {
            base: x.clone(),
            mu: self.legendre_minus_raw(x, u)?,
        })
    }

    /// Forward discrete Legendre transform: momentum at the target point,
    /// `mu_g = L^m_g(x,u) dL/du^m`.
    pub fn legendre_plus(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Momentum> {
        self.check_domain(x, u, "legendre_plus point")?;
        Ok(Momentum {
            base: self.chart.target_raw(x, u),
            mu: self.legendre_plus_raw(x, u)?,
        })
    }

    /// Discrete Euler-Lagrange residual `lambda(x, u, v)`.
    pub fn del_residual(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_domain(x, u, "del_residual first element")?;
        let y = self.chart.target_raw(x, u);
        self.check_domain(&y, v, "del_residual second element")?;
        Ok(self.legendre_plus_raw(x, u)? - self.legendre_minus_raw(&y, v)?)
    }

    fn hess_xu_of(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(h) = self.lagrangian.hess_xu(x, u) {
            return Ok(h);
        }
        // d (dL/dx_i) / du_gamma, entry (i, gamma).
        diff::jacobian_vec(
            |uu| self.lagrangian.grad_x(x, uu),
            u,
            x.len(),
            "dL/dx in u",
        )
    }

    fn hess_uu_of(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(h) = self.lagrangian.hess_uu(x, u) {
            return Ok(h);
        }
        diff::jacobian_vec(
            |uu| self.lagrangian.grad_u(x, uu),
            u,
            u.len(),
            "dL/du in u",
        )
    }

    /// The regularity matrix `(FL_d)^gamma_mu (y, v)`, returned with entry
    /// `(gamma, mu)`. Equals `d lambda_mu / d v^gamma` at `(y, v)`.
    pub fn del_jacobian(&self, y: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_domain(y, v, "del_jacobian point")?;
        self.del_jacobian_raw(y, v)
    }

    fn del_jacobian_raw(&self, y: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = v.len();
        let rho = chart::rho_of(&self.chart, y)?;
        let right = chart::right_of(&self.chart, y, v)?;
        let right_deriv = chart::right_deriv_of(&self.chart, y, v)?;
        let gu = self.lagrangian.grad_u(y, v);
        let hxu = self.hess_xu_of(y, v)?;
        let huu = self.hess_uu_of(y, v)?;

        // (FL)^g_m = rho^i_m Hxu_{i g} - dR^n_m/dv^g gu_n - R^n_m Huu_{n g}
        let mut fl = hxu.transpose() * &rho - huu.transpose() * &right;
        for gamma in 0..m {
            let row = right_deriv[gamma].transpose() * &gu;
            for mu in 0..m {
                fl[(gamma, mu)] -= row[mu];
            }
        }
        Ok(fl)
    }

    fn analytic_jacobian_available(&self, y: &DVector<f64>, v: &DVector<f64>) -> bool {
        self.lagrangian.hess_uu(y, v).is_some()
            && (y.is_empty() || self.lagrangian.hess_xu(y, v).is_some())
            && self.chart.right_transport(y, v).is_some()
            && self.chart.right_transport_deriv(y, v).is_some()
            && self.chart.rho(y).is_some()
    }

    /// Newton Jacobian `d lambda / d v` (rows: residual components) at fixed
    /// target base `y`. Analytic assembly when second derivatives are
    /// available, otherwise central differences of the residual in `v`.
    fn newton_jacobian(
        &self,
        y: &DVector<f64>,
        v: &DVector<f64>,
        analytic: bool,
    ) -> Result<DMatrix<f64>> {
        if analytic {
            return Ok(self.del_jacobian_raw(y, v)?.transpose());
        }
        // lambda(v) = F+ - F-(y, v), so d lambda/d v = -d F-(y, .)/d v.
        let jac = diff::jacobian_vec(
            |vv| {
                self.legendre_minus_raw(y, vv)
                    .unwrap_or_else(|_| DVector::from_element(v.len(), f64::NAN))
            },
            v,
            v.len(),
            "F- in v",
        )?;
        Ok(-jac)
    }

    /// Condition number of `(FL_d)(x, u)` and the regularity predicate.
    pub fn regularity(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(f64, bool)> {
        let fl = self.del_jacobian(x, u)?;
        let cond = condition_number(&fl);
        Ok((cond, cond < REGULARITY_CONDITION_LIMIT))
    }

    /// Coordinate matrix of the Poincare-Cartan 2-section:
    /// `Omega_{gamma mu}(x, u) = -L^t_mu(x,u) (FL_d)^t_gamma(x,u)`,
    /// returned with entry `(gamma, mu)`. Nondegenerate exactly when the
    /// system is regular, since the left transport is invertible on the
    /// chart domain.
    pub fn omega_matrix(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let fl = self.del_jacobian(x, u)?;
        let left = chart::left_of(&self.chart, x, u)?;
        Ok(-(fl.transpose() * left))
    }

    /// One forward step: solves `lambda(x, u, v) = 0` for `v` with initial
    /// guess `u` (constant-velocity predictor) unless one is supplied, and
    /// returns `(y, v, diagnostics)` with `y = b(x, u)`.
    pub fn del_step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        guess: Option<&DVector<f64>>,
    ) -> Result<(DVector<f64>, DVector<f64>, StepDiagnostics)> {
        self.check_domain(x, u, "del_step start")?;
        let y = self.chart.target_raw(x, u);
        let fplus = self.legendre_plus_raw(x, u)?;
        let v0 = guess.cloned().unwrap_or_else(|| u.clone());
        let analytic = self.analytic_jacobian_available(&y, &v0);

        let residual = |v: &DVector<f64>| Ok(&fplus - self.legendre_minus_raw(&y, v)?);
        let jacobian = |v: &DVector<f64>| self.newton_jacobian(&y, v, analytic);
        let out = newton_solve(&residual, &jacobian, v0, &self.newton)?;
        let v = out.solution;
        self.check_domain(&y, &v, "del_step solution")?;
        Ok((y, v, out.diagnostics))
    }

    /// One backward step: given the later element `(y, v)`, finds the earlier
    /// element `g = (x, u)` with `b(x, u) = y` and `lambda(x, u, v) = 0`.
    ///
    /// Implemented in the inverted coordinates `(x, u) o i`: there the
    /// backward equations take the forward form again, with the same
    /// structure functions and the pulled-back Lagrangian `L_d o i`, so the
    /// step is a forward solve conjugated by the chart inversion.
    pub fn del_step_backward(
        &self,
        y: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(ChartPoint, StepDiagnostics)> {
        self.check_domain(y, v, "del_step_backward start")?;
        let xbar = self.chart.target_raw(y, v);
        let ubar = self.chart.inversion_fiber_raw(y, v);
        self.check_domain(&xbar, &ubar, "del_step_backward inverted start")?;

        let inverted = DiscreteLagrangianSystem::unchecked(
            &self.chart,
            InvertedLagrangian {
                chart: &self.chart,
                inner: &self.lagrangian,
            },
            self.newton.clone(),
        );
        let (ybar, vbar, diagnostics) = inverted.del_step(&xbar, &ubar, None)?;

        let g = ChartPoint::new(
            self.chart.target_raw(&ybar, &vbar),
            self.chart.inversion_fiber_raw(&ybar, &vbar),
        );
        self.check_domain(&g.x, &g.u, "del_step_backward solution")?;
        Ok((g, diagnostics))
    }

    /// Iterates [`Self::del_step`], threading each solved `(y, v)` as the
    /// next `(x, u)`. Stops with a partial trajectory on solver failure.
    pub fn simulate(&self, x0: &DVector<f64>, u0: &DVector<f64>, steps: usize) -> Trajectory {
        let initial = ChartPoint::new(x0.clone(), u0.clone());
        let mut trajectory = Trajectory {
            initial,
            steps: Vec::with_capacity(steps),
            failure: None,
        };
        let mut x = x0.clone();
        let mut u = u0.clone();
        for k in 1..=steps {
            match self.del_step(&x, &u, None) {
                Ok((y, v, diagnostics)) => {
                    trajectory.steps.push(TrajectoryStep {
                        point: ChartPoint::new(y.clone(), v.clone()),
                        diagnostics,
                    });
                    x = y;
                    u = v;
                }
                Err(error) => {
                    trajectory.failure = Some(SimulationFailure {
                        step_index: k,
                        error,
                    });
                    break;
                }
            }
        }
        trajectory
    }

    /// Largest momentum-matching defect `max_k |F+(g_k) - F-(g_{k+1})|_inf`
    /// along a trajectory.
    pub fn momentum_defect(&self, trajectory: &Trajectory) -> Result<f64> {
        let mut worst = 0.0_f64;
        let elements: Vec<_> = trajectory.elements().collect();
        for pair in elements.windows(2) {
            let plus = self.legendre_plus_raw(&pair[0].x, &pair[0].u)?;
            let minus = self.legendre_minus_raw(&pair[1].x, &pair[1].u)?;
            worst = worst.max(inf_norm(&(plus - minus)));
        }
        Ok(worst)
    }
}

/// Largest defect of the composability invariant along a trajectory:
/// `max_k | x_{k+1} - b(x_k, u_k) |`.
pub fn composability_defect<C: GroupoidChart>(chart: &C, trajectory: &Trajectory) -> f64 {
    let elements: Vec<_> = trajectory.elements().collect();
    let mut worst = 0.0_f64;
    for pair in elements.windows(2) {
        let y = chart.target_raw(&pair[0].x, &pair[0].u);
        worst = worst.max(inf_norm(&(&pair[1].x - y)));
    }
    worst
}

/// `L_d o i` expressed in the same chart: the Lagrangian seen from the
/// inverted coordinates. Gradients use the chart's inversion Jacobians when
/// available and central differences otherwise.
struct InvertedLagrangian<'a, C: GroupoidChart, L: DiscreteLagrangian> {
    chart: &'a C,
    inner: &'a L,
}

impl<C: GroupoidChart, L: DiscreteLagrangian> InvertedLagrangian<'_, C, L> {
    fn image(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            self.chart.target_raw(x, u),
            self.chart.inversion_fiber_raw(x, u),
        )
    }
}

impl<C: GroupoidChart, L: DiscreteLagrangian> DiscreteLagrangian for InvertedLagrangian<'_, C, L> {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (bx, bu) = self.image(x, u);
        self.inner.value(&bx, &bu)
    }

    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (bx, bu) = self.image(x, u);
        match self.chart.inversion_jacobians(x, u) {
            Some(jac) => {
                jac.target_x.transpose() * self.inner.grad_x(&bx, &bu)
                    + jac.iota_x.transpose() * self.inner.grad_u(&bx, &bu)
            }
            None => diff::gradient(|xx| self.value(xx, u), x, "L_d o i in x")
                .expect("finite difference of inverted Lagrangian"),
        }
    }

    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (bx, bu) = self.image(x, u);
        match self.chart.inversion_jacobians(x, u) {
            Some(jac) => {
                jac.target_u.transpose() * self.inner.grad_x(&bx, &bu)
                    + jac.iota_u.transpose() * self.inner.grad_u(&bx, &bu)
            }
            None => diff::gradient(|uu| self.value(x, uu), u, "L_d o i in u")
                .expect("finite difference of inverted Lagrangian"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::make_pair_groupoid;
    use crate::systems::{
        FreePotential, HarmonicPotential, MidpointLagrangian, RigidBodyLagrangian,
        StormerVerletLagrangian,
    };
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn harmonic_midpoint(h: f64) -> DiscreteLagrangianSystem<crate::pair::PairGroupoidChart, MidpointLagrangian> {
        DiscreteLagrangianSystem::new(
            make_pair_groupoid(1, h).unwrap(),
            MidpointLagrangian::new(
                DMatrix::identity(1, 1),
                Box::new(HarmonicPotential::scalar(1.0)),
                h,
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn free_particle_residual_vanishes_at_constant_velocity() {
        let h = 0.1;
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(2, h).unwrap(),
            MidpointLagrangian::new(
                DMatrix::identity(2, 2),
                Box::new(FreePotential::new(2)),
                h,
            )
            .unwrap(),
        )
        .unwrap();
        let x = dvec(&[0.3, -1.0]);
        let u = dvec(&[2.0, 0.5]);
        let lambda = sys.del_residual(&x, &u, &u).unwrap();
        assert_eq!(inf_norm(&lambda), 0.0);

        let (y, v, diag) = sys.del_step(&x, &u, None).unwrap();
        assert_relative_eq!(y, &x + &u * h, epsilon = 1e-15);
        assert_relative_eq!(v, u, epsilon = 1e-15);
        assert!(diag.newton_iters <= 1);
    }

    #[test]
    fn midpoint_step_matches_bisection_oracle() {
        // Scalar midpoint relation g(v) = (v - u)/h + (V'(x + hu/2) + V'(y + hv/2))/2
        // solved by bisection, independent of the chart machinery.
        let h = 0.1;
        let sys = harmonic_midpoint(h);
        let (x0, u0) = (1.0, 0.0);
        let y0 = x0 + h * u0;
        let g = |v: f64| (v - u0) / h + 0.5 * ((x0 + 0.5 * h * u0) + (y0 + 0.5 * h * v));
        let (mut lo, mut hi) = (-10.0_f64, 10.0_f64);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);

        let lambda = sys.del_residual(&dvec(&[x0]), &dvec(&[u0]), &dvec(&[root])).unwrap();
        assert!(inf_norm(&lambda) <= 1e-12, "residual at oracle root: {lambda}");

        let (_, v, _) = sys.del_step(&dvec(&[x0]), &dvec(&[u0]), None).unwrap();
        assert!((v[0] - root).abs() <= 1e-10, "v = {}, oracle {root}", v[0]);
    }

    #[test]
    fn residual_is_legendre_difference() {
        let h = 0.07;
        let mass = DMatrix::from_diagonal(&dvec(&[1.0, 2.5]));
        let stiff = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(2, h).unwrap(),
            MidpointLagrangian::new(
                mass,
                Box::new(HarmonicPotential::new(stiff).unwrap()),
                h,
            )
            .unwrap(),
        )
        .unwrap();
        let mut rng = StdRng::seed_from_u64(53);
        for _ in 0..20 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let lambda = sys.del_residual(&x, &u, &v).unwrap();
            let plus = sys.legendre_plus(&x, &u).unwrap();
            let y = sys.chart().target_raw(&x, &u);
            let minus = sys.legendre_minus(&y, &v).unwrap();
            assert_relative_eq!(lambda, plus.mu - minus.mu, epsilon = 1e-13);
            // Momentum base points follow the attachment rule.
            assert_eq!(plus.base, y);
            assert_eq!(minus.base, y);
        }
    }

    #[test]
    fn free_particle_legendre_transforms_coincide() {
        let h = 0.25;
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(1, h).unwrap(),
            MidpointLagrangian::new(
                DMatrix::identity(1, 1),
                Box::new(FreePotential::new(1)),
                h,
            )
            .unwrap(),
        )
        .unwrap();
        let x = dvec(&[0.5]);
        let u = dvec(&[2.0]);
        let minus = sys.legendre_minus(&x, &u).unwrap();
        let plus = sys.legendre_plus(&x, &u).unwrap();
        assert_relative_eq!(minus.mu[0], h * u[0], epsilon = 1e-15);
        assert_relative_eq!(plus.mu[0], h * u[0], epsilon = 1e-15);
        assert_eq!(minus.base, x);
        assert_relative_eq!(plus.base[0], x[0] + h * u[0], epsilon = 1e-15);
    }

    #[test]
    fn stormer_verlet_step_is_explicit() {
        // v satisfies M (v - u)/h = -V'(x + h u): closed form root, and the
        // residual is linear in v so Newton needs at most 2 iterations.
        let h = 0.05;
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(1, h).unwrap(),
            StormerVerletLagrangian::new(
                DMatrix::from_element(1, 1, 2.0),
                Box::new(HarmonicPotential::scalar(1.5)),
                h,
            )
            .unwrap(),
        )
        .unwrap();
        let x = dvec(&[0.8]);
        let u = dvec(&[-0.4]);
        let y0 = x[0] + h * u[0];
        let closed_form = u[0] - h * (1.5 * y0) / 2.0;
        let (y, v, diag) = sys.del_step(&x, &u, None).unwrap();
        assert_relative_eq!(y[0], y0, epsilon = 1e-15);
        assert!((v[0] - closed_form).abs() <= 1e-12);
        assert!(diag.newton_iters <= 2, "iterations: {}", diag.newton_iters);
    }

    /// Wrapper hiding analytic second derivatives, to exercise the
    /// finite-difference Jacobian path.
    struct NoHessian<L: DiscreteLagrangian>(L);
    impl<L: DiscreteLagrangian> DiscreteLagrangian for NoHessian<L> {
        fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
            self.0.value(x, u)
        }
        fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            self.0.grad_x(x, u)
        }
        fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            self.0.grad_u(x, u)
        }
    }

    #[test]
    fn jacobian_matches_residual_differences() {
        let h = 0.05;
        let mut rng = StdRng::seed_from_u64(59);
        let mass = DMatrix::from_diagonal(&dvec(&[1.0, 0.5]));
        let stiff = DMatrix::from_row_slice(2, 2, &[2.0, -0.4, -0.4, 1.0]);
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(2, h).unwrap(),
            MidpointLagrangian::new(
                mass,
                Box::new(HarmonicPotential::new(stiff).unwrap()),
                h,
            )
            .unwrap(),
        )
        .unwrap();
        let rigid = DiscreteLagrangianSystem::new(
            crate::lie_group::make_so3_group_chart(h).unwrap(),
            RigidBodyLagrangian::new(Vector3::new(1.0, 2.0, 3.0)).unwrap(),
        )
        .unwrap();

        for _ in 0..10 {
            // Pair-groupoid system.
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let y = sys.chart().target_raw(&x, &u);
            let fl = sys.del_jacobian(&y, &v).unwrap();
            let s = 1e-6;
            for gamma in 0..2 {
                let mut hi = v.clone();
                hi[gamma] += s;
                let mut lo = v.clone();
                lo[gamma] -= s;
                let fd = (sys.del_residual(&x, &u, &hi).unwrap()
                    - sys.del_residual(&x, &u, &lo).unwrap())
                    / (2.0 * s);
                for mu in 0..2 {
                    assert!((fl[(gamma, mu)] - fd[mu]).abs() < 1e-6);
                }
            }

            // Lie-group system.
            let none = DVector::zeros(0);
            let u3 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let v3 = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let fl = rigid.del_jacobian(&none, &v3).unwrap();
            for gamma in 0..3 {
                let mut hi = v3.clone();
                hi[gamma] += s;
                let mut lo = v3.clone();
                lo[gamma] -= s;
                let fd = (rigid.del_residual(&none, &u3, &hi).unwrap()
                    - rigid.del_residual(&none, &u3, &lo).unwrap())
                    / (2.0 * s);
                for mu in 0..3 {
                    assert!((fl[(gamma, mu)] - fd[mu]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pair_groupoid_jacobian_has_closed_form() {
        // (FL_d)^g_m = h d2L/dx^m du^g - d2L/du^m du^g on the pair groupoid.
        let h = 0.1;
        let mass = DMatrix::from_diagonal(&dvec(&[1.0, 3.0]));
        let stiff = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.9]);
        let lag = MidpointLagrangian::new(
            mass,
            Box::new(HarmonicPotential::new(stiff).unwrap()),
            h,
        )
        .unwrap();
        let sys = DiscreteLagrangianSystem::new(make_pair_groupoid(2, h).unwrap(), lag).unwrap();
        let y = dvec(&[0.4, -0.6]);
        let v = dvec(&[1.0, 0.2]);
        let fl = sys.del_jacobian(&y, &v).unwrap();
        let hxu = sys.lagrangian().hess_xu(&y, &v).unwrap();
        let huu = sys.lagrangian().hess_uu(&y, &v).unwrap();
        for gamma in 0..2 {
            for mu in 0..2 {
                let expect = h * hxu[(mu, gamma)] - huu[(mu, gamma)];
                assert!((fl[(gamma, mu)] - expect).abs() < 1e-10);
            }
        }
    }

    /// Quadratic Lagrangian u^T A u / 2 with no base dependence.
    struct Quadratic {
        a: DMatrix<f64>,
    }
    impl DiscreteLagrangian for Quadratic {
        fn value(&self, _x: &DVector<f64>, u: &DVector<f64>) -> f64 {
            0.5 * u.dot(&(&self.a * u))
        }
        fn grad_x(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(x.len())
        }
        fn grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            &self.a * u
        }
        fn hess_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::zeros(x.len(), u.len()))
        }
        fn hess_uu(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(self.a.clone())
        }
    }

    #[test]
    fn quadratic_lagrangian_jacobian_and_regularity() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(2, 0.1).unwrap(),
            Quadratic { a: a.clone() },
        )
        .unwrap();
        let y = dvec(&[0.0, 0.0]);
        let v = dvec(&[0.7, -0.3]);
        let fl = sys.del_jacobian(&y, &v).unwrap();
        assert_relative_eq!(fl, -a.clone(), epsilon = 1e-14);

        let (cond, regular) = sys.regularity(&y, &v).unwrap();
        assert!(regular);
        let sv = a.svd(false, false).singular_values;
        assert_relative_eq!(cond, sv.max() / sv.min(), epsilon = 1e-10);
    }

    #[test]
    fn degenerate_lagrangian_is_singular() {
        struct Zero;
        impl DiscreteLagrangian for Zero {
            fn value(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> f64 {
                0.0
            }
            fn grad_x(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(x.len())
            }
            fn grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(u.len())
            }
        }
        let sys =
            DiscreteLagrangianSystem::new(make_pair_groupoid(1, 0.1).unwrap(), Zero).unwrap();
        let (cond, regular) = sys.regularity(&dvec(&[0.0]), &dvec(&[0.1])).unwrap();
        assert!(!regular);
        assert!(!cond.is_finite() || cond > 1e8);

        // A Lagrangian linear in x leaves the residual constant and nonzero
        // in v, so stepping reports the singular Jacobian.
        struct LinearInBase;
        impl DiscreteLagrangian for LinearInBase {
            fn value(&self, x: &DVector<f64>, _u: &DVector<f64>) -> f64 {
                x[0]
            }
            fn grad_x(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
                DVector::from_element(x.len(), 1.0)
            }
            fn grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(u.len())
            }
        }
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(1, 0.1).unwrap(),
            LinearInBase,
        )
        .unwrap();
        let err = sys.del_step(&dvec(&[0.0]), &dvec(&[0.1]), None).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { .. }));
    }

    #[test]
    fn omega_matrix_identities() {
        let h = 0.1;
        let sys = harmonic_midpoint(h);
        // At an identity element the left transport is I, so Omega is the
        // negative transpose of (FL_d).
        let x = dvec(&[0.3]);
        let zero = dvec(&[0.0]);
        let omega = sys.omega_matrix(&x, &zero).unwrap();
        let fl = sys.del_jacobian(&x, &zero).unwrap();
        assert_relative_eq!(omega, -fl.transpose(), epsilon = 1e-14);

        // det(Omega) = +/- det(L) det(FL_d), and the finite-difference form
        // Omega_{g m} = L^t_m d(F^-_g)/du^t.
        let u = dvec(&[0.4]);
        let omega = sys.omega_matrix(&x, &u).unwrap();
        let fl = sys.del_jacobian(&x, &u).unwrap();
        let left = crate::chart::left_of(sys.chart(), &x, &u).unwrap();
        assert_relative_eq!(
            omega.determinant().abs(),
            (left.determinant() * fl.determinant()).abs(),
            max_relative = 1e-8
        );
        let s = 1e-6;
        let mut fd = DMatrix::zeros(1, 1);
        for theta in 0..1 {
            let mut hi = u.clone();
            hi[theta] += s;
            let mut lo = u.clone();
            lo[theta] -= s;
            let d = (sys.legendre_minus(&x, &hi).unwrap().mu
                - sys.legendre_minus(&x, &lo).unwrap().mu)
                / (2.0 * s);
            for gamma in 0..1 {
                fd[(gamma, theta)] = d[gamma];
            }
        }
        // Omega_{g m} = sum_t L^t_m dF^-_g/du^t.
        for gamma in 0..1 {
            for mu in 0..1 {
                let mut expect = 0.0;
                for theta in 0..1 {
                    expect += left[(theta, mu)] * fd[(gamma, theta)];
                }
                assert!((omega[(gamma, mu)] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn backward_step_inverts_forward_step() {
        // Pair groupoid, midpoint harmonic oscillator.
        let sys = harmonic_midpoint(0.1);
        let x = dvec(&[1.0]);
        let u = dvec(&[0.3]);
        let (y, v, _) = sys.del_step(&x, &u, None).unwrap();
        let (g, _) = sys.del_step_backward(&y, &v).unwrap();
        assert_relative_eq!(g.x, x, epsilon = 1e-9);
        assert_relative_eq!(g.u, u, epsilon = 1e-9);

        // Lie-group chart, free rigid body.
        let rigid = DiscreteLagrangianSystem::new(
            crate::lie_group::make_so3_group_chart(0.05).unwrap(),
            RigidBodyLagrangian::new(Vector3::new(1.0, 2.0, 3.0)).unwrap(),
        )
        .unwrap();
        let none = DVector::zeros(0);
        let eta = dvec(&[1.0, 0.4, -0.2]);
        let (y, v, _) = rigid.del_step(&none, &eta, None).unwrap();
        let (g, _) = rigid.del_step_backward(&y, &v).unwrap();
        assert_relative_eq!(g.u, eta, epsilon = 1e-9);
    }

    #[test]
    fn free_particle_trajectory_is_uniform_motion() {
        let h = 0.5;
        let sys = DiscreteLagrangianSystem::new(
            make_pair_groupoid(1, h).unwrap(),
            MidpointLagrangian::new(
                DMatrix::identity(1, 1),
                Box::new(FreePotential::new(1)),
                h,
            )
            .unwrap(),
        )
        .unwrap();
        let traj = sys.simulate(&dvec(&[0.0]), &dvec(&[1.0]), 10);
        assert!(traj.completed());
        assert_eq!(traj.steps.len(), 10);
        for (k, element) in traj.elements().enumerate() {
            assert_eq!(element.x[0], k as f64 * h);
            assert_eq!(element.u[0], 1.0);
        }
        assert_eq!(composability_defect(sys.chart(), &traj), 0.0);
        assert!(sys.momentum_defect(&traj).unwrap() <= 1e-10);
    }

    #[test]
    fn finite_difference_jacobian_path_agrees() {
        let h = 0.1;
        let chart = make_pair_groupoid(1, h).unwrap();
        let analytic = harmonic_midpoint(h);
        let fd_sys = DiscreteLagrangianSystem::new(
            chart,
            NoHessian(
                MidpointLagrangian::new(
                    DMatrix::identity(1, 1),
                    Box::new(HarmonicPotential::scalar(1.0)),
                    h,
                )
                .unwrap(),
            ),
        )
        .unwrap();
        let x = dvec(&[1.0]);
        let u = dvec(&[0.2]);
        let (_, v_analytic, _) = analytic.del_step(&x, &u, None).unwrap();
        let (_, v_fd, _) = fd_sys.del_step(&x, &u, None).unwrap();
        assert_relative_eq!(v_analytic, v_fd, epsilon = 1e-10);

        // del_jacobian with differenced ingredients stays close to analytic.
        let fl_analytic = analytic.del_jacobian(&x, &u).unwrap();
        let fl_fd = fd_sys.del_jacobian(&x, &u).unwrap();
        assert_relative_eq!(fl_analytic, fl_fd, epsilon = 1e-6);
    }

    #[test]
    fn newton_failure_carries_best_iterate() {
        // A residual with no root: |.|-shaped, minimized but never zero.
        let residual =
            |v: &DVector<f64>| Ok(DVector::from_row_slice(&[v[0] * v[0] + 1.0]));
        let jacobian = |v: &DVector<f64>| {
            Ok(DMatrix::from_row_slice(1, 1, &[(2.0 * v[0]).max(0.05)]))
        };
        let err = newton_solve(
            &residual,
            &jacobian,
            dvec(&[2.0]),
            &NewtonParams::default(),
        )
        .unwrap_err();
        match err {
            Error::NewtonDiverged {
                residual,
                best_iterate,
                ..
            } => {
                assert!(residual >= 1.0);
                assert_eq!(best_iterate.len(), 1);
            }
            other => panic!("expected NewtonDiverged, got {other:?}"),
        }
    }
}
