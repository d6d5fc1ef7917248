//! Anchored stepping for runs whose accumulated group element leaves any
//! single chart.
//!
//! Group-translation bisections let the discrete Euler-Lagrange equations be
//! solved in a fixed chart around the identity: translating by the
//! accumulated element maps invariant vector fields to invariant vector
//! fields, so the translated residual written in chart coordinates is again
//! the near-identity residual. The anchor `G_k` tracks the accumulated
//! translation, updated as `G_{k+1} = G_k cay(h hat(u_k))`, while every
//! per-step solve sees only small increments. For action groupoids the base
//! state rides along through the chart's own target map.

use nalgebra::{DVector, Matrix3};

use crate::action::ActionGroupoidChart;
use crate::chart::{ChartPoint, GroupoidChart};
use crate::error::{Error, Result};
use crate::lie_group::So3CayleyChart;
use crate::solver::{
    DiscreteLagrangian, DiscreteLagrangianSystem, SimulationFailure, StepDiagnostics,
};

/// Charts whose fiber coordinates represent elements of a matrix group, so
/// that increments can be accumulated into an anchor element.
pub trait AnchoredChart: GroupoidChart {
    /// The group element represented by the fiber coordinate `u`.
    fn increment(&self, u: &DVector<f64>) -> Result<Matrix3<f64>>;
}

impl AnchoredChart for So3CayleyChart {
    fn increment(&self, u: &DVector<f64>) -> Result<Matrix3<f64>> {
        self.element(u)
    }
}

impl AnchoredChart for ActionGroupoidChart {
    fn increment(&self, u: &DVector<f64>) -> Result<Matrix3<f64>> {
        self.element(u)
    }
}

/// One accepted anchored step: the anchor reached after the increment of the
/// previous element, and the newly solved element in chart coordinates.
#[derive(Debug, Clone)]
pub struct AnchoredStep {
    pub anchor: Matrix3<f64>,
    pub point: ChartPoint,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug)]
pub struct AnchoredTrajectory {
    pub initial_anchor: Matrix3<f64>,
    pub initial: ChartPoint,
    pub steps: Vec<AnchoredStep>,
    pub failure: Option<SimulationFailure>,
}

impl AnchoredTrajectory {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Anchor after the last accepted step.
    pub fn final_anchor(&self) -> Matrix3<f64> {
        self.steps
            .last()
            .map(|s| s.anchor)
            .unwrap_or(self.initial_anchor)
    }
}

/// Runs `steps` anchored steps from `(x0, u0)` with anchor `anchor0`.
///
/// Each step solves the discrete Euler-Lagrange residual near the identity,
/// then advances the anchor by the increment just consumed. An increment
/// leaving the chart domain is a step-size failure: translation can recenter
/// the chart but cannot enlarge it.
pub fn reanchored_simulate<C, L>(
    sys: &DiscreteLagrangianSystem<C, L>,
    anchor0: Matrix3<f64>,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    steps: usize,
) -> AnchoredTrajectory
where
    C: AnchoredChart,
    L: DiscreteLagrangian,
{
    let mut trajectory = AnchoredTrajectory {
        initial_anchor: anchor0,
        initial: ChartPoint::new(x0.clone(), u0.clone()),
        steps: Vec::with_capacity(steps),
        failure: None,
    };
    let mut anchor = anchor0;
    let mut x = x0.clone();
    let mut u = u0.clone();
    for k in 1..=steps {
        let outcome = sys
            .del_step(&x, &u, None)
            .and_then(|(y, v, diag)| Ok((y, v, diag, sys.chart().increment(&u)?)));
        match outcome {
            Ok((y, v, mut diagnostics, increment)) => {
                anchor *= increment;
                diagnostics.reanchored = true;
                trajectory.steps.push(AnchoredStep {
                    anchor,
                    point: ChartPoint::new(y.clone(), v.clone()),
                    diagnostics,
                });
                x = y;
                u = v;
            }
            Err(error) => {
                let error = match error {
                    Error::OutOfChart(msg) => Error::StepTooLarge(msg),
                    other => other,
                };
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
