//! Action (transformation) groupoid for a right SO(3) action, in Cayley
//! coordinates on the group factor.
//!
//! An element with coordinates `(x, u)` is the pair `(x, cay(h hat(u)))`; its
//! target is the moved base point `x . cay(h hat(u))`. The base manifold is
//! carried in ambient `R^3`; for the heavy top it is the unit sphere, kept on
//! the sphere by the action itself rather than by 2-dimensional charts. The
//! fiber structure (product, inversion, transports) is that of the group
//! chart and does not depend on the base point.
//!
//! The action map must be bilinear in `(x, g)` — e.g. row-vector times
//! matrix — so that base derivatives can be formed exactly by evaluating the
//! action on basis vectors and on derivative matrices.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, RngCore};

use crate::chart::{ChartPoint, DerivativeMode, GroupoidChart, InversionJacobians};
use crate::error::{Error, Result};
use crate::lie_group::So3CayleyChart;
use crate::so3;

/// Right action of a 3x3 matrix on an ambient base point. Must be bilinear.
pub type RightAction = Box<dyn Fn(&Vector3<f64>, &Matrix3<f64>) -> Vector3<f64> + Send + Sync>;

/// Slack on the unit-norm base constraint; integration keeps the norm to
/// roundoff, re-anchored runs included.
const UNIT_NORM_SLACK: f64 = 1e-9;

pub struct ActionGroupoidChart {
    group: So3CayleyChart,
    action: RightAction,
}

impl std::fmt::Debug for ActionGroupoidChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActionGroupoidChart")
            .field("group", &self.group)
            .finish_non_exhaustive()
    }
}

/// Builds the action groupoid `M x G` for a right action of SO(3) on ambient
/// `R^3`, validating the identity law `x . e = x` on sample base points.
pub fn make_action_groupoid(
    group: So3CayleyChart,
    action: RightAction,
) -> Result<ActionGroupoidChart> {
    let samples = [
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.6, -0.48, 0.64),
        Vector3::new(-0.36, 0.8, 0.48),
    ];
    for x in &samples {
        let moved = action(x, &Matrix3::identity());
        if (moved - x).norm() > 1e-12 {
            return Err(Error::Config(format!(
                "action violates the identity law at {:?}: moved to {:?}",
                x.as_slice(),
                moved.as_slice()
            )));
        }
    }
    Ok(ActionGroupoidChart { group, action })
}

/// The heavy-top configuration groupoid: SO(3) acting on unit row vectors by
/// right multiplication.
pub fn heavy_top_chart(h: f64) -> Result<ActionGroupoidChart> {
    let group = crate::lie_group::make_so3_group_chart(h)?;
    make_action_groupoid(group, Box::new(|x, g| g.transpose() * x))
}

impl ActionGroupoidChart {
    pub fn time_step(&self) -> f64 {
        self.group.time_step()
    }

    pub fn group(&self) -> &So3CayleyChart {
        &self.group
    }

    pub fn base(&self, x: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(x[0], x[1], x[2])
    }

    pub fn fiber(&self, u: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(u[0], u[1], u[2])
    }

    pub fn apply(&self, x: &Vector3<f64>, g: &Matrix3<f64>) -> Vector3<f64> {
        (self.action)(x, g)
    }

    /// Group element represented by the fiber coordinate.
    pub fn element(&self, u: &DVector<f64>) -> Result<Matrix3<f64>> {
        self.group.element(u)
    }
}

impl GroupoidChart for ActionGroupoidChart {
    fn base_dim(&self) -> usize {
        3
    }

    fn fiber_dim(&self) -> usize {
        3
    }

    fn target_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let g = self
            .group
            .element(u)
            .expect("target inside chart domain");
        let moved = (self.action)(&self.base(x), &g);
        DVector::from_row_slice(moved.as_slice())
    }

    fn product_raw(&self, _x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.group.product_raw(&DVector::zeros(0), u, v)
    }

    fn inversion_fiber_raw(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        -u
    }

    fn in_domain(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        x.len() == 3
            && u.len() == 3
            && x.iter().chain(u.iter()).all(|a| a.is_finite())
            && (x.norm() - 1.0).abs() <= UNIT_NORM_SLACK
            && self.group.time_step() * u.norm() < self.group.radius()
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    /// `rho^i_gamma(x) = h (x . e_gamma)^i`: the anchor columns are the
    /// h-scaled infinitesimal generators of the action.
    fn rho(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let h = self.group.time_step();
        let xb = self.base(x);
        let mut rho = DMatrix::zeros(3, 3);
        for (gamma, e) in so3::so3_basis().iter().enumerate() {
            let col = (self.action)(&xb, e) * h;
            for i in 0..3 {
                rho[(i, gamma)] = col[i];
            }
        }
        Some(rho)
    }

    fn left_transport(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.group.left_transport(&DVector::zeros(0), u)
    }

    fn right_transport(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.group.right_transport(&DVector::zeros(0), v)
    }

    fn right_transport_deriv(
        &self,
        _x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        self.group.right_transport_deriv(&DVector::zeros(0), v)
    }

    fn structure_constants(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        self.group.structure_constants(&DVector::zeros(0))
    }

    fn inversion_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<InversionJacobians> {
        let h = self.group.time_step();
        let xb = self.base(x);
        let ub = self.fiber(u) * h;
        let g = so3::cay(&so3::hat(&ub)).ok()?;

        // d b / d x: columns are the images of the base basis vectors.
        let mut target_x = DMatrix::zeros(3, 3);
        for i in 0..3 {
            let col = (self.action)(&Vector3::ith(i, 1.0), &g);
            for r in 0..3 {
                target_x[(r, i)] = col[r];
            }
        }

        // d b / d u^gamma = x . (h dcay_{h hat(u)}(e_gamma) cay(h hat(u))),
        // the right-trivialized derivative of the Cayley map.
        let mut target_u = DMatrix::zeros(3, 3);
        for gamma in 0..3 {
            let d = so3::dcay(&so3::hat(&ub), &so3::so3_basis()[gamma]).ok()?;
            let col = (self.action)(&xb, &(d * g * h));
            for r in 0..3 {
                target_u[(r, gamma)] = col[r];
            }
        }

        Some(InversionJacobians {
            target_x,
            target_u,
            iota_x: DMatrix::zeros(3, 3),
            iota_u: -DMatrix::identity(3, 3),
        })
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> ChartPoint {
        // Base uniformly on the unit sphere, fiber as in the group chart.
        let x: Vector3<f64> = loop {
            let raw = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = raw.norm();
            if n > 1e-3 && n <= 1.0 {
                break raw / n;
            }
        };
        let fiber = self.group.sample_point(rng).u;
        ChartPoint::new(DVector::from_row_slice(x.as_slice()), fiber)
    }
}
