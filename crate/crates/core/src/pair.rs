//! Pair groupoid over `R^n` in time-step-scaled coordinates.
//!
//! The element with coordinates `(x, u)` is the pair `(x, x + h u)`, so `u`
//! is the average velocity across the step. All structure functions are
//! affine: `b(x,u) = x + h u`, `p(x,u,v) = u + v`, `iota(x,u) = -u`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::chart::{ChartPoint, DerivativeMode, GroupoidChart, InversionJacobians};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PairGroupoidChart {
    dim: usize,
    h: f64,
}

/// Pair groupoid chart of the given base dimension and time step.
pub fn make_pair_groupoid(dim: usize, h: f64) -> Result<PairGroupoidChart> {
    if dim < 1 {
        return Err(Error::Config("pair groupoid needs dim >= 1".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Config(format!(
            "pair groupoid needs a positive time step, got {h}"
        )));
    }
    Ok(PairGroupoidChart { dim, h })
}

impl PairGroupoidChart {
    pub fn time_step(&self) -> f64 {
        self.h
    }
}

impl GroupoidChart for PairGroupoidChart {
    fn base_dim(&self) -> usize {
        self.dim
    }

    fn fiber_dim(&self) -> usize {
        self.dim
    }

    fn target_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        x + u * self.h
    }

    fn product_raw(&self, _x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        u + v
    }

    fn inversion_fiber_raw(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        -u
    }

    fn in_domain(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        x.len() == self.dim
            && u.len() == self.dim
            && x.iter().chain(u.iter()).all(|a| a.is_finite())
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn rho(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim) * self.h)
    }

    fn left_transport(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim))
    }

    fn right_transport(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.dim, self.dim))
    }

    fn right_transport_deriv(
        &self,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.dim, self.dim); self.dim])
    }

    fn structure_constants(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.dim, self.dim); self.dim])
    }

    fn inversion_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<InversionJacobians> {
        Some(InversionJacobians {
            target_x: DMatrix::identity(self.dim, self.dim),
            target_u: DMatrix::identity(self.dim, self.dim) * self.h,
            iota_x: DMatrix::zeros(self.dim, self.dim),
            iota_u: -DMatrix::identity(self.dim, self.dim),
        })
    }

    /// Dyadic samples (multiples of 2^-10 in [-2, 2]): with a dyadic time
    /// step every structure-function evaluation is exact in f64, so axiom
    /// violations measure structure, not rounding.
    fn sample_point(&self, rng: &mut dyn RngCore) -> ChartPoint {
        let quantum = 1.0 / 1024.0;
        let draw = |rng: &mut dyn RngCore| {
            DVector::from_fn(self.dim, |_, _| {
                rng.gen_range(-2048..=2048) as f64 * quantum
            })
        };
        ChartPoint::new(draw(rng), draw(rng))
    }
}
