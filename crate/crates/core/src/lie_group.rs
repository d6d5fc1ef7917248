//! A matrix Lie group as a groupoid over a point, in Cayley coordinates.
//!
//! The chart coordinate `u` represents the group element `cay(h hat(u))`, so
//! `u` plays the role of an averaged body velocity over one time step. The
//! base is a single point: every base vector has length zero and all
//! base-indexed sums are empty.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, RngCore};

use crate::chart::{ChartPoint, DerivativeMode, GroupoidChart, InversionJacobians};
use crate::error::{Error, Result};
use crate::so3;

/// Default domain radius, measured in `|h u|` (twice the tangent of half the
/// rotation angle). 2.0 keeps triple products of the sampling ball inside the
/// domain while staying far from the Cayley singularity at angle pi.
const DEFAULT_RADIUS: f64 = 2.0;

/// Fraction of the domain radius used when sampling, so products and triple
/// products of sampled elements stay in the domain.
const SAMPLE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct So3CayleyChart {
    h: f64,
    radius: f64,
}

/// SO(3) with the Cayley retraction and the standard so(3) basis.
pub fn make_so3_group_chart(h: f64) -> Result<So3CayleyChart> {
    if !(h > 0.0) {
        return Err(Error::Config(format!(
            "Lie group chart needs a positive time step, got {h}"
        )));
    }
    Ok(So3CayleyChart {
        h,
        radius: DEFAULT_RADIUS,
    })
}

impl So3CayleyChart {
    pub fn time_step(&self) -> f64 {
        self.h
    }

    /// Domain radius in `|h u|`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn fiber(&self, u: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(u[0], u[1], u[2])
    }

    /// Group element represented by the fiber coordinate: `cay(h hat(u))`.
    pub fn element(&self, u: &DVector<f64>) -> Result<Matrix3<f64>> {
        so3::cay(&so3::hat(&(self.fiber(u) * self.h)))
    }

    fn product_coords(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> Result<Vector3<f64>> {
        let gu = so3::cay(&so3::hat(&(u * self.h)))?;
        let gv = so3::cay(&so3::hat(&(v * self.h)))?;
        let (skew, _) = so3::skew_split(&so3::cay_inv(&(gu * gv))?);
        Ok(so3::vee(&skew) / self.h)
    }

    /// Left transport column: `dcay^{-1}_{h hat(u)}(Ad_{cay(h hat(u))} e_g)`,
    /// which collapses to the sandwich `(I + h hat(u)/2) e_g (I - h hat(u)/2)`.
    fn left_columns(&self, u: &Vector3<f64>) -> Matrix3<f64> {
        let xh = so3::hat(&(u * self.h));
        let id = Matrix3::identity();
        let plus = id + xh * 0.5;
        let minus = id - xh * 0.5;
        let mut m = Matrix3::zeros();
        for (gamma, e) in so3::so3_basis().iter().enumerate() {
            let (skew, _) = so3::skew_split(&(plus * e * minus));
            m.set_column(gamma, &so3::vee(&skew));
        }
        m
    }

    /// Right transport column: `dcay^{-1}_{h hat(v)}(e_g)`,
    /// the sandwich `(I - h hat(v)/2) e_g (I + h hat(v)/2)`.
    fn right_columns(&self, v: &Vector3<f64>) -> Matrix3<f64> {
        so3::dcay_inv_matrix(&(v * self.h))
    }

    fn right_columns_deriv(&self, v: &Vector3<f64>) -> Vec<DMatrix<f64>> {
        let xh = so3::hat(&(v * self.h));
        let id = Matrix3::identity();
        let plus = id + xh * 0.5;
        let minus = id - xh * 0.5;
        let basis = so3::so3_basis();
        let mut out = vec![DMatrix::zeros(3, 3); 3];
        for gamma in 0..3 {
            let eg = &basis[gamma] * (self.h * 0.5);
            for mu in 0..3 {
                let em = &basis[mu];
                // d/dv^gamma [(I - h hat(v)/2) e_mu (I + h hat(v)/2)]
                let d = -eg * em * plus + minus * em * eg;
                let (skew, _) = so3::skew_split(&d);
                let col = so3::vee(&skew);
                for nu in 0..3 {
                    out[gamma][(nu, mu)] = col[nu];
                }
            }
        }
        out
    }
}

impl GroupoidChart for So3CayleyChart {
    fn base_dim(&self) -> usize {
        0
    }

    fn fiber_dim(&self) -> usize {
        3
    }

    fn target_raw(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn product_raw(&self, _x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let w = self
            .product_coords(&self.fiber(u), &self.fiber(v))
            .expect("product inside chart domain");
        DVector::from_row_slice(w.as_slice())
    }

    fn inversion_fiber_raw(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        -u
    }

    fn in_domain(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        x.len() == 0
            && u.len() == 3
            && u.iter().all(|a| a.is_finite())
            && self.h * u.norm() < self.radius
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn rho(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(0, 3))
    }

    fn left_transport(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = self.left_columns(&self.fiber(u));
        Some(DMatrix::from_column_slice(3, 3, m.as_slice()))
    }

    fn right_transport(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let m = self.right_columns(&self.fiber(v));
        Some(DMatrix::from_column_slice(3, 3, m.as_slice()))
    }

    fn right_transport_deriv(
        &self,
        _x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        Some(self.right_columns_deriv(&self.fiber(v)))
    }

    /// `C^gamma_{mu nu} = h eps_{gamma mu nu}`: the so(3) bracket constants
    /// scaled by the time step, the scale confirmed numerically against
    /// second differences of the product.
    fn structure_constants(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let mut c = vec![DMatrix::zeros(3, 3); 3];
        for gamma in 0..3 {
            let mu = (gamma + 1) % 3;
            let nu = (gamma + 2) % 3;
            c[gamma][(mu, nu)] = self.h;
            c[gamma][(nu, mu)] = -self.h;
        }
        Some(c)
    }

    fn inversion_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<InversionJacobians> {
        Some(InversionJacobians {
            target_x: DMatrix::zeros(0, 0),
            target_u: DMatrix::zeros(0, 3),
            iota_x: DMatrix::zeros(3, 0),
            iota_u: -DMatrix::identity(3, 3),
        })
    }

    fn sample_point(&self, rng: &mut dyn RngCore) -> ChartPoint {
        let bound = SAMPLE_FRACTION * self.radius / self.h;
        loop {
            let u = DVector::from_fn(3, |_, _| rng.gen_range(-bound..bound));
            if u.norm() <= bound {
                return ChartPoint::new(DVector::zeros(0), u);
            }
        }
    }
}
