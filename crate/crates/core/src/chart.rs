//! The local-coordinate groupoid contract and its derived structure objects.
//!
//! A chart describes a groupoid neighborhood of an identity in coordinates
//! `(x, u)` adapted to the source fibration: `x` are base coordinates, `u`
//! fiber coordinates, and identities sit at `(x, 0)`. The whole structure is
//! carried by three maps
//!
//! * `b(x, u)` — base coordinates of the target of the element `(x, u)`,
//! * `p(x, u, v)` — fiber part of the product `(x, u) . (b(x,u), v)`,
//! * `iota(x, u)` — fiber part of the inverse, so `(x,u)^{-1} = (b(x,u), iota(x,u))`,
//!
//! together with a validity predicate (the symmetric neighborhood). First
//! derivatives of `b` and `p` at the identities yield the anchor `rho`, the
//! transport matrices `L` and `R` and the structure constants `C`; these feed
//! the invariant vector-field bases and the discrete Euler-Lagrange residual.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::diff;
use crate::error::{Error, Result};

/// A groupoid element in adapted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    /// Base coordinates, length `n`. Length 0 for a Lie group over a point.
    pub x: DVector<f64>,
    /// Fiber coordinates, length `m`. The identity over `x` is `(x, 0)`.
    pub u: DVector<f64>,
}

impl ChartPoint {
    pub fn new(x: DVector<f64>, u: DVector<f64>) -> Self {
        Self { x, u }
    }

    pub fn from_slices(x: &[f64], u: &[f64]) -> Self {
        Self {
            x: DVector::from_row_slice(x),
            u: DVector::from_row_slice(u),
        }
    }

    /// The identity element over the base point `x`.
    pub fn identity(x: DVector<f64>, fiber_dim: usize) -> Self {
        Self {
            x,
            u: DVector::zeros(fiber_dim),
        }
    }
}

/// Whether a chart supplies analytic derivatives or relies on differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// Analytic Jacobians of the inversion map `(x, u) -> (b(x,u), iota(x,u))`,
/// used to push Lagrangian gradients through the chart inversion.
#[derive(Debug, Clone)]
pub struct InversionJacobians {
    /// `d b / d x`, `n x n`.
    pub target_x: DMatrix<f64>,
    /// `d b / d u`, `n x m`.
    pub target_u: DMatrix<f64>,
    /// `d iota / d x`, `m x n`.
    pub iota_x: DMatrix<f64>,
    /// `d iota / d u`, `m x m`.
    pub iota_u: DMatrix<f64>,
}

/// A groupoid chart: structure functions plus a validity domain.
///
/// The raw maps `target_raw`, `product_raw`, `inversion_fiber_raw` are total
/// functions of coordinates and perform no domain checking; use the
/// free functions [`target`], [`product`], [`inverse`] for checked access.
/// All optional methods default to `None`, in which case derived quantities
/// fall back to central differences.
pub trait GroupoidChart: Send + Sync {
    fn base_dim(&self) -> usize;
    fn fiber_dim(&self) -> usize;

    /// `b(x, u)`: base coordinates of the target.
    fn target_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `p(x, u, v)`: fiber part of the product of `(x, u)` with `(b(x,u), v)`.
    fn product_raw(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// `iota(x, u)`: fiber part of the inverse of `(x, u)`.
    fn inversion_fiber_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Membership in the symmetric-neighborhood validity domain.
    fn in_domain(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool;

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    /// Anchor `rho^i_gamma(x) = d b^i / d u^gamma (x, 0)`, `n x m`.
    fn rho(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Left transport `L^gamma_mu(x, u) = d p^gamma / d v^mu (x, u, 0)`,
    /// `m x m` with entry `(gamma, mu)`.
    fn left_transport(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Right transport `R^gamma_mu(x, v) = d p^gamma / d u^mu (x, 0, v)`,
    /// `m x m` with entry `(gamma, mu)`.
    fn right_transport(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Fiber derivative of the right transport: element `gamma` of the
    /// returned vector is the `m x m` matrix `d R^nu_mu / d v^gamma (x, v)`
    /// with entry `(nu, mu)`.
    fn right_transport_deriv(
        &self,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Structure constants `C^gamma_{mu nu}(x)`: element `gamma` is the
    /// antisymmetric `m x m` matrix with entry `(mu, nu)`.
    fn structure_constants(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Analytic Jacobians of the inversion map at `(x, u)`.
    fn inversion_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<InversionJacobians> {
        None
    }

    /// Draw one in-domain point. Charts choose their own sampling region,
    /// sized so that products of sampled pairs stay inside the domain.
    fn sample_point(&self, rng: &mut dyn RngCore) -> ChartPoint;
}

impl<C: GroupoidChart + ?Sized> GroupoidChart for &C {
    fn base_dim(&self) -> usize {
        (**self).base_dim()
    }
    fn fiber_dim(&self) -> usize {
        (**self).fiber_dim()
    }
    fn target_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).target_raw(x, u)
    }
    fn product_raw(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        (**self).product_raw(x, u, v)
    }
    fn inversion_fiber_raw(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).inversion_fiber_raw(x, u)
    }
    fn in_domain(&self, x: &DVector<f64>, u: &DVector<f64>) -> bool {
        (**self).in_domain(x, u)
    }
    fn derivative_mode(&self) -> DerivativeMode {
        (**self).derivative_mode()
    }
    fn rho(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).rho(x)
    }
    fn left_transport(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).left_transport(x, u)
    }
    fn right_transport(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).right_transport(x, v)
    }
    fn right_transport_deriv(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Option<Vec<DMatrix<f64>>> {
        (**self).right_transport_deriv(x, v)
    }
    fn structure_constants(&self, x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        (**self).structure_constants(x)
    }
    fn inversion_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<InversionJacobians> {
        (**self).inversion_jacobians(x, u)
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> ChartPoint {
        (**self).sample_point(rng)
    }
}

fn check_in_domain<C: GroupoidChart + ?Sized>(
    chart: &C,
    x: &DVector<f64>,
    u: &DVector<f64>,
    what: &str,
) -> Result<()> {
    if chart.in_domain(x, u) {
        Ok(())
    } else {
        Err(Error::OutOfChart(format!(
            "{what}: x = {:?}, u = {:?}",
            x.as_slice(),
            u.as_slice()
        )))
    }
}

/// Target of an element: `beta(x, u)` has base coordinates `b(x, u)`.
pub fn target<C: GroupoidChart + ?Sized>(chart: &C, g: &ChartPoint) -> Result<DVector<f64>> {
    check_in_domain(chart, &g.x, &g.u, "target argument")?;
    Ok(chart.target_raw(&g.x, &g.u))
}

/// Fiber part of the product of `g = (x, u)` with the element `(b(x,u), v)`.
///
/// The composability requirement (second factor attached at the target of the
/// first) is implicit in the coordinates. The composite must remain inside
/// the enclosing neighborhood; this is checked eagerly.
pub fn product<C: GroupoidChart + ?Sized>(
    chart: &C,
    g: &ChartPoint,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_in_domain(chart, &g.x, &g.u, "product first factor")?;
    let y = chart.target_raw(&g.x, &g.u);
    check_in_domain(chart, &y, v, "product second factor")?;
    let w = chart.product_raw(&g.x, &g.u, v);
    check_in_domain(chart, &g.x, &w, "product composite")?;
    Ok(w)
}

/// Inverse element: `(x, u)^{-1} = (b(x,u), iota(x,u))`.
pub fn inverse<C: GroupoidChart + ?Sized>(chart: &C, g: &ChartPoint) -> Result<ChartPoint> {
    check_in_domain(chart, &g.x, &g.u, "inverse argument")?;
    Ok(ChartPoint::new(
        chart.target_raw(&g.x, &g.u),
        chart.inversion_fiber_raw(&g.x, &g.u),
    ))
}

/// Anchor, transports and structure constants of a chart.
#[derive(Debug, Clone)]
pub struct StructureTensors {
    /// `rho^i_gamma(x)`, `n x m`.
    pub rho: DMatrix<f64>,
    /// `L^gamma_mu(x, u)`, entry `(gamma, mu)`.
    pub left: DMatrix<f64>,
    /// `R^gamma_mu(x, v)`, entry `(gamma, mu)`.
    pub right: DMatrix<f64>,
    /// `C^gamma_{mu nu}(x)`: element `gamma` has entry `(mu, nu)`.
    pub constants: Vec<DMatrix<f64>>,
}

pub(crate) fn rho_of<C: GroupoidChart + ?Sized>(chart: &C, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    if let Some(r) = chart.rho(x) {
        return Ok(r);
    }
    let zero = DVector::zeros(chart.fiber_dim());
    diff::jacobian_vec(
        |u| chart.target_raw(x, u),
        &zero,
        chart.base_dim(),
        "b in u",
    )
}

pub(crate) fn left_of<C: GroupoidChart + ?Sized>(
    chart: &C,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if let Some(l) = chart.left_transport(x, u) {
        return Ok(l);
    }
    let zero = DVector::zeros(chart.fiber_dim());
    diff::jacobian_vec(
        |v| chart.product_raw(x, u, v),
        &zero,
        chart.fiber_dim(),
        "p in v",
    )
}

pub(crate) fn right_of<C: GroupoidChart + ?Sized>(
    chart: &C,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if let Some(r) = chart.right_transport(x, v) {
        return Ok(r);
    }
    let zero = DVector::zeros(chart.fiber_dim());
    diff::jacobian_vec(
        |u| chart.product_raw(x, u, v),
        &zero,
        chart.fiber_dim(),
        "p in u",
    )
}

pub(crate) fn right_deriv_of<C: GroupoidChart + ?Sized>(
    chart: &C,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    if let Some(d) = chart.right_transport_deriv(x, v) {
        return Ok(d);
    }
    // dR^nu_mu / dv^gamma by differencing R itself.
    let m = chart.fiber_dim();
    let s = diff::fd_step(v.norm());
    let mut out = vec![DMatrix::zeros(m, m); m];
    for gamma in 0..m {
        let mut hi = v.clone();
        hi[gamma] += s;
        let mut lo = v.clone();
        lo[gamma] -= s;
        let rhi = right_of(chart, x, &hi)?;
        let rlo = right_of(chart, x, &lo)?;
        out[gamma] = (rhi - rlo) / (2.0 * s);
    }
    Ok(out)
}

fn constants_of<C: GroupoidChart + ?Sized>(chart: &C, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    if let Some(c) = chart.structure_constants(x) {
        return Ok(c);
    }
    // C^gamma_{mu nu} = d2 p^gamma / (du^mu dv^nu)(x,0,0)
    //                 - d2 p^gamma / (dv^mu du^nu)(x,0,0).
    let m = chart.fiber_dim();
    let zero = DVector::zeros(m);
    let duv = diff::mixed_second(
        |u, v| chart.product_raw(x, u, v),
        &zero,
        &zero,
        m,
        "p in (u, v)",
    )?;
    let mut out = vec![DMatrix::zeros(m, m); m];
    for gamma in 0..m {
        for mu in 0..m {
            for nu in 0..m {
                out[gamma][(mu, nu)] = duv[gamma][(mu, nu)] - duv[gamma][(nu, mu)];
            }
        }
    }
    Ok(out)
}

/// Anchor at `x`, left transport at `(x, u)`, right transport at `(x, v)` and
/// structure constants at `x`, analytic where the chart provides them and by
/// central differences otherwise.
pub fn structure_tensors<C: GroupoidChart + ?Sized>(
    chart: &C,
    x: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<StructureTensors> {
    check_in_domain(chart, x, u, "structure tensor point (x, u)")?;
    check_in_domain(chart, x, v, "structure tensor point (x, v)")?;
    Ok(StructureTensors {
        rho: rho_of(chart, x)?,
        left: left_of(chart, x, u)?,
        right: right_of(chart, x, v)?,
        constants: constants_of(chart, x)?,
    })
}

/// A tangent vector at a chart point, split into base and fiber components.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub base: DVector<f64>,
    pub fiber: DVector<f64>,
}

/// Local basis of left-invariant vector fields at `g`: the `gamma`-th field
/// has no base component and fiber component `L^mu_gamma(x, u)` (column
/// `gamma` of the left transport).
pub fn left_invariant_basis<C: GroupoidChart + ?Sized>(
    chart: &C,
    g: &ChartPoint,
) -> Result<Vec<TangentVector>> {
    check_in_domain(chart, &g.x, &g.u, "left-invariant basis point")?;
    let l = left_of(chart, &g.x, &g.u)?;
    let n = chart.base_dim();
    Ok((0..chart.fiber_dim())
        .map(|gamma| TangentVector {
            base: DVector::zeros(n),
            fiber: l.column(gamma).into_owned(),
        })
        .collect())
}

/// Local basis of right-invariant vector fields at `g`: the `gamma`-th field
/// has base component `-rho^i_gamma(x)` and fiber component `R^mu_gamma(x, u)`.
pub fn right_invariant_basis<C: GroupoidChart + ?Sized>(
    chart: &C,
    g: &ChartPoint,
) -> Result<Vec<TangentVector>> {
    check_in_domain(chart, &g.x, &g.u, "right-invariant basis point")?;
    let rho = rho_of(chart, &g.x)?;
    let r = right_of(chart, &g.x, &g.u)?;
    Ok((0..chart.fiber_dim())
        .map(|gamma| TangentVector {
            base: -rho.column(gamma).into_owned(),
            fiber: r.column(gamma).into_owned(),
        })
        .collect())
}
