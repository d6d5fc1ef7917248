//! Property checks of the groupoid axioms over sampled points.
//!
//! Structural identities are checked pointwise; the identities `b(x,0) = x`,
//! the unit laws, target compatibility, associativity and the inversion laws
//! must hold at the caller's tolerance. The derivative identities (transport
//! matrices equal to the identity at the units, `d iota / d u (x,0) = -I`)
//! are probed with central differences of dyadic step `2^-16`, so that for
//! charts with affine structure functions the probes introduce no rounding
//! of their own.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chart::{ChartPoint, GroupoidChart};
use crate::error::{Error, Result};

/// Finite-difference step for the derivative-identity probes. A power of two
/// close to 1e-5 keeps the probes exact on affine charts with dyadic samples.
const DERIV_STEP: f64 = 1.0 / 65536.0;

/// Checks whose violations are dominated by differencing error rather than
/// chart arithmetic are held to at least this tolerance.
const DERIV_TOL_FLOOR: f64 = 1e-6;

/// Result of one axiom over the sample set.
#[derive(Debug, Clone)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub max_violation: f64,
    pub tolerance: f64,
}

impl AxiomCheck {
    pub fn passed(&self) -> bool {
        self.max_violation <= self.tolerance
    }
}

/// Per-axiom maximum violations over the sampled points.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub samples: usize,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(AxiomCheck::passed)
    }

    pub fn failed_names(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name)
            .collect()
    }

    pub fn max_violation(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_violation)
            .fold(0.0, f64::max)
    }
}

struct Accum {
    name: &'static str,
    max: f64,
    tol: f64,
}

impl Accum {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            name,
            max: 0.0,
            tol,
        }
    }

    fn record(&mut self, violation: f64) {
        if violation > self.max {
            self.max = violation;
        }
    }

    fn finish(self) -> AxiomCheck {
        AxiomCheck {
            name: self.name,
            max_violation: self.max,
            tolerance: self.tol,
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Run the axiom suite on `count` in-domain points from `sampler`.
///
/// The sampler may reject (return `None`) or produce out-of-domain points;
/// after `50 * count` attempts without reaching `count` accepted points the
/// check aborts with a sampling error.
pub fn check_axioms<C: GroupoidChart + ?Sized>(
    chart: &C,
    sampler: &mut dyn FnMut() -> Option<ChartPoint>,
    count: usize,
    tol: f64,
) -> Result<AxiomReport> {
    let m = chart.fiber_dim();
    let deriv_tol = tol.max(DERIV_TOL_FLOOR);

    let mut points = Vec::with_capacity(count);
    let max_attempts = 50 * count.max(1);
    let mut attempts = 0;
    while points.len() < count {
        if attempts >= max_attempts {
            return Err(Error::SamplerExhausted {
                attempts,
                accepted: points.len(),
                requested: count,
            });
        }
        attempts += 1;
        if let Some(g) = sampler() {
            if g.x.len() == chart.base_dim()
                && g.u.len() == m
                && chart.in_domain(&g.x, &g.u)
            {
                points.push(g);
            }
        }
    }

    let mut identity_target = Accum::new("target of identity: b(x,0) = x", tol);
    let mut right_unit = Accum::new("right unit law: p(x,u,0) = u", tol);
    let mut left_unit = Accum::new("left unit law: p(x,0,v) = v", tol);
    let mut target_compat = Accum::new("target compatibility: b(b(x,u),v) = b(x,p(x,u,v))", tol);
    let mut associativity = Accum::new("associativity of p", tol);
    let mut iota_identity = Accum::new("inversion at identity: iota(x,0) = 0", tol);
    let mut inv_composite = Accum::new("inversion composite: p(x,u,iota(x,u)) = 0", tol);
    let mut double_inv = Accum::new("double inversion returns the point", tol);
    let mut domain_closed = Accum::new("domain closed under inversion", tol);
    let mut iota_deriv = Accum::new("d iota/du at identity = -I", tol);
    let mut left_unit_deriv = Accum::new("dp/du(x,u,0) = I", deriv_tol);
    let mut right_unit_deriv = Accum::new("dp/dv(x,0,v) = I", deriv_tol);

    for (i, g) in points.iter().enumerate() {
        let x = &g.x;
        let u = &g.u;
        let zero = DVector::zeros(m);

        identity_target.record((chart.target_raw(x, &zero) - x).norm());
        right_unit.record((chart.product_raw(x, u, &zero) - u).norm());
        left_unit.record((chart.product_raw(x, &zero, u) - u).norm());
        iota_identity.record(chart.inversion_fiber_raw(x, &zero).norm());

        // Pairs and triples reuse the fibers of neighboring samples.
        let v = &points[(i + 1) % points.len()].u;
        let w = &points[(i + 2) % points.len()].u;
        let y = chart.target_raw(x, u);
        if chart.in_domain(&y, v) {
            let p_uv = chart.product_raw(x, u, v);
            target_compat.record((chart.target_raw(&y, v) - chart.target_raw(x, &p_uv)).norm());
            let z = chart.target_raw(&y, v);
            if chart.in_domain(&z, w) {
                let lhs = chart.product_raw(x, &p_uv, w);
                let rhs = chart.product_raw(x, u, &chart.product_raw(&y, v, w));
                associativity.record((lhs - rhs).norm());
            }
        }

        let iota = chart.inversion_fiber_raw(x, u);
        inv_composite.record(chart.product_raw(x, u, &iota).norm());
        let back_u = chart.inversion_fiber_raw(&y, &iota);
        let back_x = chart.target_raw(&y, &iota);
        double_inv.record(((back_x - x).norm_squared() + (back_u - u).norm_squared()).sqrt());
        domain_closed.record(if chart.in_domain(&y, &iota) { 0.0 } else { 1.0 });

        // d iota / du (x, 0) = -I by a central difference in each direction.
        for gamma in 0..m {
            let mut hi = zero.clone();
            hi[gamma] = DERIV_STEP;
            let mut lo = zero.clone();
            lo[gamma] = -DERIV_STEP;
            let col = (chart.inversion_fiber_raw(x, &hi) - chart.inversion_fiber_raw(x, &lo))
                / (2.0 * DERIV_STEP);
            let mut expect = DVector::zeros(m);
            expect[gamma] = -1.0;
            iota_deriv.record(inf_norm(&(col - expect)));
        }

        // dp/du(x,u,0) = I and dp/dv(x,0,v) = I.
        for gamma in 0..m {
            let mut hi = zero.clone();
            hi[gamma] = DERIV_STEP;
            let mut lo = zero.clone();
            lo[gamma] = -DERIV_STEP;
            let mut expect = DVector::zeros(m);
            expect[gamma] = 1.0;

            let du = (chart.product_raw(x, &(u + &hi), &zero)
                - chart.product_raw(x, &(u + &lo), &zero))
                / (2.0 * DERIV_STEP);
            left_unit_deriv.record(inf_norm(&(du - &expect)));

            let dv = (chart.product_raw(x, &zero, &(u + &hi))
                - chart.product_raw(x, &zero, &(u + &lo)))
                / (2.0 * DERIV_STEP);
            right_unit_deriv.record(inf_norm(&(dv - expect)));
        }
    }

    Ok(AxiomReport {
        samples: count,
        checks: vec![
            identity_target.finish(),
            right_unit.finish(),
            left_unit.finish(),
            target_compat.finish(),
            associativity.finish(),
            iota_identity.finish(),
            inv_composite.finish(),
            double_inv.finish(),
            domain_closed.finish(),
            iota_deriv.finish(),
            left_unit_deriv.finish(),
            right_unit_deriv.finish(),
        ],
    })
}

/// [`check_axioms`] with the chart's own sampler and a seeded generator.
pub fn check_axioms_seeded<C: GroupoidChart + ?Sized>(
    chart: &C,
    seed: u64,
    count: usize,
    tol: f64,
) -> Result<AxiomReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = || Some(chart.sample_point(&mut rng));
    check_axioms(chart, &mut sampler, count, tol)
}
