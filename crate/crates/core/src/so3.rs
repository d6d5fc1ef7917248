//! Matrix Lie-group kernel: hat/vee for so(3), the Cayley retraction with its
//! right-trivialized tangent and inverse tangent, and the (co)adjoint actions.
//!
//! The Cayley maps are written for a general square dimension `D`; only the
//! basis-dependent pieces (hat, vee, adjoint coordinates) are fixed to so(3).
//! Pairings between momenta and algebra elements are coordinate dot products
//! in the fixed basis.

use nalgebra::{Const, DimMin, Matrix3, SMatrix, Vector3};

use crate::error::{Error, Result};

/// Condition-number bound for the `I - xi/2` factor of the Cayley map.
pub const CAYLEY_CONDITION_LIMIT: f64 = 1e12;

/// Standard basis of so(3): `hat(e_gamma)` for the coordinate directions.
pub fn so3_basis() -> [Matrix3<f64>; 3] {
    [
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0),
        Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0),
        Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    ]
}

/// Coordinate vector to skew matrix. Linear; `vee(hat(w)) = w` exactly.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Skew matrix to coordinate vector (reads the lower triangle).
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Skew part of a matrix together with the norm of the discarded symmetric
/// residue. For so(3)-valued expressions the residue is pure roundoff.
pub fn skew_split(m: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let skew = (m - m.transpose()) * 0.5;
    let sym = (m + m.transpose()) * 0.5;
    (skew, sym.norm())
}

fn vee_projected(m: &Matrix3<f64>) -> Vector3<f64> {
    let (skew, residue) = skew_split(m);
    debug_assert!(
        residue <= 1e-12 * (1.0 + m.norm()),
        "algebra projection residue {residue:.3e} for {m}"
    );
    vee(&skew)
}

fn lu_solve<const D: usize>(
    a: &SMatrix<f64, D, D>,
    rhs: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>>
where
    Const<D>: DimMin<Const<D>, Output = Const<D>>,
{
    let lu = a.lu();
    let inv = lu.try_inverse().ok_or_else(|| {
        Error::OutOfChart("singular Cayley factor".into())
    })?;
    let condition = a.norm() * inv.norm();
    if !condition.is_finite() || condition > CAYLEY_CONDITION_LIMIT {
        return Err(Error::OutOfChart(format!(
            "near-singular Cayley factor: condition {condition:.3e}"
        )));
    }
    lu.solve(rhs)
        .ok_or_else(|| Error::OutOfChart("singular Cayley factor".into()))
}

/// Cayley map `cay(xi) = (I - xi/2)^{-1} (I + xi/2)`.
pub fn cay<const D: usize>(xi: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>>
where
    Const<D>: DimMin<Const<D>, Output = Const<D>>,
{
    let id = SMatrix::<f64, D, D>::identity();
    let minus = id - xi * 0.5;
    let plus = id + xi * 0.5;
    lu_solve(&minus, &plus)
}

/// Inverse Cayley map `cay^{-1}(g) = 2 (g - I)(g + I)^{-1}`.
///
/// Solved as `(g + I)^T z^T = 2 (g - I)^T` since `g - I` and `(g + I)^{-1}`
/// commute.
pub fn cay_inv<const D: usize>(g: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>>
where
    Const<D>: DimMin<Const<D>, Output = Const<D>>,
{
    let id = SMatrix::<f64, D, D>::identity();
    let num = (g - id) * 2.0;
    let den = g + id;
    let xt = lu_solve(&den.transpose(), &num.transpose())?;
    Ok(xt.transpose())
}

/// Right-trivialized tangent of the Cayley map:
/// `dcay_xi(eta) = (I - xi/2)^{-1} eta (I + xi/2)^{-1}`.
pub fn dcay<const D: usize>(
    xi: &SMatrix<f64, D, D>,
    eta: &SMatrix<f64, D, D>,
) -> Result<SMatrix<f64, D, D>>
where
    Const<D>: DimMin<Const<D>, Output = Const<D>>,
{
    let id = SMatrix::<f64, D, D>::identity();
    let minus = id - xi * 0.5;
    let plus = id + xi * 0.5;
    let left = lu_solve(&minus, eta)?;
    let rt = lu_solve(&plus.transpose(), &left.transpose())?;
    Ok(rt.transpose())
}

/// Inverse right-trivialized tangent:
/// `dcay^{-1}_xi(eta) = (I - xi/2) eta (I + xi/2)`.
pub fn dcay_inv<const D: usize>(
    xi: &SMatrix<f64, D, D>,
    eta: &SMatrix<f64, D, D>,
) -> SMatrix<f64, D, D> {
    let id = SMatrix::<f64, D, D>::identity();
    (id - xi * 0.5) * eta * (id + xi * 0.5)
}

/// `dcay` in so(3) coordinates, projected back to the algebra.
pub fn dcay_coords(xi: &Vector3<f64>, eta: &Vector3<f64>) -> Result<Vector3<f64>> {
    Ok(vee_projected(&dcay(&hat(xi), &hat(eta))?))
}

/// `dcay^{-1}` in so(3) coordinates, projected back to the algebra.
pub fn dcay_inv_coords(xi: &Vector3<f64>, eta: &Vector3<f64>) -> Vector3<f64> {
    vee_projected(&dcay_inv(&hat(xi), &hat(eta)))
}

/// Matrix of `eta -> dcay^{-1}_xi(eta)` in the so(3) basis (column `gamma` is
/// the image of `e_gamma`).
pub fn dcay_inv_matrix(xi: &Vector3<f64>) -> Matrix3<f64> {
    let xh = hat(xi);
    let basis = so3_basis();
    let mut m = Matrix3::zeros();
    for (gamma, e) in basis.iter().enumerate() {
        m.set_column(gamma, &vee_projected(&dcay_inv(&xh, e)));
    }
    m
}

/// Adjoint action in so(3) coordinates: the matrix with column `gamma` equal
/// to `vee(g e_gamma g^{-1})`.
pub fn adjoint_matrix(g: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let ginv = g
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Config("adjoint of a singular matrix".into()))?;
    let basis = so3_basis();
    let mut m = Matrix3::zeros();
    for (gamma, e) in basis.iter().enumerate() {
        m.set_column(gamma, &vee_projected(&(g * e * ginv)));
    }
    Ok(m)
}

/// `Ad_g(eta) = vee(g hat(eta) g^{-1})`.
pub fn adjoint(g: &Matrix3<f64>, eta: &Vector3<f64>) -> Result<Vector3<f64>> {
    Ok(adjoint_matrix(g)? * eta)
}

/// Coadjoint action on momenta: `<coadjoint(g, mu), eta> = <mu, Ad_g(eta)>`
/// with the coordinate dot pairing.
pub fn coadjoint(g: &Matrix3<f64>, mu: &Vector3<f64>) -> Result<Vector3<f64>> {
    Ok(adjoint_matrix(g)?.transpose() * mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_vec(rng: &mut StdRng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    /// Closed-form rational Cayley image for so(3), used as an oracle route
    /// independent of the LU solves: (I - a)^{-1} = I + (a + a^2)/(1 + |w|^2)
    /// for a = hat(w).
    fn cay_so3_closed_form(w: &Vector3<f64>) -> Matrix3<f64> {
        let a = hat(&(w * 0.5));
        let denom = 1.0 + (w * 0.5).norm_squared();
        let inv = Matrix3::identity() + (a + a * a) / denom;
        inv * (Matrix3::identity() + a)
    }

    #[test]
    fn cay_at_zero_is_identity() {
        let g = cay(&Matrix3::zeros()).unwrap();
        assert_eq!(g, Matrix3::identity());
    }

    #[test]
    fn cay_quarter_turn_about_z() {
        // xi = hat(0,0,2): worked 3x3 arithmetic gives the quarter turn.
        let g = cay(&hat(&Vector3::new(0.0, 0.0, 2.0))).unwrap();
        let expect = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(g, expect, epsilon = 1e-14);
    }

    #[test]
    fn cay_retraction_property() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let w = rand_vec(&mut rng, 2.0 / 3.0_f64.sqrt());
            let g = cay(&hat(&w)).unwrap();
            let ginv = cay(&hat(&(-w))).unwrap();
            assert_relative_eq!(g * ginv, Matrix3::identity(), epsilon = 1e-13);
        }
    }

    #[test]
    fn cay_lands_in_so3() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let w = rand_vec(&mut rng, 2.0 / 3.0_f64.sqrt());
            let g = cay(&hat(&w)).unwrap();
            assert_relative_eq!(g.transpose() * g, Matrix3::identity(), epsilon = 1e-12);
            assert_relative_eq!(g.determinant(), 1.0, epsilon = 1e-12);
            // Against the closed-form rational route.
            assert_relative_eq!(g, cay_so3_closed_form(&w), epsilon = 1e-13);
        }
    }

    #[test]
    fn cay_inv_round_trip() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..100 {
            let w = rand_vec(&mut rng, 1.0);
            let g = cay(&hat(&w)).unwrap();
            let back = vee_projected(&cay_inv(&g).unwrap());
            assert_relative_eq!(back, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn dcay_pair_mutually_inverse() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let xi = rand_vec(&mut rng, 1.5);
            let eta = rand_vec(&mut rng, 2.0);
            let there = dcay_inv_coords(&xi, &eta);
            assert_relative_eq!(dcay_coords(&xi, &there).unwrap(), eta, epsilon = 1e-12);
            let back = dcay_coords(&xi, &eta).unwrap();
            assert_relative_eq!(dcay_inv_coords(&xi, &back), eta, epsilon = 1e-12);
        }
    }

    #[test]
    fn dcay_at_zero_is_identity_map() {
        let eta = Vector3::new(0.3, -0.7, 0.2);
        assert_relative_eq!(
            dcay_coords(&Vector3::zeros(), &eta).unwrap(),
            eta,
            epsilon = 1e-15
        );
        assert_relative_eq!(dcay_inv_coords(&Vector3::zeros(), &eta), eta, epsilon = 1e-15);
    }

    #[test]
    fn dcay_matches_finite_difference_of_cay() {
        // d/dt cay(xi + t eta) cay(xi)^{-1} at t = 0, by central differences.
        let mut rng = StdRng::seed_from_u64(19);
        let s = 1e-5;
        for _ in 0..25 {
            let xi = rand_vec(&mut rng, 1.0);
            let eta = rand_vec(&mut rng, 1.0);
            let hi = cay(&hat(&(xi + eta * s))).unwrap();
            let lo = cay(&hat(&(xi - eta * s))).unwrap();
            let ginv = cay(&hat(&xi)).unwrap().transpose();
            let fd = (hi - lo) * (1.0 / (2.0 * s)) * ginv;
            let (skew, _) = skew_split(&fd);
            let fd_coords = vee(&skew);
            let analytic = dcay_coords(&xi, &eta).unwrap();
            assert_relative_eq!(fd_coords, analytic, epsilon = 1e-6);
            // And the inverse tangent undoes the finite-difference image.
            assert_relative_eq!(dcay_inv_coords(&xi, &fd_coords), eta, epsilon = 1e-6);
        }
    }

    #[test]
    fn adjoint_in_coordinates_is_rotation_matrix() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..50 {
            let w = rand_vec(&mut rng, 1.2);
            let g = cay(&hat(&w)).unwrap();
            // Basis-expansion oracle: column gamma of Ad equals vee(g e_g g^{-1});
            // for SO(3) with the standard basis this is the rotation matrix itself.
            assert_relative_eq!(adjoint_matrix(&g).unwrap(), g, epsilon = 1e-12);
        }
    }

    #[test]
    fn coadjoint_duality_and_norm() {
        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..50 {
            let g = cay(&hat(&rand_vec(&mut rng, 1.0))).unwrap();
            let mu = rand_vec(&mut rng, 3.0);
            let eta = rand_vec(&mut rng, 2.0);
            let lhs = coadjoint(&g, &mu).unwrap().dot(&eta);
            let rhs = mu.dot(&adjoint(&g, &eta).unwrap());
            assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
            assert_relative_eq!(coadjoint(&g, &mu).unwrap().norm(), mu.norm(), epsilon = 1e-12);
        }
        assert_relative_eq!(
            adjoint(&Matrix3::identity(), &Vector3::new(1.0, 2.0, 3.0)).unwrap(),
            Vector3::new(1.0, 2.0, 3.0),
            epsilon = 1e-15
        );
    }

    proptest! {
        #[test]
        fn hat_vee_round_trip(x in -10.0..10.0f64, y in -10.0..10.0f64, z in -10.0..10.0f64) {
            let w = Vector3::new(x, y, z);
            prop_assert_eq!(vee(&hat(&w)), w);
        }

        #[test]
        fn hat_is_linear(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64, a in -3.0..3.0f64) {
            let w = Vector3::new(x, y, z);
            prop_assert_eq!(hat(&(w * a)), hat(&w) * a);
        }
    }
}
