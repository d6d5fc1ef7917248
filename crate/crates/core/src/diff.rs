//! Central-difference helpers for charts and Lagrangians that do not supply
//! analytic derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Step size for first-order central differences: `max(1e-5, 1e-7 (1 + |arg|))`.
pub fn fd_step(arg_norm: f64) -> f64 {
    (1e-7 * (1.0 + arg_norm)).max(1e-5)
}

fn ensure_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalDerivative(format!(
            "non-finite values while differencing {what}"
        )))
    }
}

/// Jacobian `d f / d a` of a vector map by central differences.
///
/// Returns the `rows x len(at)` matrix with entry `(i, j) = d f_i / d a_j`.
pub fn jacobian_vec<F>(f: F, at: &DVector<f64>, rows: usize, what: &str) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let s = fd_step(at.norm());
    let mut jac = DMatrix::zeros(rows, at.len());
    for j in 0..at.len() {
        let mut hi = at.clone();
        hi[j] += s;
        let mut lo = at.clone();
        lo[j] -= s;
        let fhi = f(&hi);
        let flo = f(&lo);
        ensure_finite(&fhi, what)?;
        ensure_finite(&flo, what)?;
        for i in 0..rows {
            jac[(i, j)] = (fhi[i] - flo[i]) / (2.0 * s);
        }
    }
    Ok(jac)
}

/// Gradient of a scalar map by central differences.
pub fn gradient<F>(f: F, at: &DVector<f64>, what: &str) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let s = fd_step(at.norm());
    let mut grad = DVector::zeros(at.len());
    for j in 0..at.len() {
        let mut hi = at.clone();
        hi[j] += s;
        let mut lo = at.clone();
        lo[j] -= s;
        let d = (f(&hi) - f(&lo)) / (2.0 * s);
        if !d.is_finite() {
            return Err(Error::NumericalDerivative(format!(
                "non-finite values while differencing {what}"
            )));
        }
        grad[j] = d;
    }
    Ok(grad)
}

/// Mixed second partial `d^2 f / (d a_i d b_j)` of `f(a, b)` at `(a0, b0)`,
/// by the four-point central stencil. Step sizes follow [`fd_step`] of each
/// argument separately, scaled up to balance truncation against roundoff for
/// second derivatives.
pub fn mixed_second<F>(
    f: F,
    a0: &DVector<f64>,
    b0: &DVector<f64>,
    rows: usize,
    what: &str,
) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let sa = fd_step(a0.norm()).sqrt().max(1e-4);
    let sb = fd_step(b0.norm()).sqrt().max(1e-4);
    let mut out = vec![DMatrix::zeros(a0.len(), b0.len()); rows];
    for i in 0..a0.len() {
        for j in 0..b0.len() {
            let mut app = a0.clone();
            app[i] += sa;
            let mut apm = a0.clone();
            apm[i] -= sa;
            let mut bpp = b0.clone();
            bpp[j] += sb;
            let mut bpm = b0.clone();
            bpm[j] -= sb;
            let fpp = f(&app, &bpp);
            let fpm = f(&app, &bpm);
            let fmp = f(&apm, &bpp);
            let fmm = f(&apm, &bpm);
            ensure_finite(&fpp, what)?;
            ensure_finite(&fmm, what)?;
            for g in 0..rows {
                out[g][(i, j)] = (fpp[g] - fpm[g] - fmp[g] + fmm[g]) / (4.0 * sa * sb);
            }
        }
    }
    Ok(out)
}
