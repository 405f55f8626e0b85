//! Adaptive Simpson quadrature for the handful of 1-D integrals in the
//! crate (Γ̂ exponents, the R(p) tail, disc-driver reconstruction).

/// Error type shared by quadrature users.
#[derive(thiserror::Error, Debug, Clone)]
#[error("adaptive quadrature exceeded its refinement budget on [{a}, {b}]")]
pub struct QuadratureFailure {
    pub a: f64,
    pub b: f64,
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `f` may itself fail (kernel evaluation errors); failures propagate.
pub fn adaptive_simpson<E, F>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64, E>
where
    F: Fn(f64) -> Result<f64, E>,
    E: From<QuadratureFailure>,
{
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let fa = f(a)?;
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<E, F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, E>
where
    F: Fn(f64) -> Result<f64, E>,
    E: From<QuadratureFailure>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || (b - a).abs() < 1e-13 {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureFailure { a, b }.into());
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}
