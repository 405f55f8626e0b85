//! The elliptic Loewner kernels S, S_I, H, H_I and the Taylor coefficients
//! r(p), R(p).
//!
//! H(p, ·) is evaluated through its sine series
//!
//! ```text
//!   H(p,z)   = cot(z/2) + 2 Σ_{n even ≥ 2} sin z / (cosh(np) − cos z)
//!   H_I(p,z) =            2 Σ_{n odd  ≥ 1} sin z / (cosh(np) − cos z)
//! ```
//!
//! for moduli p above the switch threshold, and through the modular
//! transformation p ↦ π²/p below it, so the effective series always decays
//! at rate e^{−π n} or better.  Derivatives up to order 4 come from jet
//! arithmetic on the same series (exact term-by-term differentiation).
//!
//! The disc/radial limits are first-class: `p = f64::INFINITY` selects the
//! closed forms H(∞,z) = cot(z/2), S(∞,z) = (1+z)/(1−z), H_I(∞,·) = 0.

use crate::jet::{cot2_affine, Jet};
use crate::quad::{adaptive_simpson, QuadratureFailure};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Series truncation and modular-switch policy.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct KernelConfig {
    /// Moduli below this evaluate via the modular transformation p ↦ π²/p.
    pub modular_switch: f64,
    /// Series terms are accumulated until they fall below this threshold.
    pub term_tolerance: f64,
    /// Hard cap on series length.
    pub max_terms: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            modular_switch: PI,
            term_tolerance: 1e-16,
            max_terms: 1_000_000,
        }
    }
}

/// Which kernel a [`KernelValue`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum KernelKind {
    S,
    SI,
    H,
    HI,
}

/// A single evaluated kernel derivative, as reported by the CLI.
#[derive(Clone, Copy, Debug)]
pub struct KernelValue {
    pub kind: KernelKind,
    pub order: u8,
    pub value: Complex64,
}

#[derive(thiserror::Error, Debug, Clone)]
pub enum KernelError {
    #[error("argument is within {dist:.3e} of the kernel pole near {pole}")]
    PoleProximity { pole: Complex64, dist: f64 },
    #[error("series did not converge within {0} terms")]
    NonConvergent(usize),
    #[error(transparent)]
    Quadrature(#[from] QuadratureFailure),
    #[error("modulus must be positive (got {0})")]
    BadModulus(f64),
}

pub type KResult<T> = Result<T, KernelError>;

const POLE_RADIUS: f64 = 1e-12;

/// Series stopping rule for jet-valued sums: every coefficient of the new
/// term must be negligible against the corresponding accumulated
/// coefficient.  (A single max-norm comparison would let huge high-order
/// coefficients near a pole mask still-relevant low-order terms.)
fn jet_term_negligible(term: &Jet, acc: &Jet, tol: f64) -> bool {
    term.c
        .iter()
        .zip(acc.c.iter())
        .all(|(t, a)| t.norm() < tol * a.norm().max(1.0))
}

/// Covering-kernel flavor: H (pole lattice 2πm + 2ikp) or H_I (2πm + i(2k+1)p).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HKind {
    H,
    HI,
}

/// Circle-kernel flavor: S (poles e^{2kp}·(positive reals)) or S_I.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SKind {
    S,
    SI,
}

fn wrap_to_nearest(x: f64, period: f64) -> f64 {
    x - period * (x / period).round()
}

/// Distance from z to the pole lattice of H or H_I, together with the
/// nearest pole.
pub fn h_pole_distance(kind: HKind, p: f64, z: Complex64) -> (Complex64, f64) {
    let rx = wrap_to_nearest(z.re, 2.0 * PI);
    let px = z.re - rx;
    if p.is_infinite() {
        return match kind {
            HKind::H => (Complex64::new(px, 0.0), (Complex64::new(rx, z.im)).norm()),
            HKind::HI => (Complex64::new(f64::NAN, f64::NAN), f64::INFINITY),
        };
    }
    let (ry, py) = match kind {
        HKind::H => {
            let r = wrap_to_nearest(z.im, 2.0 * p);
            (r, z.im - r)
        }
        HKind::HI => {
            // nearest odd multiple of p
            let k = ((z.im / p - 1.0) / 2.0).round();
            let pole_y = (2.0 * k + 1.0) * p;
            (z.im - pole_y, pole_y)
        }
    };
    (
        Complex64::new(px, py),
        Complex64::new(rx, ry).norm(),
    )
}

fn check_h_pole(kind: HKind, p: f64, z: Complex64) -> KResult<()> {
    let (pole, dist) = h_pole_distance(kind, p, z);
    if dist < POLE_RADIUS {
        Err(KernelError::PoleProximity { pole, dist })
    } else {
        Ok(())
    }
}

/// Sine-series jet, assuming the effective modulus is comfortable (≥ switch).
fn h_series_jet(kind: HKind, p: f64, z: Complex64, cfg: &KernelConfig) -> KResult<Jet> {
    let one = Complex64::new(1.0, 0.0);
    let s = Jet::sin_affine(z, one);
    let c = Jet::cos_affine(z, one);
    let mut acc = match kind {
        HKind::H => cot2_affine(z, one),
        HKind::HI => Jet::ZERO,
    };
    let mut n: u64 = match kind {
        HKind::H => 2,
        HKind::HI => 1,
    };
    for _ in 0..cfg.max_terms {
        let np = n as f64 * p;
        if np > 700.0 {
            return Ok(acc); // cosh would overflow; terms are ~e^{-np} ≈ 0
        }
        let term = (s / (Jet::constant(Complex64::new(np.cosh(), 0.0)) - c)).scale(2.0);
        acc += term;
        if jet_term_negligible(&term, &acc, cfg.term_tolerance) {
            return Ok(acc);
        }
        n += 2;
    }
    Err(KernelError::NonConvergent(cfg.max_terms))
}

/// Jet (Taylor coefficients to order 4) of H or H_I at `z`.
pub fn h_jet(kind: HKind, p: f64, z: Complex64, cfg: &KernelConfig) -> KResult<Jet> {
    if p.is_infinite() {
        return match kind {
            HKind::H => {
                check_h_pole(kind, p, z)?;
                Ok(cot2_affine(z, Complex64::new(1.0, 0.0)))
            }
            HKind::HI => Ok(Jet::ZERO),
        };
    }
    if !(p > 0.0) {
        return Err(KernelError::BadModulus(p));
    }
    check_h_pole(kind, p, z)?;
    if p >= cfg.modular_switch {
        return h_series_jet(kind, p, z, cfg);
    }
    // Modular path: H(p,z)   = i(π/p) H(π²/p, i(π/p) z)      − z/p
    //               H_I(p,z) = i(π/p) H(π²/p, π + i(π/p) z)  − z/p
    // Reduce Re z mod 2π first so the transformed argument stays in the
    // fundamental strip of the dual modulus.
    let zr = Complex64::new(wrap_to_nearest(z.re, 2.0 * PI), z.im);
    let q = PI * PI / p;
    let a = Complex64::new(0.0, PI / p);
    let w = match kind {
        HKind::H => a * zr,
        HKind::HI => Complex64::new(PI, 0.0) + a * zr,
    };
    let far = h_series_jet(HKind::H, q, w, cfg)?;
    let mut out = far.affine_rescale(a) * Jet::constant(Complex64::new(0.0, PI / p));
    out.c[0] -= zr / p;
    out.c[1] -= Complex64::new(1.0 / p, 0.0);
    Ok(out)
}

/// `order`-th z-derivative of H or H_I.
pub fn eval_h(kind: HKind, p: f64, z: Complex64, order: usize, cfg: &KernelConfig) -> KResult<Complex64> {
    debug_assert!(order < crate::jet::JET_LEN);
    Ok(h_jet(kind, p, z, cfg)?.deriv(order))
}

pub fn s_pole_distance(kind: SKind, p: f64, z: Complex64) -> (Complex64, f64) {
    if p.is_infinite() {
        return match kind {
            SKind::S => (Complex64::new(1.0, 0.0), (z - 1.0).norm()),
            SKind::SI => (Complex64::new(f64::NAN, f64::NAN), f64::INFINITY),
        };
    }
    // Poles at e^{np}, n even (S) / odd (S_I), including negative n.
    let r = z.norm();
    let mut best = (Complex64::new(f64::NAN, f64::NAN), f64::INFINITY);
    if r > 0.0 {
        let n0 = (r.ln() / p).round() as i64;
        for n in (n0 - 3)..=(n0 + 3) {
            let even = n.rem_euclid(2) == 0;
            if (kind == SKind::S) != even {
                continue;
            }
            let np = n as f64 * p;
            if np > 700.0 || np < -700.0 {
                continue;
            }
            let pole = Complex64::new(np.exp(), 0.0);
            let d = (z - pole).norm();
            if d < best.1 {
                best = (pole, d);
            }
        }
    }
    best
}

/// Principal-value sum S(p,z) (n even) or S_I(p,z) (n odd), with the ±n
/// terms paired in closed form:
///
/// ```text
///   (e^{np}+z)/(e^{np}−z) + (e^{−np}+z)/(e^{−np}−z)
///       = 2 e^{np} (1 − z²) / ((e^{np} − z)(1 − e^{np} z))
/// ```
pub fn eval_kernel(kind: SKind, p: f64, z: Complex64, cfg: &KernelConfig) -> KResult<Complex64> {
    let (pole, dist) = s_pole_distance(kind, p, z);
    if dist < POLE_RADIUS {
        return Err(KernelError::PoleProximity { pole, dist });
    }
    if p.is_infinite() {
        return Ok(match kind {
            SKind::S => (1.0 + z) / (1.0 - z),
            SKind::SI => Complex64::new(0.0, 0.0),
        });
    }
    if !(p > 0.0) {
        return Err(KernelError::BadModulus(p));
    }
    if z.norm() == 0.0 {
        // z = 0 is a non-isolated singularity (the poles e^{np}, n → −∞,
        // accumulate there); by convention we return the n = 0 term alone.
        return Ok(match kind {
            SKind::S => Complex64::new(1.0, 0.0),
            SKind::SI => Complex64::new(0.0, 0.0),
        });
    }
    let mut acc = match kind {
        SKind::S => (1.0 + z) / (1.0 - z),
        SKind::SI => Complex64::new(0.0, 0.0),
    };
    let mut n: u64 = match kind {
        SKind::S => 2,
        SKind::SI => 1,
    };
    for _ in 0..cfg.max_terms {
        let np = n as f64 * p;
        if np > 700.0 {
            return Ok(acc);
        }
        let a = np.exp();
        let term = 2.0 * a * (1.0 - z * z) / ((a - z) * (1.0 - a * z));
        acc += term;
        if term.norm() < cfg.term_tolerance * acc.norm().max(1.0) {
            return Ok(acc);
        }
        n += 2;
    }
    Err(KernelError::NonConvergent(cfg.max_terms))
}

/// Jet (in z) of S or S_I at `z`, built from the same paired terms as
/// [`eval_kernel`].  Used by the circle-coordinate Loewner fields to track
/// point derivatives without leaving the z-plane.
pub fn s_jet(kind: SKind, p: f64, z: Complex64, cfg: &KernelConfig) -> KResult<Jet> {
    let (pole, dist) = s_pole_distance(kind, p, z);
    if dist < POLE_RADIUS {
        return Err(KernelError::PoleProximity { pole, dist });
    }
    let one = Jet::constant(Complex64::new(1.0, 0.0));
    let zj = Jet::variable(z);
    if p.is_infinite() {
        return Ok(match kind {
            SKind::S => (one + zj) / (one - zj),
            SKind::SI => Jet::ZERO,
        });
    }
    if !(p > 0.0) {
        return Err(KernelError::BadModulus(p));
    }
    if z.norm() == 0.0 {
        // See eval_kernel: z = 0 is a non-isolated singularity; return the
        // conventional constant value with zero derivatives.
        return Ok(match kind {
            SKind::S => Jet::constant(Complex64::new(1.0, 0.0)),
            SKind::SI => Jet::ZERO,
        });
    }
    let mut acc = match kind {
        SKind::S => (one + zj) / (one - zj),
        SKind::SI => Jet::ZERO,
    };
    let mut n: u64 = match kind {
        SKind::S => 2,
        SKind::SI => 1,
    };
    for _ in 0..cfg.max_terms {
        let np = n as f64 * p;
        if np > 700.0 {
            return Ok(acc);
        }
        let a = Jet::constant(Complex64::new(np.exp(), 0.0));
        let term = (a * (one - zj * zj) / ((a - zj) * (one - a * zj))).scale(2.0);
        acc += term;
        if jet_term_negligible(&term, &acc, cfg.term_tolerance) {
            return Ok(acc);
        }
        n += 2;
    }
    Err(KernelError::NonConvergent(cfg.max_terms))
}

/// Taylor coefficient r(p) of H(p,z) = 2/z + r(p) z + O(z³);
/// r(p) = Σ_{k≥1} sinh(kp)^{−2} − 1/6, r(∞) = −1/6.
pub fn eval_r(p: f64, cfg: &KernelConfig) -> KResult<f64> {
    if p.is_infinite() {
        return Ok(-1.0 / 6.0);
    }
    if !(p > 0.0) {
        return Err(KernelError::BadModulus(p));
    }
    if p < 1e-2 {
        return r_from_laurent(p, cfg);
    }
    let mut acc = 0.0f64;
    let mut k = 1u64;
    loop {
        let kp = k as f64 * p;
        if kp > 350.0 {
            break;
        }
        let term = 1.0 / (kp.sinh() * kp.sinh());
        acc += term;
        if term < cfg.term_tolerance {
            break;
        }
        k += 1;
        if k as usize > cfg.max_terms {
            return r_from_laurent(p, cfg);
        }
    }
    Ok(acc - 1.0 / 6.0)
}

/// Laurent extraction (H(p,z) − 2/z)/z at z = 1e−3 with one Richardson
/// halving; used for very small moduli where the sinh series is long.
fn r_from_laurent(p: f64, cfg: &KernelConfig) -> KResult<f64> {
    let g = |h: f64| -> KResult<f64> {
        let z = Complex64::new(h, 0.0);
        let hv = eval_h(HKind::H, p, z, 0, cfg)?;
        Ok(((hv - 2.0 / z) / z).re)
    };
    let h = 1e-3;
    Ok((4.0 * g(0.5 * h)? - g(h)?) / 3.0)
}

/// R(p) = −∫_p^∞ (r(t) − r(∞)) dt, with R(∞) = 0 and R′ = r − r(∞).
pub fn eval_big_r(p: f64, cfg: &KernelConfig) -> KResult<f64> {
    if p.is_infinite() {
        return Ok(0.0);
    }
    if !(p > 0.0) {
        return Err(KernelError::BadModulus(p));
    }
    // Integrand r(t) + 1/6 ~ 4 e^{−2t}; truncate where it is < 1e−32.
    let upper = (p + 5.0).max(40.0);
    let integrand = |t: f64| -> KResult<f64> { Ok(-(eval_r(t, cfg)? + 1.0 / 6.0)) };
    adaptive_simpson(&integrand, p, upper, 1e-13)
}
