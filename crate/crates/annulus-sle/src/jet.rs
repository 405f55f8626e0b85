//! Truncated complex Taylor jets.
//!
//! A [`Jet`] stores the first five Taylor coefficients of an analytic
//! function about some (implicit) base point.  All kernel and drift
//! derivatives in this crate are obtained by jet arithmetic instead of
//! hand-coded term derivatives or finite differences: every series term is
//! built from `sin`/`cos` jets and combined with exact product/quotient
//! rules, so differentiation is term-by-term and exact up to truncation.

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Number of stored Taylor coefficients (derivatives 0..=4).
pub const JET_LEN: usize = 5;

const FACT: [f64; JET_LEN] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Taylor coefficients `c[k] = f^(k)(x0)/k!` of a function about a base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [Complex64; JET_LEN],
}

impl Jet {
    pub const ZERO: Jet = Jet {
        c: [Complex64::new(0.0, 0.0); JET_LEN],
    };

    pub fn constant(v: Complex64) -> Jet {
        let mut j = Jet::ZERO;
        j.c[0] = v;
        j
    }

    /// Jet of the identity function `z ↦ z` at base point `z0`.
    pub fn variable(z0: Complex64) -> Jet {
        let mut j = Jet::ZERO;
        j.c[0] = z0;
        j.c[1] = Complex64::new(1.0, 0.0);
        j
    }

    /// Jet of `z ↦ sin(a z + b)` where `u0 = a z0 + b`.
    pub fn sin_affine(u0: Complex64, a: Complex64) -> Jet {
        let (s, c) = (u0.sin(), u0.cos());
        let cycle = [s, c, -s, -c];
        let mut j = Jet::ZERO;
        let mut ak = Complex64::new(1.0, 0.0);
        for k in 0..JET_LEN {
            j.c[k] = cycle[k % 4] * ak / FACT[k];
            ak *= a;
        }
        j
    }

    /// Jet of `z ↦ cos(a z + b)` where `u0 = a z0 + b`.
    pub fn cos_affine(u0: Complex64, a: Complex64) -> Jet {
        let (s, c) = (u0.sin(), u0.cos());
        let cycle = [c, -s, -c, s];
        let mut j = Jet::ZERO;
        let mut ak = Complex64::new(1.0, 0.0);
        for k in 0..JET_LEN {
            j.c[k] = cycle[k % 4] * ak / FACT[k];
            ak *= a;
        }
        j
    }

    /// Value of the function at the base point.
    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    /// `n`-th derivative at the base point (`n < JET_LEN`).
    pub fn deriv(&self, n: usize) -> Complex64 {
        self.c[n] * FACT[n]
    }

    /// Jet of the `n`-th derivative.  The top `n` coefficients are unknown
    /// after the shift and are set to zero, so the result is only valid to
    /// order `JET_LEN - 1 - n`.
    pub fn deriv_jet(&self, n: usize) -> Jet {
        let mut j = Jet::ZERO;
        for k in 0..JET_LEN - n {
            j.c[k] = self.c[k + n] * FACT[k + n] / FACT[k];
        }
        j
    }

    /// Reinterpret a jet in `w` as a jet in `z` under `w = a z + b`:
    /// coefficients pick up a factor `a^k`.
    pub fn affine_rescale(&self, a: Complex64) -> Jet {
        let mut j = *self;
        let mut ak = Complex64::new(1.0, 0.0);
        for k in 0..JET_LEN {
            j.c[k] *= ak;
            ak *= a;
        }
        j
    }

    /// Largest coefficient magnitude; used for series stopping rules.
    pub fn max_norm(&self) -> f64 {
        self.c.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut j = *self;
        for c in j.c.iter_mut() {
            *c *= s;
        }
        j
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut j = self;
        for k in 0..JET_LEN {
            j.c[k] += rhs.c[k];
        }
        j
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        for k in 0..JET_LEN {
            self.c[k] += rhs.c[k];
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let mut j = self;
        for k in 0..JET_LEN {
            j.c[k] -= rhs.c[k];
        }
        j
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut j = self;
        for c in j.c.iter_mut() {
            *c = -*c;
        }
        j
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut j = Jet::ZERO;
        for k in 0..JET_LEN {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..=k {
                acc += self.c[i] * rhs.c[k - i];
            }
            j.c[k] = acc;
        }
        j
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        // Standard power-series long division; rhs.c[0] must be nonzero.
        let mut j = Jet::ZERO;
        for k in 0..JET_LEN {
            let mut acc = self.c[k];
            for i in 0..k {
                acc -= j.c[i] * rhs.c[k - i];
            }
            j.c[k] = acc / rhs.c[0];
        }
        j
    }
}

/// Jet of `cot((a z + b)/2)` where `u0 = a z0 + b`.
pub fn cot2_affine(u0: Complex64, a: Complex64) -> Jet {
    Jet::cos_affine(u0 * 0.5, a * 0.5) / Jet::sin_affine(u0 * 0.5, a * 0.5)
}

/// Jet of `coth((z)/2)` at base `u0` (unit argument scaling):
/// coth(w/2) = i·cot(i w / 2).
pub fn coth2(u0: Complex64) -> Jet {
    let i = Complex64::new(0.0, 1.0);
    cot2_affine(i * u0, i) * Jet::constant(i)
}
