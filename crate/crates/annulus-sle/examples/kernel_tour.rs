//! A quick tour of the elliptic kernels S, S_I, H, H_I.
//!
//! Evaluates the kernels on the standard annulus, checks the identities
//! that make them "the" annulus kernels (2π-periodicity, oddness, constant
//! imaginary part on the far circle, the H ↔ H_I shift), and prints the
//! Taylor coefficient r(p) together with its antiderivative R(p).

use annulus_sle::kernels::{
    eval_big_r, eval_h, eval_kernel, eval_r, h_jet, HKind, KernelConfig, SKind,
};
use num_complex::Complex64;
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = KernelConfig::default();
    let p = 0.8;

    println!("kernels at p = {p}");
    for x in [0.5, 1.5, PI - 0.3] {
        let z = Complex64::new(x, 0.0);
        let h = eval_h(HKind::H, p, z, 0, &cfg)?;
        let hi = eval_h(HKind::HI, p, z, 0, &cfg)?;
        let s = eval_kernel(SKind::S, p, Complex64::new(0.0, 1.0).scale(x).exp(), &cfg)?;
        println!("  x = {x:5.2}: H = {:+.12}  H_I = {:+.12}  S(e^ix) = {:+.12}", h.re, hi.re, s);
    }

    // The identities from the kernel chapter, evaluated at a generic point.
    let z = Complex64::new(1.234, 0.21);
    let h = eval_h(HKind::H, p, z, 0, &cfg)?;
    let period = eval_h(HKind::H, p, z + 2.0 * PI, 0, &cfg)? - h;
    let odd = eval_h(HKind::H, p, -z, 0, &cfg)? + h;
    let far = eval_h(HKind::H, p, Complex64::new(0.7, p), 0, &cfg)?;
    let shift = eval_h(HKind::H, p, z - Complex64::new(0.0, p), 0, &cfg)?
        - Complex64::new(0.0, 1.0)
        - eval_h(HKind::HI, p, z, 0, &cfg)?;
    println!("\nidentity residuals at z = {z}:");
    println!("  2π-periodicity       {:.2e}", period.norm());
    println!("  oddness              {:.2e}", odd.norm());
    println!("  Im H(x + ip) + 1     {:.2e}", (far.im + 1.0).abs());
    println!("  H(z − ip) − i = H_I  {:.2e}", shift.norm());

    // Jets carry derivatives up to order three in one evaluation.
    let jet = h_jet(HKind::HI, p, Complex64::new(0.9, 0.0), &cfg)?;
    println!("\nH_I jet at x = 0.9:");
    for k in 0..4 {
        println!("  d^{k}: {:+.12}", jet.deriv(k).re);
    }

    println!("\nmodulus functions:");
    for q in [0.5, 1.0, 2.0] {
        println!("  r({q}) = {:+.12}   R({q}) = {:+.12}", eval_r(q, &cfg)?, eval_big_r(q, &cfg)?);
    }
    Ok(())
}
