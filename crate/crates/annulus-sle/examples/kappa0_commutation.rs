//! Deterministic κ = 0 commutation of two flow lines.
//!
//! At κ = 0 the SLE(κ, Λ) driver is an ODE, so "grow chain 1 for time t₁,
//! then chain 2 for time t₂" and the opposite order can be compared
//! pointwise.  The check composes the covering maps in both orders on a
//! grid of interior probes and also monitors the observables
//! U_j = A_{j,1} Λ_j(m, X_j) + 3 A_{j,2}/A_{j,1}, which must not depend on
//! the other chain's time.

use annulus_sle::drifts::drift_from_id;
use annulus_sle::ensemble::kappa0_commutation_check;
use annulus_sle::kernels::KernelConfig;
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = KernelConfig::default();
    let l = drift_from_id("kappa0/1")?;

    let (p, x1, x2) = (2.5, 0.0, PI);
    for (t1, t2, delta) in [(0.0, 0.10, 2e-3), (0.08, 0.08, 2e-3), (0.12, 0.06, 1e-3)] {
        let report = kappa0_commutation_check(&l, p, x1, x2, t1, t2, delta, &cfg)?;
        println!(
            "t1 = {t1:.2}, t2 = {t2:.2}, δ = {delta:.0e}:  sup|Δ| = {:.2e}, rotation = {:+.3e}, max U-drift = {:.2e}, m = {:.6}",
            report.sup_diff, report.rotation, report.max_u_drift, report.m
        );
    }
    println!("\n(the two orders agree up to the reported rigid rotation, which is");
    println!(" deterministic and O(t1·t2); sup|Δ| is measured after removing it)");
    Ok(())
}
