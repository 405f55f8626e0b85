//! Temporary diagnostic: one-time martingale check with the other chain
//! frozen to a deterministic slit.

use annulus_sle::drifts::{drift_from_id, dual, gamma_from_lambda, DriftKind};
use annulus_sle::ensemble::{
    compute_m, ensemble_grid, EnsembleMode, Geometry, TabulatedGamma,
};
use annulus_sle::kernels::KernelConfig;
use annulus_sle::loewner::DrivingPath;
use annulus_sle::sde::drive_annulus_sle;
use rayon::prelude::*;
use std::f64::consts::PI;

fn main() {
    let cfg = KernelConfig::default();
    let args: Vec<String> = std::env::args().collect();
    let kappa: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4.0);
    let fam = args.get(2).cloned().unwrap_or_else(|| "kappa4/1?C=0".into());
    let which = args.get(3).cloned().unwrap_or_else(|| "t1".into());
    let n: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(256);
    let dt: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(2e-4);

    let (p, t, delta, g, seed) = (4.0, 0.25, 1e-2, 8usize, 7u64);
    let l = drift_from_id(&fam).unwrap();
    let l2 = dual(&l);
    let gamma = gamma_from_lambda(&l, kappa, &[], &[]).unwrap();
    let p_lo = p - 2.0 * t - 1.0;
    let tab = TabulatedGamma::build(&gamma, p_lo, p, 97, &cfg).unwrap();

    let frozen: Option<DrivingPath> = which.strip_prefix("t1fix").map(|s| {
        let stream: u64 = s.parse().unwrap_or(9999);
        drive_annulus_sle(kappa, &l2, DriftKind::Crossing, p, PI, 0.0, t, dt, 1, stream)
            .unwrap()
            .xi
    });

    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .filter_map(|i| {
            let (xi1, xi2) = if let Some(f2) = &frozen {
                let r = drive_annulus_sle(
                    kappa, &l, DriftKind::Crossing, p, 0.0, PI, t, dt, seed, 2 * i as u64,
                )
                .ok()?;
                if r.collided {
                    return None;
                }
                (r.xi, f2.clone())
            } else if which == "t1" {
                let r = drive_annulus_sle(
                    kappa, &l, DriftKind::Crossing, p, 0.0, PI, t, dt, seed, 2 * i as u64,
                )
                .ok()?;
                if r.collided {
                    return None;
                }
                (r.xi, DrivingPath::constant(PI, 0.0, t, dt))
            } else {
                let r = drive_annulus_sle(
                    kappa, &l2, DriftKind::Crossing, p, PI, 0.0, t, dt, seed,
                    2 * i as u64 + 1,
                )
                .ok()?;
                if r.collided {
                    return None;
                }
                (DrivingPath::constant(0.0, 0.0, t, dt), r.xi)
            };
            let grid = ensemble_grid(p, &xi1, &xi2, g, g, delta, Geometry::Crossing, &cfg).ok()?;
            let rec = grid.record(&tab).ok()?;
            let m = compute_m(&rec, rec.ln_f.exp(), EnsembleMode::Annulus, &tab).ok()?;
            m.is_finite().then_some(m)
        })
        .collect();

    let used = vals.len();
    let mean = vals.iter().sum::<f64>() / used as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (used - 1) as f64;
    println!(
        "which={which} kappa={kappa} dt={dt:.0e}: mean = {:.6}, stderr = {:.6}, n_used = {used}",
        mean,
        (var / used as f64).sqrt()
    );
}
