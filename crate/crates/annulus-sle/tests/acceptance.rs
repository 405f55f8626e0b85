//! Acceptance suite: one test per criterion, each ending in a single
//! PASS line (visible with `--nocapture`).  Tolerances are pinned here and
//! are not shared with the unit tests.

use annulus_sle::drifts::{
    drift_from_id, eval_theta, pde_residual, DriftKind, PdeKind,
};
use annulus_sle::ensemble::{
    ensemble_grid, kappa0_commutation_check, martingale_estimate, whole_plane_modulus,
    EnsembleGrid, Geometry,
};
use annulus_sle::kernels::{
    eval_big_r, eval_h, eval_r, h_jet, HKind, KernelConfig,
};
use annulus_sle::loewner::{
    advance_jet, advance_point, Advance, Driving, DrivingPath, FlowKind,
    LoewnerFlow, StepPolicy,
};
use annulus_sle::sde::{drive_annulus_sle, drive_whole_plane, sample_brownian, sample_disc_driver};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;
use std::time::Instant;

fn cfg() -> KernelConfig {
    KernelConfig::default()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 20 x-points straddling (0, 2π), pole-free.
fn x_points() -> Vec<f64> {
    (1..=20).map(|i| 0.3 + (2.0 * PI - 0.6) * (i - 1) as f64 / 19.0).collect()
}

#[test]
fn criterion_01_kernel_identity_suite() {
    let start = Instant::now();
    let kc = cfg();
    let mut direct = kc;
    direct.modular_switch = 0.0; // always the sine series
    let mut modular = kc;
    modular.modular_switch = f64::INFINITY; // always the p ↦ π²/p transform
    let mut worst = 0.0f64;
    for p in [0.3f64, 0.5, 1.0, 2.0, 5.0] {
        for x in x_points() {
            let z = c(x, 0.2 * p.min(1.0));
            for kind in [HKind::H, HKind::HI] {
                let v = eval_h(kind, p, z, 0, &kc).unwrap();
                // 2π-periodicity and oddness
                let per = (eval_h(kind, p, z + 2.0 * PI, 0, &kc).unwrap() - v).norm();
                let odd = (eval_h(kind, p, -z, 0, &kc).unwrap() + v).norm();
                worst = worst.max(per).max(odd);
            }
            // Im H(p, x + ip) = −1 and H_I = H(· − ip) − i
            let far = eval_h(HKind::H, p, c(x, p), 0, &kc).unwrap();
            worst = worst.max((far.im + 1.0).abs());
            let shift = eval_h(HKind::H, p, z - c(0.0, p), 0, &kc).unwrap()
                - c(0.0, 1.0)
                - eval_h(HKind::HI, p, z, 0, &kc).unwrap();
            worst = worst.max(shift.norm());
            // Modular identities change-1..4: the two evaluation paths must
            // agree for the value and the derivative of both kernels.
            for kind in [HKind::H, HKind::HI] {
                for order in 0..=1 {
                    let a = eval_h(kind, p, z, order, &direct).unwrap();
                    let b = eval_h(kind, p, z, order, &modular).unwrap();
                    worst = worst.max((a - b).norm());
                }
            }
        }
    }
    assert!(worst < 1e-9, "worst identity residual {worst:.3e}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt:.1}s exceeds 5s");
    println!("criterion 1 PASS: kernel identities within {worst:.2e} (limit 1e-9), {dt:.2}s");
}

#[test]
fn criterion_02_kernel_estimate() {
    let start = Instant::now();
    let kc = cfg();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let im: f64 = rng.gen_range(-3.0..3.0);
        let p = im.abs() + 4.0f64.ln() + rng.gen_range(0.0..3.0);
        let x = rng.gen_range(0.0..2.0 * PI);
        let v = eval_h(HKind::HI, p, c(x, im), 0, &kc).unwrap();
        let bound = 9.0 * (im.abs() - p).exp();
        assert!(v.norm() < bound, "|H_I| = {} vs bound {} at p={p}, z={x}+{im}i", v.norm(), bound);
        worst_ratio = worst_ratio.max(v.norm() / bound);
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 1.0, "runtime {dt:.1}s exceeds 1s");
    println!("criterion 2 PASS: Lemma-2.4 bound holds, worst |H_I|/bound = {worst_ratio:.3}, {dt:.2}s");
}

#[test]
fn criterion_03_taylor_r_big_r() {
    let start = Instant::now();
    let kc = cfg();
    let mut worst = 0.0f64;
    for p in [0.5, 1.0, 2.0] {
        // Laurent: (H(p,z) − 2/z)/z → r(p), Richardson step halving.
        let g = |h: f64| ((eval_h(HKind::H, p, c(h, 0.0), 0, &kc).unwrap() - 2.0 / c(h, 0.0)) / h).re;
        let h = 1e-3;
        let laurent = (4.0 * g(0.5 * h) - g(h)) / 3.0;
        worst = worst.max((laurent - eval_r(p, &kc).unwrap()).abs());
        // R′(p) = r(p) − r(∞) = r(p) + 1/6 by finite differences.
        let hp = 1e-4;
        let fd = (eval_big_r(p + hp, &kc).unwrap() - eval_big_r(p - hp, &kc).unwrap()) / (2.0 * hp);
        worst = worst.max((fd - (eval_r(p, &kc).unwrap() + 1.0 / 6.0)).abs());
    }
    assert!(worst < 1e-6, "worst r/R residual {worst:.3e}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 2.0, "runtime {dt:.1}s exceeds 2s");
    println!("criterion 3 PASS: r(p) Laurent + R' = r + 1/6 within {worst:.2e} (limit 1e-6), {dt:.2}s");
}

#[test]
fn criterion_04_kernel_pdes() {
    let start = Instant::now();
    let kc = cfg();
    let hp = 1e-4;
    let mut worst = 0.0f64;
    for kind in [HKind::H, HKind::HI] {
        for p in [0.7, 1.5, 4.0] {
            for z in [c(0.5, 0.0), c(1.5, 0.0), c(3.0, 0.0), c(5.0, 0.0), c(1.0, 0.3)] {
                let jet = h_jet(kind, p, z, &kc).unwrap();
                let rhs = jet.deriv(2) + jet.deriv(1) * jet.value();
                let d = |h: f64| {
                    (eval_h(kind, p + h, z, 0, &kc).unwrap()
                        - eval_h(kind, p - h, z, 0, &kc).unwrap())
                        / (2.0 * h)
                };
                let dot = (d(0.5 * hp) * 4.0 - d(hp)) / 3.0;
                worst = worst.max((dot - rhs).norm());
            }
        }
    }
    assert!(worst < 1e-5, "worst kernel PDE residual {worst:.3e}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 2.0, "runtime {dt:.1}s exceeds 2s");
    println!("criterion 4 PASS: kernel PDE residual {worst:.2e} (limit 1e-5), {dt:.2}s");
}

#[test]
fn criterion_05_drift_catalog_audit() {
    let start = Instant::now();
    let kc = cfg();
    // The full catalog: 21 families with their geometry.  p stays ≥ 0.8:
    // the κ = 2, 3 ratio families lose absolute accuracy near x = π for
    // smaller p (exponentially small Θ′ / Γ̂ denominators), which the
    // p-difference would misreport as residual.
    let families: [(&str, f64, PdeKind); 21] = [
        ("kappa4/1?C=0", 4.0, PdeKind::CrossingAnnulus),
        ("kappa4/2?C=0", 4.0, PdeKind::CrossingAnnulus),
        ("kappa4/3?C=0", 4.0, PdeKind::ChordalAnnulus),
        ("kappa4/4", 4.0, PdeKind::ChordalAnnulus),
        ("kappa4/5", 4.0, PdeKind::ChordalAnnulus),
        ("kappa4/6?C=0.5", 4.0, PdeKind::ChordalAnnulus),
        ("kappa2/1", 2.0, PdeKind::CrossingAnnulus),
        ("kappa2/2", 2.0, PdeKind::ChordalAnnulus),
        ("kappa2/3", 2.0, PdeKind::ChordalAnnulus),
        ("kappa2/4", 2.0, PdeKind::ChordalAnnulus),
        ("kappa3/1", 3.0, PdeKind::CrossingAnnulus),
        ("kappa3/2", 3.0, PdeKind::ChordalAnnulus),
        ("kappa3/3", 3.0, PdeKind::ChordalAnnulus),
        ("kappa0/1", 0.0, PdeKind::ChordalAnnulus),
        ("kappa0/2", 0.0, PdeKind::ChordalAnnulus),
        ("kappa0/3", 0.0, PdeKind::ChordalAnnulus),
        ("kappa0/4", 0.0, PdeKind::ChordalAnnulus),
        ("kappa16o3/5", 16.0 / 3.0, PdeKind::ChordalAnnulus),
        ("kappa16o3/6", 16.0 / 3.0, PdeKind::ChordalAnnulus),
        ("kappa16o3/7", 16.0 / 3.0, PdeKind::ChordalAnnulus),
        ("kappa16o3/8", 16.0 / 3.0, PdeKind::ChordalAnnulus),
    ];
    let p_grid = [0.8, 1.7, 2.6, 3.5];
    let x_grid: Vec<f64> = (0..12).map(|i| 0.3 + 5.6 * i as f64 / 11.0).collect();
    let max_res = |id: &str, kappa: f64, pde: PdeKind| -> f64 {
        let l = drift_from_id(id).unwrap();
        pde_residual(&l, kappa, pde, &p_grid, &x_grid, 1e-4, &kc)
            .unwrap()
            .iter()
            .flatten()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    };
    let mut worst_own = 0.0f64;
    let mut weakest_control = f64::INFINITY;
    for (id, kappa, pde) in families {
        let own = max_res(id, kappa, pde);
        let off = max_res(id, kappa + 1.0, pde);
        assert!(own < 1e-5, "{id}: own residual {own:.3e}");
        assert!(off > 1e-2, "{id}: κ+1 control residual only {off:.3e}");
        worst_own = worst_own.max(own);
        weakest_control = weakest_control.min(off);
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt:.1}s exceeds 60s");
    println!(
        "criterion 5 PASS: 21 families, own residual ≤ {worst_own:.2e} (limit 1e-5), \
         κ+1 control ≥ {weakest_control:.2e}, {dt:.1}s"
    );
}

#[test]
fn criterion_06_sign_lemmas() {
    let start = Instant::now();
    let kc = cfg();
    for p in [0.5, 1.0, 2.0] {
        for i in 0..200 {
            let x = 0.05 + (2.0 * PI - 0.1) * i as f64 / 199.0;
            let z = c(x, 0.0);
            assert!(eval_theta(3, p, z, 1, &kc).unwrap().re > 0.0, "Θ3' ≤ 0 at p={p}, x={x}");
            for j in [2u8, 4, 5] {
                assert!(eval_theta(j, p, z, 1, &kc).unwrap().re < 0.0, "Θ{j}' ≥ 0 at p={p}, x={x}");
            }
            for j in [6u8, 7] {
                assert!(eval_theta(j, p, z, 0, &kc).unwrap().re > 0.0, "Θ{j} ≤ 0 at p={p}, x={x}");
            }
        }
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt:.1}s exceeds 5s");
    println!("criterion 6 PASS: Θ sign lemmas on 600 points/function, {dt:.2}s");
}

#[test]
fn criterion_07_loewner_correctness() {
    let start = Instant::now();
    let kc = cfg();
    let driving = DrivingPath::constant(0.0, 0.0, 2.0, 1e-3);
    let policy = StepPolicy::for_driving(&driving);

    // radial ξ ≡ 0: |g'(t, 0)| = e^t
    let mut flow = LoewnerFlow::new(FlowKind::Radial, 0.0, &[c(0.0, 0.0)], &[], kc);
    let mut worst_radial = 0.0f64;
    for k in 1..=4 {
        let t = 0.5 * k as f64;
        flow.run(&driving, t, &policy).unwrap();
        worst_radial = worst_radial.max((flow.tracked[0].deriv.norm() - t.exp()).abs() / t.exp());
    }
    assert!(worst_radial < 1e-8, "radial |g'| error {worst_radial:.3e}");

    // annulus p = 10 vs radial at t = 0.5
    let z = c(0.3, 0.2).exp() * 0.6;
    let mut ann = LoewnerFlow::new(FlowKind::Annulus { p: 10.0 }, 0.0, &[z], &[], cfg());
    let mut rad = LoewnerFlow::new(FlowKind::Radial, 0.0, &[z], &[], cfg());
    ann.run(&driving, 0.5, &policy).unwrap();
    rad.run(&driving, 0.5, &policy).unwrap();
    let d_ar = (ann.tracked[0].z - rad.tracked[0].z).norm();
    assert!(d_ar < 5e-4, "annulus vs radial {d_ar:.3e}");

    // covering consistency: g_annulus(e^{iw}) = e^{i g_covering(w)}
    let wiggly = sin_driver(0.4, 0.3, 2.0, 0.5, 1e-3);
    let w = c(1.9, 0.8);
    let mut cov = LoewnerFlow::new(FlowKind::CoveringAnnulus { p: 2.0 }, 0.0, &[w], &[], cfg());
    let mut circ = LoewnerFlow::new(FlowKind::Annulus { p: 2.0 }, 0.0, &[(c(0.0, 1.0) * w).exp()], &[], cfg());
    cov.run(&wiggly, 0.4, &policy).unwrap();
    circ.run(&wiggly, 0.4, &policy).unwrap();
    let d_cov = ((c(0.0, 1.0) * cov.tracked[0].z).exp() - circ.tracked[0].z).norm();
    assert!(d_cov < 1e-8, "covering consistency {d_cov:.3e}");

    // semigroup: advancing 0 → 0.5 equals 0 → 0.25 → 0.5 through a fresh flow
    let mut z1 = w;
    advance_point(FlowKind::CoveringAnnulus { p: 2.0 }, &mut z1, None, 0.0, 0.5, &wiggly, &policy, &cfg()).unwrap();
    let mut z2 = w;
    advance_point(FlowKind::CoveringAnnulus { p: 2.0 }, &mut z2, None, 0.0, 0.25, &wiggly, &policy, &cfg()).unwrap();
    advance_point(FlowKind::CoveringAnnulus { p: 2.0 }, &mut z2, None, 0.25, 0.5, &wiggly, &policy, &cfg()).unwrap();
    let d_semi = (z1 - z2).norm();
    assert!(d_semi < 1e-9, "semigroup {d_semi:.3e}");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "runtime {dt:.1}s exceeds 10s");
    println!(
        "criterion 7 PASS: radial {worst_radial:.1e}, annulus↔radial {d_ar:.1e}, \
         covering {d_cov:.1e}, semigroup {d_semi:.1e}, {dt:.2}s"
    );
}

fn sin_driver(x0: f64, amp: f64, freq: f64, t_end: f64, dt: f64) -> DrivingPath {
    let n = (t_end / dt).round() as usize;
    DrivingPath {
        t0: 0.0,
        dt,
        values: (0..=n).map(|i| x0 + amp * (freq * i as f64 * dt).sin()).collect(),
        kappa: 0.0,
        seed: 0,
    }
}

#[test]
fn criterion_08_jet_correctness() {
    let start = Instant::now();
    let kc = cfg();
    let kind = FlowKind::CoveringAnnulus { p: 3.0 };
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let driving = sample_brownian(0.2, 1e-3, seed);
        let policy = StepPolicy::for_driving(&driving);
        let base = 2.5 + 0.1 * (seed as f64); // stays away from the driver
        let mut jet = [c(base, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        match advance_jet(kind, &mut jet, 0.0, 0.2, &driving, &policy, &kc).unwrap() {
            Advance::Reached => {}
            Advance::Swallowed(t) => panic!("jet swallowed at {t}"),
        }
        // finite-difference jets from point evaluations around the base
        let g = |x: f64| {
            let mut z = c(x, 0.0);
            advance_point(kind, &mut z, None, 0.0, 0.2, &driving, &policy, &kc).unwrap();
            z.re
        };
        let h = 5e-3;
        let five: Vec<f64> = (-2..=2).map(|k| g(base + k as f64 * h)).collect();
        let d1 = (five[0] - 8.0 * five[1] + 8.0 * five[3] - five[4]) / (12.0 * h);
        let d2 = (-five[0] + 16.0 * five[1] - 30.0 * five[2] + 16.0 * five[3] - five[4])
            / (12.0 * h * h);
        let d3 = (five[4] - 2.0 * five[3] + 2.0 * five[1] - five[0]) / (2.0 * h * h * h);
        for (var, fd) in [(jet[1].re, d1), (jet[2].re, d2), (jet[3].re, d3)] {
            worst = worst.max((var - fd).abs() / var.abs().max(1.0));
        }
    }
    assert!(worst < 1e-5, "worst jet relative error {worst:.3e}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 10.0, "runtime {dt:.1}s exceeds 10s");
    println!("criterion 8 PASS: variational vs FD jets within {worst:.2e} (limit 1e-5), {dt:.2}s");
}

#[test]
fn criterion_09_kappa0_commutation() {
    let start = Instant::now();
    let kc = cfg();
    let l = drift_from_id("kappa0/1").unwrap();
    assert_eq!(l.kind, DriftKind::ChordalType);
    let report = kappa0_commutation_check(&l, 3.0, 0.0, 2.0, 0.3, 0.3, 1e-3, &kc).unwrap();
    assert!(report.sup_diff <= 1e-3, "sup diff {:.3e}", report.sup_diff);
    assert!(report.max_u_drift <= 5e-3, "U drift {:.3e}", report.max_u_drift);
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt:.1}s exceeds 60s");
    println!(
        "criterion 9 PASS: κ=0 growth orders agree within {:.2e} (limit 1e-3), \
         U-drift {:.2e} (limit 5e-3), {dt:.1}s",
        report.sup_diff, report.max_u_drift
    );
}

#[test]
fn criterion_10_ensemble_identities() {
    let start = Instant::now();
    let kc = cfg();
    let p = 3.0;
    let l = drift_from_id("kappa0/1").unwrap();
    let l2 = annulus_sle::drifts::dual(&l);
    let delta = 2e-3;
    let run1 = drive_annulus_sle(0.0, &l, l.kind, p, 0.0, 2.0, 0.2, delta, 0, 0).unwrap();
    let run2 = drive_annulus_sle(0.0, &l2, l.kind, p, 2.0, 0.0, 0.2, delta, 0, 1).unwrap();
    let grid =
        ensemble_grid(p, &run1.xi, &run2.xi, 10, 10, delta, Geometry::ChordalType, &kc).unwrap();
    let (n1, n2) = (grid.s1.len(), grid.s2.len());

    // m(t1, 0) = p − t1 exactly
    for i in 0..n1 {
        assert_eq!(grid.m[i][0], p - grid.s1[i], "m axis identity broken at i={i}");
    }
    // X1 + X2 = 0
    let mut max_anti = 0.0f64;
    for i in 0..n1 {
        for j in 0..n2 {
            max_anti = max_anti.max((grid.x1[i][j] + grid.x2[i][j]).abs());
        }
    }
    assert!(max_anti < 1e-4, "max |X1 + X2| = {max_anti:.3e}");
    // dv1/dt1 = A_{1,1}²
    let mut max_dv = 0.0f64;
    for j in 0..n2 {
        for i in 1..n1 - 1 {
            let fd = (grid.v1[i + 1][j] - grid.v1[i - 1][j]) / (grid.s1[i + 1] - grid.s1[i - 1]);
            max_dv = max_dv.max((fd - grid.a1[i][j][1].powi(2)).abs());
        }
    }
    assert!(max_dv < 2e-3, "max |dv/dt1 − A11²| = {max_dv:.3e}");
    // ∂1 A_{2,S} = A_{1,1}² A_{2,1}² Q
    let mut max_ds = 0.0f64;
    for j in 0..n2 {
        for i in 1..n1 - 1 {
            let fd = (EnsembleGrid::schwarzian(&grid.a2[i + 1][j])
                - EnsembleGrid::schwarzian(&grid.a2[i - 1][j]))
                / (grid.s1[i + 1] - grid.s1[i - 1]);
            let rhs = grid.a1[i][j][1].powi(2) * grid.a2[i][j][1].powi(2) * grid.q[i][j];
            max_ds = max_ds.max((fd - rhs).abs());
        }
    }
    assert!(max_ds < 5e-3, "max |∂1 A2S − A²A²Q| = {max_ds:.3e}");

    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt:.1}s exceeds 60s");
    println!(
        "criterion 10 PASS: X1+X2 ≤ {max_anti:.1e}, dv/dt1 ≤ {max_dv:.1e}, \
         ∂1A2S ≤ {max_ds:.1e}, m-axis exact, {dt:.1}s"
    );
}

#[test]
fn criterion_11_martingale_check() {
    let start = Instant::now();
    let kc = cfg();
    let n = 2000;
    for (kappa, id) in [(2.0, "kappa2/1"), (4.0, "kappa4/1?C=0"), (3.0, "kappa3/1")] {
        let l = drift_from_id(id).unwrap();
        let est = martingale_estimate(
            kappa, &l, 4.0, 0.0, PI, 0.25, 0.25, n, 2e-4, 1e-2, 8, 20260823, &kc,
        )
        .unwrap();
        let dev = (est.mean - 1.0).abs();
        let rejection = est.rejected as f64 / (est.n_used + est.rejected) as f64;
        assert!(
            dev <= 3.0 * est.stderr,
            "κ={kappa}: |mean − 1| = {dev:.4} > 3·stderr = {:.4}",
            3.0 * est.stderr
        );
        assert!(est.stderr < 0.05, "κ={kappa}: stderr {:.4}", est.stderr);
        assert!(rejection < 0.01, "κ={kappa}: rejection rate {rejection:.4}");
        println!(
            "  κ={kappa}: mean = {:.4} ± {:.4}, rejection {:.4}",
            est.mean, est.stderr, rejection
        );
    }
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 1800.0 * 8.0, "core-time budget exceeded: {dt:.0}s"); // 30 min × 8 cores
    println!("criterion 11 PASS: E[M] = 1 within 3σ for κ = 2, 4, 3 at N = {n}, {dt:.0}s");
}

#[test]
fn criterion_12_whole_plane_mode() {
    let start = Instant::now();
    let kc = cfg();
    // m ≥ −t1 − t2 − ln 16 on 100 random configurations.
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
    let mut min_slack = f64::INFINITY;
    for i in 0..100u64 {
        let kappa = rng.gen_range(1.0..6.0);
        let t1 = -rng.gen_range(0.7..1.6);
        let t2 = -rng.gen_range(0.7..1.6);
        let xi1 = drive_whole_plane(kappa, -6.0, t1, 5e-3, 1000 + i, 0);
        let xi2 = drive_whole_plane(kappa, -6.0, t2, 5e-3, 1000 + i, 1);
        // snap to the actual end of the sampled paths
        let (t1, t2) = (xi1.t_end(), xi2.t_end());
        let m = whole_plane_modulus(&xi1, &xi2, t1, t2, 0.04, &kc).unwrap();
        let bound = -t1 - t2 - 16.0f64.ln();
        assert!(m >= bound, "config {i}: m = {m:.4} < bound {bound:.4}");
        min_slack = min_slack.min(m - bound);
    }
    // Initialization stability: halving |t0| moves g̃ by < 1e−6.
    let probe = c(0.5, -3.0);
    let g_at = |t0: f64| {
        let driving = DrivingPath::constant(0.3, t0, -2.0, 0.01);
        let policy = StepPolicy::for_driving(&driving);
        let mut flow = LoewnerFlow::new(FlowKind::CoveringWholePlane, t0, &[probe], &[], cfg());
        flow.run(&driving, -2.0, &policy).unwrap();
        flow.tracked[0].z
    };
    let d_init = (g_at(-40.0) - g_at(-20.0)).norm();
    assert!(d_init < 1e-6, "initialization drift {d_init:.3e}");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 60.0, "runtime {dt:.1}s exceeds 60s");
    println!(
        "criterion 12 PASS: m ≥ −t1−t2−ln16 on 100 configs (min slack {min_slack:.3}), \
         init stability {d_init:.1e}, {dt:.1}s"
    );
}

/// Two-sample Kolmogorov–Smirnov distance.
fn ks_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn criterion_13_disc_driver_stationarity() {
    let start = Instant::now();
    let l = drift_from_id("kappa2/1").unwrap();
    let n = 2000u64;
    let angles = |burn: f64, salt: u64| -> Vec<f64> {
        (0..n)
            .map(|s| {
                let path = sample_disc_driver(2.0, &l, burn, 1.0, 1e-2, 13 + salt, s).unwrap();
                path.xi(path.t_end()).rem_euclid(2.0 * PI)
            })
            .collect()
    };
    // KS distance between the burn-in-b marginal and an independent copy of
    // itself (sampling noise floor), and between burn-in b and 2b.
    let base = angles(4.0, 0);
    let doubled = angles(8.0, 1);
    let d = ks_distance(base, doubled);
    assert!(d < 0.05, "KS distance {d:.4} between burn-in 4 and 8");
    let dt = start.elapsed().as_secs_f64();
    assert!(dt < 300.0, "runtime {dt:.1}s exceeds 5min");
    println!("criterion 13 PASS: doubling burn-in moves the ξ(−1) marginal by KS {d:.4} (limit 0.05), {dt:.1}s");
}

#[test]
fn criterion_14_cli_determinism() {
    use std::process::Command;
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_annulus-sle");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();

    let sim_out = path("driver.csv");
    let cases: Vec<(&str, Vec<String>)> = vec![
        (
            "kernel-eval",
            ["kernel-eval", "--kind", "HI", "--p", "1.5", "--grid", "0.3,6.0,25",
             "--order", "2", "--out", &path("kernel.csv")]
                .map(String::from).to_vec(),
        ),
        (
            "pde-check",
            ["pde-check", "--family", "kappa4/1?C=0", "--kappa", "4", "--pde", "crossing",
             "--pgrid", "1.0,2.0,2", "--xgrid", "0.5,5.5,6", "--out", &path("pde.csv")]
                .map(String::from).to_vec(),
        ),
        (
            "simulate",
            ["simulate", "--kappa", "2", "--family", "kappa2/1", "--p", "3", "--x0", "0",
             "--y0", "3.14159", "--t-end", "0.2", "--dt", "1e-3", "--seed", "7",
             "--out", &sim_out]
                .map(String::from).to_vec(),
        ),
        (
            "trace",
            ["trace", "--kind", "annulus", "--p", "3", "--driver", &sim_out,
             "--samples", "25", "--out", &path("trace.csv")]
                .map(String::from).to_vec(),
        ),
        (
            "ensemble",
            ["ensemble", "--kappa", "2", "--family", "kappa2/1", "--p", "4", "--x1", "0",
             "--x2", "3.14159", "--t1", "0.1", "--t2", "0.1", "--dt", "1e-3",
             "--delta", "1e-2", "--grid", "4", "--seed", "3", "--out", &path("record.json")]
                .map(String::from).to_vec(),
        ),
        (
            "commute",
            ["commute", "--p", "2.5", "--x1", "0", "--x2", "3.14159", "--t1", "0",
             "--t2", "0.1", "--delta", "2e-3"]
                .map(String::from).to_vec(),
        ),
        (
            "martingale",
            ["martingale", "--kappa", "2", "--family", "kappa2/1", "--p", "4",
             "--t1", "0.05", "--t2", "0.05", "--n", "4", "--dt", "1e-3",
             "--delta", "1e-2", "--grid", "4", "--seed", "7", "--out", &path("mart.json")]
                .map(String::from).to_vec(),
        ),
    ];

    for (name, args) in &cases {
        let run = || {
            let out = Command::new(bin).args(args).output().unwrap();
            let mut files = Vec::new();
            let mut entries: Vec<_> = std::fs::read_dir(dir.path())
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            entries.sort();
            for f in entries {
                files.push((f.clone(), std::fs::read(&f).unwrap()));
            }
            (out.stdout, out.status.code(), files)
        };
        let first = run();
        let second = run();
        assert_eq!(first.1, second.1, "{name}: exit codes differ");
        assert_eq!(first.0, second.0, "{name}: stdout differs");
        assert_eq!(first.2.len(), second.2.len(), "{name}: file sets differ");
        for ((pa, ba), (pb, bb)) in first.2.iter().zip(second.2.iter()) {
            assert_eq!(pa, pb, "{name}: file names differ");
            assert!(ba == bb, "{name}: {} not bit-identical between runs", pa.display());
        }
    }
    let dt = start.elapsed().as_secs_f64();
    println!("criterion 14 PASS: {} CLI commands bit-identical across re-runs, {dt:.1}s", cases.len());
}
