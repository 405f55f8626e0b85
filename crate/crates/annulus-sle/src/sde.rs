//! Driving-function generators: Brownian paths, annulus SLE(κ,Λ) via the
//! coupled f/q system, whole-plane B^(κ), radial/strip marked-point
//! drivers, and the approximate stationary disc-SLE driver.
//!
//! All randomness flows through counter-based ChaCha streams keyed by
//! `(seed, stream)`, so parallel Monte Carlo is reproducible regardless of
//! scheduling.  The integration scheme is Euler–Maruyama for ξ with the
//! drift at the left endpoint, and an RK4 sub-step for the marked-point
//! image q inside each Euler step (q's ODE stiffens near collision; the
//! sub-step is cheap).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::drifts::{DriftError, DriftFunction, DriftKind};
use crate::kernels::{eval_h, HKind, KernelConfig, KernelError};
use crate::loewner::DrivingPath;

/// Distance of ξ−q to the relevant pole set below which a chordal-type /
/// radial / strip run is declared collided.
pub const COLLISION_EPS: f64 = 1e-4;

#[derive(thiserror::Error, Debug, Clone)]
pub enum SdeError {
    #[error("drift evaluated at its pole at t = {t:.6} (argument {x:.6})")]
    DriftPole { t: f64, x: f64 },
    #[error("run time {t} reaches the modulus p = {p}")]
    ModulusExhausted { t: f64, p: f64 },
    #[error("invalid run parameters: {0}")]
    BadParameters(String),
    #[error(transparent)]
    Drift(DriftError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type SResult<T> = Result<T, SdeError>;

/// Deterministic per-path RNG: independent streams for the same seed.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard Brownian motion on [0, T], sampled on a uniform dt-grid.
pub fn sample_brownian(t_end: f64, dt: f64, seed: u64) -> DrivingPath {
    sample_brownian_stream(t_end, dt, seed, 0)
}

pub fn sample_brownian_stream(t_end: f64, dt: f64, seed: u64, stream: u64) -> DrivingPath {
    let mut rng = path_rng(seed, stream);
    let n = ((t_end / dt).round() as usize).max(1);
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    let s = dt.sqrt();
    for _ in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        w += s * g;
        values.push(w);
    }
    DrivingPath {
        t0: 0.0,
        dt,
        values,
        kappa: 1.0,
        seed,
    }
}

/// One annulus SLE(κ,Λ) run: the driver ξ = f + √κB, the marked-point
/// image q, and where (and why) the run stopped.
#[derive(Clone, Debug)]
pub struct AnnulusSleRun {
    pub xi: DrivingPath,
    pub q: Vec<f64>,
    /// p for crossing runs that reach `t_end`; the collision time for
    /// chordal-type runs that stop early.
    pub stop_time: f64,
    pub collided: bool,
    pub p: f64,
    pub x0: f64,
    pub y0: f64,
    pub kind: DriftKind,
}

fn map_drift_err(e: DriftError, t: f64) -> SdeError {
    match e {
        DriftError::DriftPole { x } => SdeError::DriftPole { t, x },
        other => SdeError::Drift(other),
    }
}

fn wrap_pi(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

fn dist_mod_2pi(x: f64) -> f64 {
    wrap_pi(x).abs()
}

/// Solve the Eq. kappa-Lambda system
///   f′(t) = Λ(p−t, f(t)+√κB(t)−q(t)),
///   q′(t) = K(p−t, q(t)−f(t)−√κB(t)),
/// with K = H_I (crossing) or H (chordal-type), up to `t_end` or collision.
pub fn drive_annulus_sle(
    kappa: f64,
    l: &DriftFunction,
    kind: DriftKind,
    p: f64,
    x0: f64,
    y0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
) -> SResult<AnnulusSleRun> {
    let kernel = match kind {
        DriftKind::Crossing => HKind::HI,
        DriftKind::ChordalType => HKind::H,
        _ => {
            return Err(SdeError::BadParameters(
                "annulus runs are crossing or chordal-type".into(),
            ))
        }
    };
    if l.kind != kind {
        return Err(SdeError::BadParameters(format!(
            "drift kind {:?} does not match run kind {:?}",
            l.kind, kind
        )));
    }
    if !(p > 0.0) || p.is_infinite() {
        return Err(SdeError::BadParameters(format!("bad modulus p = {p}")));
    }
    if t_end >= p {
        return Err(SdeError::ModulusExhausted { t: t_end, p });
    }
    let cfg = KernelConfig::default();
    let b = sample_brownian_stream(t_end, dt, seed, stream);
    let n = b.values.len() - 1;
    let sk = kappa.sqrt();
    let mut f = vec![0.0; n + 1];
    let mut q = vec![0.0; n + 1];
    let mut xi = vec![0.0; n + 1];
    f[0] = x0;
    q[0] = y0;
    xi[0] = x0;
    let mut stop_time = t_end;
    let mut collided = false;
    let mut last = n;
    for i in 0..n {
        let t = i as f64 * dt;
        let drift = l
            .eval(p - t, xi[i] - q[i])
            .map_err(|e| map_drift_err(e, t))?;
        f[i + 1] = f[i] + drift * dt;
        xi[i + 1] = f[i + 1] + sk * b.values[i + 1];
        // RK4 for q over [t, t+dt] with ξ interpolated linearly.
        let xi0 = xi[i];
        let dxi = xi[i + 1] - xi[i];
        let deriv = |s: f64, qq: f64| -> SResult<f64> {
            let xis = xi0 + dxi * (s / dt);
            Ok(eval_h(kernel, p - t - s, Complex64::new(qq - xis, 0.0), 0, &cfg)?.re)
        };
        let k1 = deriv(0.0, q[i])?;
        let k2 = deriv(0.5 * dt, q[i] + 0.5 * dt * k1)?;
        let k3 = deriv(0.5 * dt, q[i] + 0.5 * dt * k2)?;
        let k4 = deriv(dt, q[i] + dt * k3)?;
        q[i + 1] = q[i] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if kind == DriftKind::ChordalType {
            // Collision when ξ−q reaches 2πℤ — or overshoots it within a
            // step, which the strong −6/x attraction of the κ=0 families
            // does readily at finite dt.
            let w_prev = wrap_pi(xi[i] - q[i]);
            let w_next = wrap_pi(xi[i + 1] - q[i + 1]);
            let crossed = w_prev * w_next < 0.0 && w_prev.abs() < 0.3 && w_next.abs() < 0.3;
            if w_next.abs() < COLLISION_EPS || crossed {
                stop_time = (i + 1) as f64 * dt;
                collided = true;
                last = i + 1;
                break;
            }
        }
    }
    f.truncate(last + 1);
    q.truncate(last + 1);
    xi.truncate(last + 1);
    Ok(AnnulusSleRun {
        xi: DrivingPath {
            t0: 0.0,
            dt,
            values: xi,
            kappa,
            seed,
        },
        q,
        stop_time,
        collided,
        p,
        x0,
        y0,
        kind,
    })
}

/// Whole-plane driver B^(κ)(t) = x + √κ B_{sign(t)}(|t|) on [t0, T], with
/// x uniform on [0, 2π).
pub fn drive_whole_plane(
    kappa: f64,
    t0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
) -> DrivingPath {
    let mut rng = path_rng(seed, stream);
    let x: f64 = rng.gen::<f64>() * 2.0 * PI;
    let n = (((t_end - t0) / dt).round() as usize).max(0);
    let s = dt.sqrt();
    // Two independent one-sided Brownian motions, anchored at time 0.
    let n_neg = if t0 < 0.0 {
        ((-t0) / dt).ceil() as usize
    } else {
        0
    };
    let n_pos = if t_end > 0.0 {
        (t_end / dt).ceil() as usize + 1
    } else {
        0
    };
    let mut w_neg = vec![0.0; n_neg + 1]; // w_neg[k] = B_-(k dt)
    for k in 1..=n_neg {
        let g: f64 = rng.sample(StandardNormal);
        w_neg[k] = w_neg[k - 1] + s * g;
    }
    let mut w_pos = vec![0.0; n_pos + 1];
    for k in 1..=n_pos {
        let g: f64 = rng.sample(StandardNormal);
        w_pos[k] = w_pos[k - 1] + s * g;
    }
    let w_at = |t: f64| -> f64 {
        if t >= 0.0 {
            let u = t / dt;
            let k = (u.floor() as usize).min(n_pos.saturating_sub(1));
            let frac = u - k as f64;
            w_pos[k] * (1.0 - frac) + w_pos[(k + 1).min(n_pos)] * frac
        } else {
            let u = -t / dt;
            let k = (u.floor() as usize).min(n_neg.saturating_sub(1));
            let frac = u - k as f64;
            w_neg[k] * (1.0 - frac) + w_neg[(k + 1).min(n_neg)] * frac
        }
    };
    let values: Vec<f64> = (0..=n).map(|k| x + kappa.sqrt() * w_at(t0 + k as f64 * dt)).collect();
    DrivingPath {
        t0,
        dt,
        values,
        kappa,
        seed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkedGeometry {
    Radial,
    Strip,
}

/// A radial or strip SLE(κ,Λ) driver with the flowed marked point.
#[derive(Clone, Debug)]
pub struct MarkedRun {
    pub xi: DrivingPath,
    pub q: Vec<f64>,
    pub stop_time: f64,
    pub collided: bool,
}

/// Radial: dξ = √κ dB + Λ(ξ − g̃^ξ(t,y₀))dt with q′ = cot₂(q − ξ);
/// strip: same with coth₂.  Stops at collision or `t_end`.
pub fn drive_marked_radial_or_strip(
    kappa: f64,
    l: &DriftFunction,
    geometry: MarkedGeometry,
    a: f64,
    b: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
) -> SResult<MarkedRun> {
    let separated = match geometry {
        MarkedGeometry::Radial => dist_mod_2pi(a - b) > COLLISION_EPS,
        MarkedGeometry::Strip => (a - b).abs() > COLLISION_EPS,
    };
    if !separated {
        return Err(SdeError::BadParameters(
            "initial and marked points must be distinct".into(),
        ));
    }
    let bm = sample_brownian_stream(t_end, dt, seed, stream);
    let n = bm.values.len() - 1;
    let sk = kappa.sqrt();
    let mut f = a;
    let mut xi = vec![a];
    let mut q = vec![b];
    let mut stop_time = t_end;
    let mut collided = false;
    let field = |x: f64| -> f64 {
        match geometry {
            MarkedGeometry::Radial => 1.0 / (x / 2.0).tan(),
            MarkedGeometry::Strip => 1.0 / (x / 2.0).tanh(),
        }
    };
    for i in 0..n {
        let t = i as f64 * dt;
        let drift = l
            .eval(f64::INFINITY, xi[i] - q[i])
            .map_err(|e| map_drift_err(e, t))?;
        f += drift * dt;
        let xi_next = f + sk * bm.values[i + 1];
        let xi0 = xi[i];
        let dxi = xi_next - xi0;
        let deriv = |s: f64, qq: f64| field(qq - (xi0 + dxi * s / dt));
        let k1 = deriv(0.0, q[i]);
        let k2 = deriv(0.5 * dt, q[i] + 0.5 * dt * k1);
        let k3 = deriv(0.5 * dt, q[i] + 0.5 * dt * k2);
        let k4 = deriv(dt, q[i] + dt * k3);
        let q_next = q[i] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        xi.push(xi_next);
        q.push(q_next);
        let d = match geometry {
            MarkedGeometry::Radial => dist_mod_2pi(xi_next - q_next),
            MarkedGeometry::Strip => (xi_next - q_next).abs(),
        };
        if d < COLLISION_EPS {
            stop_time = (i + 1) as f64 * dt;
            collided = true;
            break;
        }
    }
    Ok(MarkedRun {
        xi: DrivingPath {
            t0: 0.0,
            dt,
            values: xi,
            kappa,
            seed,
        },
        q,
        stop_time,
        collided,
    })
}

/// Approximate stationary disc-SLE(κ,Λ) driver on [−p_burn, −p_stop].
///
/// Integrates the §3.2 construction: X̃ solves dX̃ = √κdB + Φ_I(−t,X̃)dt
/// with Φ_I = Λ_I + H_I (Λ_I the dual of Λ), started from a uniform angle
/// at −p_burn; q is reconstructed by the trapezoid rule on
/// q(t) = y₀ − ∫ H_I(−s, X̃)ds with the integral truncated at −p_burn
/// (the tail is O(e^{−p_burn}) by the H_I decay bound), and ξ = q + X̃.
pub fn sample_disc_driver(
    kappa: f64,
    l: &DriftFunction,
    p_burn: f64,
    p_stop: f64,
    dt: f64,
    seed: u64,
    stream: u64,
) -> SResult<DrivingPath> {
    if !(p_burn > p_stop && p_stop > 0.0) {
        return Err(SdeError::BadParameters(
            "need p_burn > p_stop > 0".into(),
        ));
    }
    if l.kind != DriftKind::Crossing {
        return Err(SdeError::BadParameters(
            "disc drivers need a crossing drift".into(),
        ));
    }
    let cfg = KernelConfig::default();
    let l_dual = crate::drifts::dual(l);
    let mut rng = path_rng(seed, stream);
    let mut x: f64 = rng.gen::<f64>() * 2.0 * PI;
    let n = (((p_burn - p_stop) / dt).round() as usize).max(1);
    let sk = kappa.sqrt();
    let s = dt.sqrt();
    let mut xs = Vec::with_capacity(n + 1);
    let mut hi = Vec::with_capacity(n + 1);
    let hi_at = |t: f64, xx: f64| -> SResult<f64> {
        Ok(eval_h(HKind::HI, -t, Complex64::new(xx, 0.0), 0, &cfg)?.re)
    };
    let mut t = -p_burn;
    xs.push(x);
    hi.push(hi_at(t, x)?);
    for _ in 0..n {
        let phi = l_dual.eval(-t, x).map_err(|e| map_drift_err(e, t))? + hi_at(t, x)?;
        let g: f64 = rng.sample(StandardNormal);
        x += sk * s * g + phi * dt;
        t += dt;
        xs.push(x);
        hi.push(hi_at(t, x)?);
    }
    // q by the trapezoid rule, y0 = 0.
    let mut q = 0.0;
    let mut values = Vec::with_capacity(n + 1);
    values.push(q + xs[0]);
    for i in 0..n {
        q -= 0.5 * dt * (hi[i] + hi[i + 1]);
        values.push(q + xs[i + 1]);
    }
    Ok(DrivingPath {
        t0: -p_burn,
        dt,
        values,
        kappa,
        seed,
    })
}
