//! Two-time ensemble of a pair of annulus Loewner chains.
//!
//! Chain 1 grows from x₁, chain 2 from x₂, both attached to the outer circle
//! of A_p.  After mapping chain k out at time t_k, chain j reappears as an
//! image chain in A_{p−t_k} with its own capacity time v_{j,t_k} and driver
//! ζ_{j,t_k}.  This module extracts those image chains numerically (the
//! "zipper" bootstrap), evaluates the coupling quantities m, X_j, A_{j,h},
//! Q, F, Y and the martingale observable M on a grid of time pairs, and
//! provides the κ = 0 commutation check and the whole-plane two-sided
//! modulus.

use crate::drifts::{
    dual, gamma_from_lambda, DriftError, DriftFunction, DriftKind, GammaFunction,
};
use crate::kernels::{self, h_jet, HKind, KernelConfig, KernelError};
use crate::loewner::{
    advance_point, compute_trace, reverse_covering, Advance, BoundaryJet, Driving, DrivingPath,
    FlowKind, KnotPath, LResult, LoewnerError, LoewnerFlow, StepPolicy,
};
use crate::quad::adaptive_simpson;
use crate::sde::{drive_annulus_sle, SdeError};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("configuration left the admissible domain: {0}")]
    DomainViolation(String),
    #[error("tip evaluation did not stabilise (residual {residual:.3e})")]
    TipEvaluationUnstable { residual: f64 },
    #[error("too many sample pairs rejected ({rejected} of {total})")]
    ExcessiveRejection { rejected: usize, total: usize },
    #[error("bad parameters: {0}")]
    BadParameters(String),
    #[error(transparent)]
    Loewner(#[from] LoewnerError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

pub type EResult<T> = Result<T, EnsembleError>;

/// Which covering maps carry one chain into the other's picture.  Crossing
/// chains (targets on the inner circle) are composed through the inverted
/// maps g̃_I; chordal-type chains through the plain ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    Crossing,
    ChordalType,
}

impl Geometry {
    pub fn from_kind(kind: DriftKind) -> EResult<Geometry> {
        match kind {
            DriftKind::Crossing => Ok(Geometry::Crossing),
            DriftKind::ChordalType => Ok(Geometry::ChordalType),
            other => Err(EnsembleError::BadParameters(format!(
                "no two-chain ensemble for {other:?} drifts"
            ))),
        }
    }

    /// Flow that maps the other chain's hull out of A_p.
    fn map_out(self, p: f64) -> FlowKind {
        match self {
            Geometry::Crossing => FlowKind::InvertedCoveringAnnulus { p },
            Geometry::ChordalType => FlowKind::CoveringAnnulus { p },
        }
    }

    /// Flow of an image chain as seen from the other chain's base point
    /// (inverted covering maps for crossing, plain for chordal-type).
    fn cross_jets(self, p: f64) -> FlowKind {
        match self {
            Geometry::Crossing => FlowKind::InvertedCoveringAnnulus { p },
            Geometry::ChordalType => FlowKind::CoveringAnnulus { p },
        }
    }
}

// ---------------------------------------------------------------------------
// image-chain extraction (the zipper bootstrap)

/// One chain re-expressed in the annulus left after mapping the other out:
/// knots of the time change s ↦ v and the image driver ζ(v).
#[derive(Clone, Debug)]
pub struct ImageChain {
    /// Modulus of the annulus the image chain lives in (p − t_other).
    pub p_image: f64,
    /// Self-times of the knots.
    pub s: Vec<f64>,
    /// Image capacity times v(s), strictly increasing.
    pub v: Vec<f64>,
    /// Image driver ζ as a function of v.
    pub zeta: KnotPath,
    /// Largest tip-refinement residual seen while zipping.
    pub residual: f64,
}

fn fine_times(t: f64, segments: usize, delta: f64) -> (Vec<f64>, Vec<usize>) {
    if t <= 1e-14 {
        return (vec![0.0], vec![0]);
    }
    let seg = segments.max(1);
    let per = ((t / seg as f64) / delta).round().max(1.0) as usize;
    let n = seg * per;
    let fine = (0..=n).map(|k| t * k as f64 / n as f64).collect();
    let cps = (0..=seg).map(|i| i * per).collect();
    (fine, cps)
}

/// Height of the swallowing singularity of the zipper flow at time v
/// (annulus hulls attach to the real axis, disc hulls to the pole line).
fn pole_seed(kind: FlowKind, v: f64, x: f64, eps: f64) -> Complex64 {
    match kind {
        FlowKind::CoveringDisc => Complex64::new(x, -v - eps),
        _ => Complex64::new(x, eps),
    }
}

/// Seed height for the reverse shots.  Matching the offset used by
/// `compute_trace` (0.5·√dt of the driver that produced the points) cancels
/// the first-order bias of zipping through points that sit slightly off the
/// curve; with a mismatched height the recovered driver picks up a
/// systematic rotation that does not vanish as the step is refined.
fn trace_eps<D: Driving>(driving: &D) -> f64 {
    0.5 * driving.grid_dt().sqrt()
}

/// Launch a point just off the singularity at (v, x) and integrate the
/// covering ODE backwards to v_prev.
#[allow(clippy::too_many_arguments)]
fn reverse_shot(
    kind: FlowKind,
    v: f64,
    x: f64,
    v_prev: f64,
    zeta: &KnotPath,
    policy: &StepPolicy,
    cfg: &KernelConfig,
    eps: f64,
) -> LResult<Complex64> {
    let mut z = pole_seed(kind, v, x, eps);
    reverse_covering(kind, &mut z, v, v_prev, zeta, policy, cfg)?;
    Ok(z)
}

struct TipSolve {
    v: f64,
    err: f64,
}

/// Solve for the next knot (v, x) of ζ by reverse shooting: the point seeded
/// at the singularity of time v must flow back onto the trace point `w` at
/// v_prev.  Newton iteration on the 2×2 real system; the provisional knot is
/// kept at the end of `zeta` and updated in place.
#[allow(clippy::too_many_arguments)]
fn solve_tip(
    kind: FlowKind,
    w: Complex64,
    v_prev: f64,
    v_cap: f64,
    dv_hint: Option<f64>,
    zeta: &mut KnotPath,
    policy: &StepPolicy,
    cfg: &KernelConfig,
    eps: f64,
) -> EResult<TipSolve> {
    let d0 = crate::loewner::sing_distance(kind, v_prev, w, zeta.xi(v_prev));
    if !d0.is_finite() || d0 <= 0.0 {
        return Err(EnsembleError::TipEvaluationUnstable { residual: d0 });
    }
    let clamp_v = |v: f64| -> f64 {
        v.max(v_prev + 1e-12)
            .min(v_prev + 0.9 * (v_cap - v_prev).max(0.0))
    };
    let mut v = clamp_v(v_prev + dv_hint.unwrap_or(0.25 * d0 * d0));
    let mut x = w.re;
    zeta.push(v, x);
    let last = zeta.t.len() - 1;
    let shoot = |zeta: &mut KnotPath, v: f64, x: f64| -> LResult<Complex64> {
        zeta.t[last] = v;
        zeta.x[last] = x;
        reverse_shot(kind, v, x, v_prev, zeta, policy, cfg, eps)
    };
    let mut err = f64::INFINITY;
    let mut jac: Option<(Complex64, Complex64)> = None;
    let mut g0;
    for iter in 0..8 {
        match shoot(zeta, v, x) {
            Ok(z) => {
                g0 = z - w;
                err = g0.norm();
            }
            Err(_) if iter == 0 => {
                // Bad initial capacity guess: shrink towards v_prev.
                v = clamp_v(v_prev + 0.25 * (v - v_prev));
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        if err < 1e-11 {
            break;
        }
        if jac.is_none() {
            let hv = (0.1 * (v - v_prev)).max(1e-10);
            let hx = 1e-6;
            let zv = shoot(zeta, clamp_v(v + hv), x)?;
            let zx = shoot(zeta, v, x + hx)?;
            jac = Some(((zv - w - g0) / hv, (zx - w - g0) / hx));
        }
        let (gv, gx) = jac.unwrap();
        let det = gv.re * gx.im - gv.im * gx.re;
        if det.abs() < 1e-30 {
            break;
        }
        let dv = (-g0.re * gx.im + g0.im * gx.re) / det;
        let dx = (-gv.re * g0.im + gv.im * g0.re) / det;
        let v_new = clamp_v(v + dv);
        x += dx;
        // Re-linearise when the step was large relative to the interval.
        if (v_new - v).abs() > 0.25 * (v - v_prev).max(1e-12) || iter >= 3 {
            jac = None;
        }
        v = v_new;
    }
    // leave the knot at the solved values
    zeta.t[last] = v;
    zeta.x[last] = x;
    Ok(TipSolve { v, err })
}

/// Recover (v, ζ) of a chain from its trace points in the target annulus
/// or disc, one reverse-shooting solve per point.  `eps[i]` is the seed
/// height matched to point i: the trace offset scaled by the derivative of
/// whatever map carried the point here.
fn zip_chain(
    kind: FlowKind,
    v_start: f64,
    v_cap: f64,
    points: &[Complex64],
    base_dt: f64,
    cfg: &KernelConfig,
    eps: &[f64],
) -> EResult<(KnotPath, Vec<f64>, f64)> {
    let n = points.len();
    let mut zeta = KnotPath::default();
    zeta.push(v_start, points[0].re);
    let mut v_grid = vec![v_start];
    let policy = StepPolicy::with_base(base_dt);
    let mut residual = 0.0f64;
    let mut state: Vec<Complex64> = points.to_vec();
    let mut dv_hint: Option<f64> = None;
    for i in 1..n {
        let v_prev = *zeta.t.last().unwrap();
        let sol =
            solve_tip(kind, state[i], v_prev, v_cap, dv_hint, &mut zeta, &policy, cfg, eps[i])?;
        dv_hint = Some(sol.v - v_prev);
        residual = residual.max(sol.err);
        for z in state.iter_mut().skip(i + 1) {
            match advance_point(kind, z, None, v_prev, sol.v, &zeta, &policy, cfg)? {
                Advance::Reached => {}
                Advance::Swallowed(ts) => {
                    return Err(EnsembleError::DomainViolation(format!(
                        "pending trace point swallowed prematurely at v = {ts:.6}"
                    )))
                }
            }
        }
        v_grid.push(sol.v);
    }
    if residual > 1e-3 {
        return Err(EnsembleError::TipEvaluationUnstable { residual });
    }
    Ok((zeta, v_grid, residual))
}

/// Image chain of the ξ₁-chain in A_{p−t₂} after mapping the ξ₂-chain out.
/// Runs both chains over their full driver spans.
pub fn extract_image_chain(
    p: f64,
    xi1: &DrivingPath,
    xi2: &DrivingPath,
    delta: f64,
    geometry: Geometry,
    cfg: &KernelConfig,
) -> EResult<ImageChain> {
    let t1 = xi1.t_end();
    let t2 = xi2.t_end();
    if !(p > 0.0) || t1 < 0.0 || t2 < 0.0 || t1 + t2 >= p {
        return Err(EnsembleError::BadParameters(format!(
            "need 0 <= t1 + t2 < p, got t1 = {t1}, t2 = {t2}, p = {p}"
        )));
    }
    let (fine, _) = fine_times(t1, 1, delta);
    if t2 <= 1e-14 {
        // Nothing to map out: the image chain is the chain itself.
        let mut zeta = KnotPath::default();
        for &s in &fine {
            zeta.push(s, xi1.xi(s));
        }
        return Ok(ImageChain {
            p_image: p,
            s: fine.clone(),
            v: fine,
            zeta,
            residual: 0.0,
        });
    }
    let trace = compute_trace(
        FlowKind::CoveringAnnulus { p },
        xi1,
        &fine,
        &StepPolicy::for_driving(xi1),
        cfg,
    )?;
    let mut mapped = trace.points;
    let out_kind = geometry.map_out(p);
    let policy = StepPolicy::for_driving(xi2);
    let mut eps = vec![trace_eps(xi1); mapped.len()];
    for (z, e) in mapped.iter_mut().zip(eps.iter_mut()) {
        let mut dz = Complex64::new(1.0, 0.0);
        match advance_point(out_kind, z, Some(&mut dz), 0.0, t2, xi2, &policy, cfg)? {
            Advance::Reached => {}
            Advance::Swallowed(_) => {
                return Err(EnsembleError::DomainViolation(
                    "trace point swallowed while mapping the other chain out".into(),
                ))
            }
        }
        *e *= dz.norm();
    }
    let p_img = p - t2;
    let step = if fine.len() > 1 { fine[1] - fine[0] } else { delta };
    let (zeta, v, residual) = zip_chain(
        FlowKind::CoveringAnnulus { p: p_img },
        0.0,
        p_img - 1e-6,
        &mapped,
        step,
        cfg,
        &eps,
    )?;
    Ok(ImageChain {
        p_image: p_img,
        s: fine,
        v,
        zeta,
        residual,
    })
}

// ---------------------------------------------------------------------------
// ensemble grid

fn real_jet(jet: &BoundaryJet) -> EResult<[f64; 4]> {
    if !jet.alive {
        return Err(EnsembleError::DomainViolation(
            "cross boundary jet was swallowed".into(),
        ));
    }
    if jet.state[1].re <= 0.0 || !jet.state[1].re.is_finite() {
        return Err(EnsembleError::TipEvaluationUnstable {
            residual: jet.state[1].re,
        });
    }
    Ok([
        jet.state[0].re,
        jet.state[1].re,
        jet.state[2].re,
        jet.state[3].re,
    ])
}

struct Pass {
    v: Vec<f64>,
    zeta_at_v: Vec<f64>,
    jets: Vec<[f64; 4]>,
    residual: f64,
}

/// One conditioning pass: zip the self chain into A_{p − t_other} and flow
/// the cross jet based at ξ_other(t_other) along it, reporting at the
/// checkpoint indices of `fine_s`.
#[allow(clippy::too_many_arguments)]
fn run_pass(
    p: f64,
    geometry: Geometry,
    fine_s: &[f64],
    cp_idx: &[usize],
    mapped: &(Vec<Complex64>, Vec<f64>),
    t_other: f64,
    base_other: f64,
    xi_self: &DrivingPath,
    cfg: &KernelConfig,
) -> EResult<Pass> {
    let mut pass = Pass {
        v: Vec::with_capacity(cp_idx.len()),
        zeta_at_v: Vec::with_capacity(cp_idx.len()),
        jets: Vec::with_capacity(cp_idx.len()),
        residual: 0.0,
    };
    if t_other <= 1e-14 {
        // On the axis the image chain is the chain itself: v = s and
        // ζ = ξ exactly, and the cross jet is driven by the original path.
        let kind = geometry.cross_jets(p);
        let mut flow = LoewnerFlow::new(kind, 0.0, &[], &[base_other], cfg.clone());
        let policy = StepPolicy::for_driving(xi_self);
        for &ci in cp_idx {
            let s = fine_s[ci];
            if s > flow.time + 1e-15 {
                flow.run(xi_self, s, &policy)?;
            }
            pass.v.push(s);
            pass.zeta_at_v.push(xi_self.xi(s));
            pass.jets.push(real_jet(&flow.jets[0])?);
        }
        return Ok(pass);
    }
    let p_img = p - t_other;
    let step = if fine_s.len() > 1 {
        fine_s[1] - fine_s[0]
    } else {
        1e-3
    };
    let eps: Vec<f64> = mapped.1.iter().map(|d| trace_eps(xi_self) * d).collect();
    let (zeta, v, residual) = zip_chain(
        FlowKind::CoveringAnnulus { p: p_img },
        0.0,
        p_img - 1e-6,
        &mapped.0,
        step,
        cfg,
        &eps,
    )?;
    pass.residual = residual;
    let kind = geometry.cross_jets(p_img);
    let mut flow = LoewnerFlow::new(kind, 0.0, &[], &[base_other], cfg.clone());
    let policy = StepPolicy::with_base(step);
    for &ci in cp_idx {
        let vv = v[ci];
        if vv > flow.time + 1e-15 {
            flow.run(&zeta, vv, &policy)?;
        }
        pass.v.push(vv);
        pass.zeta_at_v.push(zeta.xi(vv));
        pass.jets.push(real_jet(&flow.jets[0])?);
    }
    Ok(pass)
}

/// Map trace points out through the other chain, snapshotting the state and
/// the accumulated derivative magnitude at each checkpoint time of that
/// chain.
fn map_with_checkpoints(
    kind: FlowKind,
    points: &[Complex64],
    driving: &DrivingPath,
    cps: &[f64],
    cfg: &KernelConfig,
) -> EResult<Vec<(Vec<Complex64>, Vec<f64>)>> {
    let mut out = Vec::with_capacity(cps.len());
    let mut state = points.to_vec();
    let mut derivs = vec![Complex64::new(1.0, 0.0); points.len()];
    let mut t_cur = 0.0;
    let policy = StepPolicy::for_driving(driving);
    for &tc in cps {
        if tc > t_cur + 1e-15 {
            for (z, dz) in state.iter_mut().zip(derivs.iter_mut()) {
                match advance_point(kind, z, Some(dz), t_cur, tc, driving, &policy, cfg)? {
                    Advance::Reached => {}
                    Advance::Swallowed(_) => {
                        return Err(EnsembleError::DomainViolation(
                            "trace point swallowed while mapping the other chain out".into(),
                        ))
                    }
                }
            }
            t_cur = tc;
        }
        out.push((state.clone(), derivs.iter().map(|d| d.norm()).collect()));
    }
    Ok(out)
}

/// All two-time quantities on a (g₁+1) × (g₂+1) grid of time pairs
/// (s1[i], s2[j]); index order is always [i][j].
#[derive(Clone, Debug)]
pub struct EnsembleGrid {
    pub p: f64,
    pub geometry: Geometry,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    /// v_{1,t₂}(t₁): image capacity of chain 1 after mapping out t₂.
    pub v1: Vec<Vec<f64>>,
    pub v2: Vec<Vec<f64>>,
    /// Common modulus m(t₁, t₂) = p − t₂ − v₁.
    pub m: Vec<Vec<f64>>,
    /// Largest |m from chain-1 passes − m from chain-2 passes|.
    pub m_mismatch: f64,
    pub x1: Vec<Vec<f64>>,
    pub x2: Vec<Vec<f64>>,
    /// Cross jets [A_{j,0}, A_{j,1}, A_{j,2}, A_{j,3}] of chain j.
    pub a1: Vec<Vec<[f64; 4]>>,
    pub a2: Vec<Vec<[f64; 4]>>,
    /// Q = K‴(m, X₁) for the geometry's cross kernel (H_I crossing, H
    /// chordal-type).
    pub q: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Build the full grid by conditioning each chain on the checkpoints of the
/// other.  `g1`, `g2` are the number of grid segments per side.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_grid(
    p: f64,
    xi1: &DrivingPath,
    xi2: &DrivingPath,
    g1: usize,
    g2: usize,
    delta: f64,
    geometry: Geometry,
    cfg: &KernelConfig,
) -> EResult<EnsembleGrid> {
    let t1 = xi1.t_end();
    let t2 = xi2.t_end();
    if !(p > 0.0) || t1 < 0.0 || t2 < 0.0 || t1 + t2 >= p {
        return Err(EnsembleError::BadParameters(format!(
            "need 0 <= t1 + t2 < p, got t1 = {t1}, t2 = {t2}, p = {p}"
        )));
    }
    let (f1, cp1) = fine_times(t1, g1, delta);
    let (f2, cp2) = fine_times(t2, g2, delta);
    let s1: Vec<f64> = cp1.iter().map(|&i| f1[i]).collect();
    let s2: Vec<f64> = cp2.iter().map(|&i| f2[i]).collect();
    let (n1, n2) = (s1.len(), s2.len());

    let trace_of = |xi: &DrivingPath, fine: &[f64], t: f64| -> EResult<Vec<Complex64>> {
        if t <= 1e-14 {
            return Ok(vec![Complex64::new(xi.xi(0.0), 0.0)]);
        }
        Ok(compute_trace(
            FlowKind::CoveringAnnulus { p },
            xi,
            fine,
            &StepPolicy::for_driving(xi),
            cfg,
        )?
        .points)
    };
    let tr1 = trace_of(xi1, &f1, t1)?;
    let tr2 = trace_of(xi2, &f2, t2)?;
    let mapped1 = map_with_checkpoints(geometry.map_out(p), &tr1, xi2, &s2, cfg)?;
    let mapped2 = map_with_checkpoints(geometry.map_out(p), &tr2, xi1, &s1, cfg)?;

    let mut grid = EnsembleGrid {
        p,
        geometry,
        s1: s1.clone(),
        s2: s2.clone(),
        v1: vec![vec![0.0; n2]; n1],
        v2: vec![vec![0.0; n2]; n1],
        m: vec![vec![0.0; n2]; n1],
        m_mismatch: 0.0,
        x1: vec![vec![0.0; n2]; n1],
        x2: vec![vec![0.0; n2]; n1],
        a1: vec![vec![[0.0; 4]; n2]; n1],
        a2: vec![vec![[0.0; 4]; n2]; n1],
        q: vec![vec![0.0; n2]; n1],
        residual: 0.0,
    };

    for j in 0..n2 {
        let pass = run_pass(
            p,
            geometry,
            &f1,
            &cp1,
            &mapped1[j],
            s2[j],
            xi2.xi(s2[j]),
            xi1,
            cfg,
        )?;
        grid.residual = grid.residual.max(pass.residual);
        for i in 0..n1 {
            grid.v1[i][j] = pass.v[i];
            grid.m[i][j] = p - s2[j] - pass.v[i];
            grid.a2[i][j] = pass.jets[i];
            grid.x1[i][j] = pass.zeta_at_v[i] - pass.jets[i][0];
        }
    }
    for i in 0..n1 {
        let pass = run_pass(
            p,
            geometry,
            &f2,
            &cp2,
            &mapped2[i],
            s1[i],
            xi1.xi(s1[i]),
            xi2,
            cfg,
        )?;
        grid.residual = grid.residual.max(pass.residual);
        for j in 0..n2 {
            grid.v2[i][j] = pass.v[j];
            grid.a1[i][j] = pass.jets[j];
            grid.x2[i][j] = pass.zeta_at_v[j] - pass.jets[j][0];
            let other_m = p - s1[i] - pass.v[j];
            grid.m_mismatch = grid.m_mismatch.max((grid.m[i][j] - other_m).abs());
        }
    }
    for i in 0..n1 {
        for j in 0..n2 {
            let m = grid.m[i][j];
            if m <= 0.0 {
                return Err(EnsembleError::DomainViolation(format!(
                    "modulus exhausted at grid node ({i}, {j})"
                )));
            }
            // Q is the third derivative of the kernel that drives the cross
            // jets: H_I when the chains face each other across the annulus,
            // H when they share a boundary circle.
            let hk = match geometry {
                Geometry::Crossing => HKind::HI,
                Geometry::ChordalType => HKind::H,
            };
            grid.q[i][j] = h_jet(hk, m, Complex64::new(grid.x1[i][j], 0.0), cfg)?
                .deriv(3)
                .re;
        }
    }
    Ok(grid)
}

fn trapezoid_weights(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|k| {
            let a = if k == 0 { s[0] } else { s[k - 1] };
            let b = if k == n - 1 { s[n - 1] } else { s[k + 1] };
            0.5 * (b - a)
        })
        .collect()
}

impl EnsembleGrid {
    /// ln F = ∬ A₁,₁² A₂,₁² H_I‴(m, X₁) dt₁ dt₂ over [0,t₁] × [0,t₂].
    pub fn ln_f(&self) -> f64 {
        if self.s1.len() < 2 || self.s2.len() < 2 {
            return 0.0;
        }
        let w1 = trapezoid_weights(&self.s1);
        let w2 = trapezoid_weights(&self.s2);
        let mut acc = 0.0;
        for i in 0..self.s1.len() {
            for j in 0..self.s2.len() {
                let integrand =
                    self.a1[i][j][1].powi(2) * self.a2[i][j][1].powi(2) * self.q[i][j];
                acc += w1[i] * w2[j] * integrand;
            }
        }
        acc
    }

    pub fn schwarzian(jet: &[f64; 4]) -> f64 {
        let r = jet[2] / jet[1];
        jet[3] / jet[1] - 1.5 * r * r
    }

    /// Corner record (t₁, t₂) together with the axis data needed for the
    /// cross-normalisation of M.
    pub fn record(&self, gamma: &dyn GammaEval) -> EResult<EnsembleRecord> {
        let i = self.s1.len() - 1;
        let j = self.s2.len() - 1;
        let a1 = &self.a1[i][j];
        let a2 = &self.a2[i][j];
        let kappa = gamma.kappa();
        let m = self.m[i][j];
        let x1 = self.x1[i][j];
        Ok(EnsembleRecord {
            t1: self.s1[i],
            t2: self.s2[j],
            m,
            x1,
            x2: self.x2[i][j],
            a: [[a1[1], a1[2], a1[3]], [a2[1], a2[2], a2[3]]],
            a_s: [Self::schwarzian(a1), Self::schwarzian(a2)],
            q: self.q[i][j],
            ln_f: self.ln_f(),
            y: gamma.gamma(m, x1)?,
            ln_m: 0.0,
            alpha: (6.0 - kappa) / (2.0 * kappa),
            c: (8.0 - 3.0 * kappa) * (kappa - 6.0) / (2.0 * kappa),
            p: self.p,
            axis: AxisData {
                a21_t1: self.a2[i][0][1],
                x1_t1: self.x1[i][0],
                a11_t2: self.a1[0][j][1],
                x1_t2: self.x1[0][j],
                x_corner: self.x1[0][0],
            },
        })
    }
}

/// F = exp ∬ A₁,₁² A₂,₁² H_I‴(m, X₁).
pub fn compute_f(grid: &EnsembleGrid) -> f64 {
    grid.ln_f().exp()
}

/// U_j = A_{j,1} Λ_j(m, X_j) + 3 A_{j,2} / A_{j,1}; for commuting κ = 0
/// pairs this is constant in the other chain's time.
pub fn u_observable(jet: &[f64; 4], l: &DriftFunction, m: f64, x: f64) -> EResult<f64> {
    Ok(jet[1] * l.eval(m, x)? + 3.0 * jet[2] / jet[1])
}

// ---------------------------------------------------------------------------
// records and the martingale observable

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct AxisData {
    /// A_{2,1}(t₁, 0)
    pub a21_t1: f64,
    /// X₁(t₁, 0)
    pub x1_t1: f64,
    /// A_{1,1}(0, t₂)
    pub a11_t2: f64,
    /// X₁(0, t₂)
    pub x1_t2: f64,
    /// X₁(0, 0) = x₁ − x₂
    pub x_corner: f64,
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EnsembleRecord {
    pub t1: f64,
    pub t2: f64,
    pub m: f64,
    pub x1: f64,
    pub x2: f64,
    /// [A_{j,1}, A_{j,2}, A_{j,3}] for j = 1, 2.
    pub a: [[f64; 3]; 2],
    /// Boundary Schwarzians A_{j,S}.
    pub a_s: [f64; 2],
    pub q: f64,
    pub ln_f: f64,
    /// Y = Γ₁(m, X₁).
    pub y: f64,
    pub ln_m: f64,
    pub alpha: f64,
    pub c: f64,
    pub p: f64,
    pub axis: AxisData,
}

/// Evaluation backend for Γ and R; the tabulated variant amortises the
/// normaliser integrals over a Monte Carlo run.
pub trait GammaEval: Sync {
    fn gamma(&self, p: f64, x: f64) -> EResult<f64>;
    fn big_r(&self, p: f64) -> EResult<f64>;
    fn kappa(&self) -> f64;
}

pub struct ExactGamma<'a> {
    pub gamma: &'a GammaFunction,
    pub cfg: &'a KernelConfig,
}

impl GammaEval for ExactGamma<'_> {
    fn gamma(&self, p: f64, x: f64) -> EResult<f64> {
        Ok(self.gamma.eval(p, x)?)
    }

    fn big_r(&self, p: f64) -> EResult<f64> {
        Ok(kernels::eval_big_r(p, self.cfg)?)
    }

    fn kappa(&self) -> f64 {
        self.gamma.kappa()
    }
}

struct Table {
    lo: f64,
    hi: f64,
    vals: Vec<f64>,
}

impl Table {
    fn at(&self, x: f64) -> Option<f64> {
        if x < self.lo - 1e-12 || x > self.hi + 1e-12 {
            return None;
        }
        let n = self.vals.len() - 1;
        let s = ((x - self.lo) / (self.hi - self.lo) * n as f64).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let frac = s - k as f64;
        Some(self.vals[k] * (1.0 - frac) + self.vals[k + 1] * frac)
    }
}

/// Γ and R with the p-dependence pre-integrated on [p_lo, p_hi].  Queries
/// outside the table fall back to the exact evaluation.
pub struct TabulatedGamma<'a> {
    gamma: &'a GammaFunction,
    cfg: KernelConfig,
    ln_norm: Table,
    big_r: Table,
}

impl<'a> TabulatedGamma<'a> {
    pub fn build(
        gamma: &'a GammaFunction,
        p_lo: f64,
        p_hi: f64,
        nodes: usize,
        cfg: &KernelConfig,
    ) -> EResult<TabulatedGamma<'a>> {
        if !(p_lo > 0.0) || p_hi <= p_lo || nodes < 3 {
            return Err(EnsembleError::BadParameters(
                "tabulation needs 0 < p_lo < p_hi and at least 3 nodes".into(),
            ));
        }
        let kappa = gamma.kappa();
        let h = (p_hi - p_lo) / (nodes - 1) as f64;
        // ∫₁^p C(s) ds accumulated node to node by Simpson's rule.
        let mut c_int = Vec::with_capacity(nodes);
        let base: f64 = adaptive_simpson(&|s| gamma.normalizer(s), 1.0, p_lo, 1e-9)?;
        c_int.push(base);
        let mut c_left = gamma.normalizer(p_lo)?;
        for k in 1..nodes {
            let a = p_lo + (k - 1) as f64 * h;
            let c_mid = gamma.normalizer(a + 0.5 * h)?;
            let c_right = gamma.normalizer(a + h)?;
            let piece = h / 6.0 * (c_left + 4.0 * c_mid + c_right);
            c_int.push(c_int[k - 1] + piece);
            c_left = c_right;
        }
        let ln_norm = Table {
            lo: p_lo,
            hi: p_hi,
            vals: c_int.iter().map(|&v| -v / kappa).collect(),
        };
        let mut r_vals = Vec::with_capacity(nodes);
        for k in 0..nodes {
            r_vals.push(kernels::eval_big_r(p_lo + k as f64 * h, cfg)?);
        }
        let big_r = Table {
            lo: p_lo,
            hi: p_hi,
            vals: r_vals,
        };
        Ok(TabulatedGamma {
            gamma,
            cfg: cfg.clone(),
            ln_norm,
            big_r,
        })
    }
}

impl GammaEval for TabulatedGamma<'_> {
    fn gamma(&self, p: f64, x: f64) -> EResult<f64> {
        match self.ln_norm.at(p) {
            Some(ln_n) => Ok(self.gamma.gamma_hat(p, x)? * ln_n.exp()),
            None => Ok(self.gamma.eval(p, x)?),
        }
    }

    fn big_r(&self, p: f64) -> EResult<f64> {
        match self.big_r.at(p) {
            Some(v) => Ok(v),
            None => Ok(kernels::eval_big_r(p, &self.cfg)?),
        }
    }

    fn kappa(&self) -> f64 {
        self.gamma.kappa()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleMode {
    /// Two chains in A_p with the four-term R normalisation and the division
    /// by the two axis marginals.
    Annulus,
    /// Two-sided whole-plane pair: ĤM with exp(α R(m)) alone.
    WholePlane,
}

/// The coupling observable M(t₁, t₂), normalised so that M ≡ 1 on both
/// axes in annulus mode.
pub fn compute_m(
    record: &EnsembleRecord,
    f: f64,
    mode: EnsembleMode,
    gamma: &dyn GammaEval,
) -> EResult<f64> {
    let alpha = record.alpha;
    let a11 = record.a[0][0];
    let a21 = record.a[1][0];
    if a11 <= 0.0 || a21 <= 0.0 || f <= 0.0 {
        return Err(EnsembleError::TipEvaluationUnstable {
            residual: a11.min(a21).min(f),
        });
    }
    let core = a11.powf(alpha) * a21.powf(alpha) * f.powf(-record.c / 6.0) * record.y;
    match mode {
        EnsembleMode::WholePlane => Ok(core * (alpha * gamma.big_r(record.m)?).exp()),
        EnsembleMode::Annulus => {
            let p = record.p;
            let r_term = alpha
                * (gamma.big_r(record.m)? - gamma.big_r(p - record.t1)?
                    - gamma.big_r(p - record.t2)?
                    + gamma.big_r(p)?);
            let hm = core * r_term.exp();
            let hm00 = gamma.gamma(p, record.axis.x_corner)?;
            let hm10 = record.axis.a21_t1.powf(alpha) * gamma.gamma(p - record.t1, record.axis.x1_t1)?;
            let hm01 = record.axis.a11_t2.powf(alpha) * gamma.gamma(p - record.t2, record.axis.x1_t2)?;
            Ok(hm * hm00 / (hm10 * hm01))
        }
    }
}

/// Full corner record including ln M for one pair of driving paths.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_quantities(
    p: f64,
    xi1: &DrivingPath,
    xi2: &DrivingPath,
    g1: usize,
    g2: usize,
    delta: f64,
    geometry: Geometry,
    gamma: &GammaFunction,
    mode: EnsembleMode,
    cfg: &KernelConfig,
) -> EResult<EnsembleRecord> {
    let grid = ensemble_grid(p, xi1, xi2, g1, g2, delta, geometry, cfg)?;
    let eval = ExactGamma { gamma, cfg };
    let mut rec = grid.record(&eval)?;
    let m = compute_m(&rec, rec.ln_f.exp(), mode, &eval)?;
    rec.ln_m = m.ln();
    Ok(rec)
}

// ---------------------------------------------------------------------------
// Monte Carlo martingale check

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct MartingaleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_used: usize,
    pub rejected: usize,
}

fn is_rejection(e: &EnsembleError) -> bool {
    matches!(
        e,
        EnsembleError::DomainViolation(_)
            | EnsembleError::TipEvaluationUnstable { .. }
            | EnsembleError::Loewner(
                LoewnerError::StepUnderflow { .. }
                    | LoewnerError::ReverseBlowup(_)
                    | LoewnerError::Swallowed(_)
                    | LoewnerError::ModulusExhausted { .. }
            )
            | EnsembleError::Sde(SdeError::DriftPole { .. })
    )
}

/// Sample E[M(t₁, t₂)] over independent pairs of annulus SLE(κ, Λ) drivers.
/// Pair i uses RNG streams 2i and 2i+1 of `seed`.  For the coupling to hold
/// the second chain must run the dual drift from (x₂, x₁).
#[allow(clippy::too_many_arguments)]
pub fn martingale_estimate(
    kappa: f64,
    l: &DriftFunction,
    p: f64,
    x1: f64,
    x2: f64,
    t1: f64,
    t2: f64,
    n: usize,
    dt: f64,
    delta: f64,
    grid: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> EResult<MartingaleEstimate> {
    let geometry = Geometry::from_kind(l.kind)?;
    if geometry != Geometry::Crossing {
        return Err(EnsembleError::BadParameters(
            "the martingale check is formulated for crossing drifts".into(),
        ));
    }
    if n < 2 {
        return Err(EnsembleError::BadParameters("need at least 2 samples".into()));
    }
    let l2 = dual(l);
    let gamma = gamma_from_lambda(l, kappa, &[], &[])?;
    let p_lo = (p - t1 - t2 - 1.0).max(0.05_f64.min(0.5 * (p - t1 - t2)));
    let tab = TabulatedGamma::build(&gamma, p_lo, p, 97, cfg)?;

    let samples: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> EResult<Option<f64>> {
            let pair = i as u64;
            let run = |drift: &DriftFunction, a: f64, b: f64, t: f64, stream: u64| {
                drive_annulus_sle(
                    kappa,
                    drift,
                    DriftKind::Crossing,
                    p,
                    a,
                    b,
                    t,
                    dt,
                    seed,
                    stream,
                )
            };
            let run1 = match run(l, x1, x2, t1, 2 * pair) {
                Ok(r) => r,
                Err(SdeError::DriftPole { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            let run2 = match run(&l2, x2, x1, t2, 2 * pair + 1) {
                Ok(r) => r,
                Err(SdeError::DriftPole { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            if run1.collided || run2.collided {
                return Ok(None);
            }
            let value = (|| -> EResult<f64> {
                let g = ensemble_grid(p, &run1.xi, &run2.xi, grid, grid, delta, geometry, cfg)?;
                let rec = g.record(&tab)?;
                compute_m(&rec, rec.ln_f.exp(), EnsembleMode::Annulus, &tab)
            })();
            match value {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                Ok(_) => Ok(None),
                Err(e) if is_rejection(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<EResult<Vec<_>>>()?;

    let used: Vec<f64> = samples.iter().filter_map(|&v| v).collect();
    let rejected = n - used.len();
    if rejected * 5 > n || used.len() < 2 {
        return Err(EnsembleError::ExcessiveRejection { rejected, total: n });
    }
    let mean = used.iter().sum::<f64>() / used.len() as f64;
    let var =
        used.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (used.len() - 1) as f64;
    Ok(MartingaleEstimate {
        mean,
        stderr: (var / used.len() as f64).sqrt(),
        n_used: used.len(),
        rejected,
    })
}

// ---------------------------------------------------------------------------
// κ = 0 commutation check

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct CommutationReport {
    /// Sup over interior probes of |composition in one order − the other|,
    /// after factoring out the rotation of the target annulus.  The
    /// composed maps are canonical only up to that rotation: growing the
    /// hulls in the two orders yields uniformizations that differ by a
    /// deterministic angle (the infinitesimal commutator of two kernel
    /// flows is a z-independent real constant), so the invariant statement
    /// of commutation is agreement modulo rotation plus constancy of U.
    pub sup_diff: f64,
    /// The rotation angle separating the two composed uniformizations.
    pub rotation: f64,
    /// Largest drift of U_j away from its value on the t_k = 0 axis.
    pub max_u_drift: f64,
    /// Largest zipper residual encountered.
    pub residual: f64,
    /// Final common modulus m(t₁, t₂).
    pub m: f64,
}

/// Deterministic κ = 0 flow-line commutation: grow the two hulls in both
/// orders and compare the composed covering maps on interior probes, and
/// check that U_j = A_{j,1} Λ_j(m, X_j) + 3 A_{j,2}/A_{j,1} stays constant
/// in the other time.
#[allow(clippy::too_many_arguments)]
pub fn kappa0_commutation_check(
    l: &DriftFunction,
    p: f64,
    x1: f64,
    x2: f64,
    t1: f64,
    t2: f64,
    delta: f64,
    cfg: &KernelConfig,
) -> EResult<CommutationReport> {
    let geometry = Geometry::from_kind(l.kind)?;
    if t1 <= 1e-14 || t2 <= 1e-14 {
        return Ok(CommutationReport {
            sup_diff: 0.0,
            rotation: 0.0,
            max_u_drift: 0.0,
            residual: 0.0,
            m: p - t1 - t2,
        });
    }
    let l2 = dual(l);
    let run1 = drive_annulus_sle(0.0, l, l.kind, p, x1, x2, t1, delta, 0, 0)?;
    let run2 = drive_annulus_sle(0.0, &l2, l.kind, p, x2, x1, t2, delta, 0, 1)?;
    if run1.collided || run2.collided {
        return Err(EnsembleError::DomainViolation(
            "kappa = 0 flow lines collided before the requested times".into(),
        ));
    }
    let g = 8usize;
    let grid = ensemble_grid(p, &run1.xi, &run2.xi, g, g, delta, geometry, cfg)?;
    let mut max_u = 0.0f64;
    for i in 0..grid.s1.len() {
        for j in 0..grid.s2.len() {
            let u1 = u_observable(&grid.a1[i][j], l, grid.m[i][j], grid.x1[i][j])?;
            let u1_axis = u_observable(&grid.a1[i][0], l, grid.m[i][0], grid.x1[i][0])?;
            let u2 = u_observable(&grid.a2[i][j], &l2, grid.m[i][j], grid.x2[i][j])?;
            let u2_axis = u_observable(&grid.a2[0][j], &l2, grid.m[0][j], grid.x2[0][j])?;
            max_u = max_u.max((u1 - u1_axis).abs()).max((u2 - u2_axis).abs());
        }
    }

    let chain1_given_t2 = extract_image_chain(p, &run1.xi, &run2.xi, delta, geometry, cfg)?;
    let chain2_given_t1 = extract_image_chain(p, &run2.xi, &run1.xi, delta, geometry, cfg)?;
    let residual = grid
        .residual
        .max(chain1_given_t2.residual)
        .max(chain2_given_t1.residual);

    let probes: Vec<Complex64> = (0..50)
        .map(|k| Complex64::new(2.0 * PI * k as f64 / 50.0, 0.5 * p))
        .collect();
    let mut offsets = Vec::with_capacity(probes.len());
    for &w0 in &probes {
        // Order A: chain 1 first, then the image of chain 2 given t1.
        let mut wa = w0;
        step_probe(
            FlowKind::CoveringAnnulus { p },
            &mut wa,
            0.0,
            t1,
            &run1.xi,
            cfg,
        )?;
        step_probe(
            geometry.cross_jets(p - t1),
            &mut wa,
            0.0,
            *chain2_given_t1.v.last().unwrap(),
            &chain2_given_t1.zeta,
            cfg,
        )?;
        // Order B: chain 2 first, then the image of chain 1 given t2.
        let mut wb = w0;
        step_probe(geometry.map_out(p), &mut wb, 0.0, t2, &run2.xi, cfg)?;
        step_probe(
            FlowKind::CoveringAnnulus { p: p - t2 },
            &mut wb,
            0.0,
            *chain1_given_t2.v.last().unwrap(),
            &chain1_given_t2.zeta,
            cfg,
        )?;
        offsets.push(wa - wb);
    }
    let rotation = offsets.iter().map(|o| o.re).sum::<f64>() / offsets.len() as f64;
    let sup = offsets
        .iter()
        .map(|o| (o - rotation).norm())
        .fold(0.0f64, f64::max);
    let (i, j) = (grid.s1.len() - 1, grid.s2.len() - 1);
    Ok(CommutationReport {
        sup_diff: sup,
        rotation,
        max_u_drift: max_u,
        residual,
        m: grid.m[i][j],
    })
}

fn step_probe<D: Driving>(
    kind: FlowKind,
    z: &mut Complex64,
    from: f64,
    to: f64,
    driving: &D,
    cfg: &KernelConfig,
) -> EResult<()> {
    let policy = StepPolicy::for_driving(driving);
    match advance_point(kind, z, None, from, to, driving, &policy, cfg)? {
        Advance::Reached => Ok(()),
        Advance::Swallowed(_) => Err(EnsembleError::DomainViolation(
            "interior probe swallowed while composing the hulls".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// whole-plane two-sided modulus

/// Modulus of Ĉ ∖ K_{I,1}(t₁) ∖ K₂(t₂) for a two-sided whole-plane pair:
/// chain 1 grows from 0 (driven by ξ₁ from its start time), chain 2 is the
/// inversion of the ξ₂-chain and grows from ∞.  The answer converges as the
/// common start time goes to −∞.
pub fn whole_plane_modulus(
    xi1: &DrivingPath,
    xi2: &DrivingPath,
    t1: f64,
    t2: f64,
    delta: f64,
    cfg: &KernelConfig,
) -> EResult<f64> {
    let s0 = xi1.t0();
    if t1 > xi1.t_end() + 1e-12 || t2 > xi2.t_end() + 1e-12 {
        return Err(EnsembleError::BadParameters(
            "driving paths do not cover the requested times".into(),
        ));
    }
    if t1 <= s0 + 1e-12 {
        return Err(EnsembleError::BadParameters(
            "t1 must exceed the start time of xi1".into(),
        ));
    }
    let n = (((t1 - s0) / delta).ceil() as usize).max(2);
    let s: Vec<f64> = (0..=n)
        .map(|k| s0 + (t1 - s0) * k as f64 / n as f64)
        .collect();
    let trace = compute_trace(
        FlowKind::CoveringWholePlane,
        xi1,
        &s,
        &StepPolicy::for_driving(xi1),
        cfg,
    )?;
    // Plane covering coordinates of the trace (state carries a +i·t0 shift).
    let omega: Vec<Complex64> = trace
        .points
        .iter()
        .map(|w| w - Complex64::new(0.0, s0))
        .collect();
    // g̃₂(t₂, ·) = conj ∘ (whole-plane flow of ξ₂) ∘ conj maps the second
    // hull out; the image lands in the covering of the unit disc.
    let seeds: Vec<Complex64> = omega.iter().map(|z| z.conj()).collect();
    let mut flow = LoewnerFlow::new(
        FlowKind::CoveringWholePlane,
        xi2.t0(),
        &seeds,
        &[],
        cfg.clone(),
    );
    flow.run(xi2, t2, &StepPolicy::for_driving(xi2))?;
    let mut mapped = Vec::with_capacity(omega.len());
    let mut eps = Vec::with_capacity(omega.len());
    for tp in &flow.tracked {
        if !tp.alive {
            return Err(EnsembleError::DomainViolation(
                "the two hulls intersect".into(),
            ));
        }
        mapped.push(tp.z.conj());
        eps.push(trace_eps(xi1) * tp.deriv.norm());
    }
    // Disc zipper: the image of chain 1 is an interior chain of D whose
    // capacity starts at s0 + t2 (|g₂′(0)| = e^{t₂}); the leftover modulus
    // is −v(t₁).
    let v_start = s0 + t2;
    let step = s[1] - s[0];
    let (_, v, _) = zip_chain(FlowKind::CoveringDisc, v_start, -1e-6, &mapped, step, cfg, &eps)?;
    Ok(-v.last().unwrap())
}

// ---------------------------------------------------------------------------
