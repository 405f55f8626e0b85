//! Loewner evolutions: radial, whole-plane, annulus, disc and strip, with
//! covering and inverted variants.
//!
//! Every flow integrates tracked points (in circle or covering coordinates,
//! depending on the variant) and boundary derivative jets (always in
//! covering coordinates) with adaptive RK4.  The step size near the moving
//! singularity scales like the squared distance to it, because the field
//! blows up like 2/distance there.

use crate::jet::{cot2_affine, coth2, Jet};
use crate::kernels::{
    self, h_pole_distance, s_pole_distance, HKind, KernelConfig, KernelError, SKind,
};
use num_complex::Complex64;
use std::f64::consts::PI;

// ---------------------------------------------------------------------------
// driving paths

/// Anything that can steer a Loewner equation: a value ξ(t), a span, and a
/// grid structure so the integrator can avoid stepping across kinks of the
/// (piecewise-linear) interpolation.
pub trait Driving {
    fn xi(&self, t: f64) -> f64;
    fn t0(&self) -> f64;
    fn t_end(&self) -> f64;
    /// Natural resolution of the path (used for the trace tip offset).
    fn grid_dt(&self) -> f64;
    /// Smallest grid time strictly greater than `t`.
    fn next_break(&self, t: f64) -> f64;
    /// Largest grid time strictly smaller than `t`.
    fn prev_break(&self, t: f64) -> f64;
}

/// Uniform-grid driving function; the ξ of every flow in this crate.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct DrivingPath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub kappa: f64,
    pub seed: u64,
}

impl DrivingPath {
    pub fn constant(x: f64, t0: f64, t_end: f64, dt: f64) -> DrivingPath {
        let n = (((t_end - t0) / dt).ceil() as usize).max(1);
        DrivingPath {
            t0,
            dt,
            values: vec![x; n + 1],
            kappa: 0.0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + self.dt * index as f64
    }
}

impl Driving for DrivingPath {
    fn xi(&self, t: f64) -> f64 {
        let s = (t - self.t0) / self.dt;
        if s <= 0.0 {
            return self.values[0];
        }
        let n = self.values.len() - 1;
        if s >= n as f64 {
            return self.values[n];
        }
        let k = s.floor() as usize;
        let frac = s - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    fn t0(&self) -> f64 {
        self.t0
    }

    fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.values.len() - 1) as f64
    }

    fn grid_dt(&self) -> f64 {
        self.dt
    }

    fn next_break(&self, t: f64) -> f64 {
        let s = (t - self.t0) / self.dt;
        let k = (s + 1e-9).floor() + 1.0;
        self.t0 + self.dt * k
    }

    fn prev_break(&self, t: f64) -> f64 {
        let s = (t - self.t0) / self.dt;
        let k = (s - 1e-9).ceil() - 1.0;
        self.t0 + self.dt * k
    }
}

/// Piecewise-linear driving on non-uniform knots (capacity-parametrized
/// image-chain drivers ζ live here).  Constant extrapolation beyond the
/// ends.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct KnotPath {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl KnotPath {
    pub fn push(&mut self, t: f64, x: f64) {
        debug_assert!(self.t.last().map_or(true, |&last| t >= last));
        self.t.push(t);
        self.x.push(x);
    }
}

impl Driving for KnotPath {
    fn xi(&self, t: f64) -> f64 {
        match self.t.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => self.x[i],
            Err(0) => self.x[0],
            Err(i) if i == self.t.len() => self.x[i - 1],
            Err(i) => {
                let (t0, t1) = (self.t[i - 1], self.t[i]);
                let frac = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                self.x[i - 1] * (1.0 - frac) + self.x[i] * frac
            }
        }
    }

    fn t0(&self) -> f64 {
        *self.t.first().unwrap_or(&0.0)
    }

    fn t_end(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    fn grid_dt(&self) -> f64 {
        if self.t.len() < 2 {
            return 1e-3;
        }
        (self.t_end() - self.t0()) / (self.t.len() - 1) as f64
    }

    fn next_break(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|&k| k <= t + 1e-12);
        if i >= self.t.len() {
            f64::INFINITY
        } else {
            self.t[i]
        }
    }

    fn prev_break(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|&k| k < t - 1e-12);
        if i == 0 {
            f64::NEG_INFINITY
        } else {
            self.t[i - 1]
        }
    }
}

// ---------------------------------------------------------------------------
// flow kinds

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowKind {
    Radial,
    CoveringRadial,
    Annulus { p: f64 },
    CoveringAnnulus { p: f64 },
    InvertedAnnulus { p: f64 },
    InvertedCoveringAnnulus { p: f64 },
    WholePlane,
    CoveringWholePlane,
    InvertedWholePlane,
    Disc,
    CoveringDisc,
    InvertedCoveringDisc,
    Strip,
}

impl FlowKind {
    pub fn modulus(&self) -> Option<f64> {
        match self {
            FlowKind::Annulus { p }
            | FlowKind::CoveringAnnulus { p }
            | FlowKind::InvertedAnnulus { p }
            | FlowKind::InvertedCoveringAnnulus { p } => Some(*p),
            _ => None,
        }
    }

    /// Does this variant evolve in the covering (strip) coordinate?
    pub fn is_covering(&self) -> bool {
        matches!(
            self,
            FlowKind::CoveringRadial
                | FlowKind::CoveringAnnulus { .. }
                | FlowKind::InvertedCoveringAnnulus { .. }
                | FlowKind::CoveringWholePlane
                | FlowKind::CoveringDisc
                | FlowKind::InvertedCoveringDisc
                | FlowKind::Strip
        )
    }

    /// The covering-coordinate analog used for jets and traces.
    pub fn covering_analog(&self) -> FlowKind {
        match *self {
            FlowKind::Radial => FlowKind::CoveringRadial,
            FlowKind::Annulus { p } => FlowKind::CoveringAnnulus { p },
            FlowKind::InvertedAnnulus { p } => FlowKind::InvertedCoveringAnnulus { p },
            FlowKind::WholePlane | FlowKind::InvertedWholePlane => FlowKind::CoveringWholePlane,
            FlowKind::Disc => FlowKind::CoveringDisc,
            k => k,
        }
    }

    /// Effective modulus argument handed to the kernel at absolute time t.
    fn kernel_modulus(&self, t: f64) -> f64 {
        match self {
            FlowKind::Annulus { p }
            | FlowKind::CoveringAnnulus { p }
            | FlowKind::InvertedAnnulus { p }
            | FlowKind::InvertedCoveringAnnulus { p } => p - t,
            FlowKind::Disc | FlowKind::CoveringDisc | FlowKind::InvertedCoveringDisc => -t,
            _ => f64::INFINITY,
        }
    }

    /// Initial map value for a seed, honoring the t → −∞ asymptotics of the
    /// whole-plane and disc equations at a finite start time t0.
    pub fn initial_value(&self, z: Complex64, t0: f64) -> Complex64 {
        match self {
            FlowKind::WholePlane => z * (-t0).exp(),
            FlowKind::InvertedWholePlane => z * t0.exp(),
            FlowKind::CoveringWholePlane => z + Complex64::new(0.0, t0),
            FlowKind::InvertedCoveringDisc => z - Complex64::new(0.0, t0),
            _ => z,
        }
    }

    /// Initial covering-map value for a jet base (real boundary point).
    fn initial_jet_value(&self, base: f64, t0: f64) -> Complex64 {
        match self {
            FlowKind::WholePlane | FlowKind::CoveringWholePlane => {
                Complex64::new(base, t0)
            }
            FlowKind::InvertedWholePlane => Complex64::new(base, -t0),
            FlowKind::InvertedCoveringDisc => Complex64::new(base, -t0),
            _ => Complex64::new(base, 0.0),
        }
    }
}

// ---------------------------------------------------------------------------
// errors and stepping policy

#[derive(thiserror::Error, Debug, Clone)]
pub enum LoewnerError {
    #[error("adaptive step underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("evolution to t = {t} exhausts the modulus {p}")]
    ModulusExhausted { t: f64, p: f64 },
    #[error("boundary jet at base {0} was swallowed")]
    Swallowed(f64),
    #[error("no boundary jet registered at base {0}")]
    NoSuchJet(f64),
    #[error("reverse flow left the domain near t = {0}")]
    ReverseBlowup(f64),
    #[error("driving path does not cover time {0}")]
    DrivingTooShort(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type LResult<T> = Result<T, LoewnerError>;

/// Adaptive stepping parameters.
#[derive(Clone, Copy, Debug)]
pub struct StepPolicy {
    /// Cap on the step away from the singularity (usually the driving dt).
    pub base_dt: f64,
    /// Step ≤ cfl · distance² near the singularity.
    pub cfl: f64,
    /// Below this step size a point counts as swallowed.
    pub min_dt: f64,
    /// Distance to the singularity at which a point is swallowed.
    pub swallow_eps: f64,
}

impl StepPolicy {
    pub fn with_base(base_dt: f64) -> StepPolicy {
        StepPolicy {
            base_dt,
            cfl: 0.2,
            min_dt: 1e-14,
            swallow_eps: 1e-6,
        }
    }

    pub fn for_driving<D: Driving>(d: &D) -> StepPolicy {
        StepPolicy::with_base(d.grid_dt())
    }
}

// ---------------------------------------------------------------------------
// vector fields

/// Kernel jet of the covering equation at offset w = z − ξ(t).
pub fn covering_kernel_jet(
    kind: FlowKind,
    t: f64,
    w: Complex64,
    cfg: &KernelConfig,
) -> Result<Jet, KernelError> {
    let one = Complex64::new(1.0, 0.0);
    match kind.covering_analog() {
        FlowKind::CoveringRadial | FlowKind::CoveringWholePlane => Ok(cot2_affine(w, one)),
        FlowKind::CoveringAnnulus { .. } => {
            kernels::h_jet(HKind::H, kind.kernel_modulus(t), w, cfg)
        }
        FlowKind::InvertedCoveringAnnulus { .. } => {
            kernels::h_jet(HKind::HI, kind.kernel_modulus(t), w, cfg)
        }
        FlowKind::CoveringDisc => kernels::h_jet(HKind::HI, -t, w, cfg),
        FlowKind::InvertedCoveringDisc => kernels::h_jet(HKind::H, -t, w, cfg),
        FlowKind::Strip => Ok(coth2(w)),
        _ => unreachable!("covering_analog returns covering kinds"),
    }
}

/// Velocity of a tracked point (and optionally its linearization) at (t, z).
fn field(
    kind: FlowKind,
    t: f64,
    z: Complex64,
    xi: f64,
    cfg: &KernelConfig,
) -> Result<(Complex64, Complex64), KernelError> {
    let e = Complex64::new(0.0, 1.0) * xi;
    match kind {
        FlowKind::Radial | FlowKind::WholePlane | FlowKind::InvertedWholePlane => {
            let e = e.exp();
            let v = z * (e + z) / (e - z);
            let dv = (e + z) / (e - z) + 2.0 * e * z / ((e - z) * (e - z));
            Ok((v, dv))
        }
        FlowKind::Annulus { .. } | FlowKind::InvertedAnnulus { .. } | FlowKind::Disc => {
            let skind = if matches!(kind, FlowKind::Annulus { .. }) {
                SKind::S
            } else {
                SKind::SI
            };
            let u = z * (-e).exp();
            let j = kernels::s_jet(skind, kind.kernel_modulus(t), u, cfg)?;
            let s = j.value();
            Ok((z * s, s + u * j.deriv(1)))
        }
        _ => {
            let j = covering_kernel_jet(kind, t, z - xi, cfg)?;
            Ok((j.value(), j.deriv(1)))
        }
    }
}

/// Distance from a tracked value to the instantaneous singularity set.
pub fn sing_distance(kind: FlowKind, t: f64, z: Complex64, xi: f64) -> f64 {
    let e = Complex64::new(0.0, 1.0) * xi;
    match kind {
        FlowKind::Radial | FlowKind::WholePlane | FlowKind::InvertedWholePlane => {
            (z - e.exp()).norm()
        }
        FlowKind::Annulus { .. } | FlowKind::InvertedAnnulus { .. } | FlowKind::Disc => {
            let skind = if matches!(kind, FlowKind::Annulus { .. }) {
                SKind::S
            } else {
                SKind::SI
            };
            s_pole_distance(skind, kind.kernel_modulus(t), z * (-e).exp()).1
        }
        FlowKind::Strip => {
            let w = z - xi;
            let wrapped = w.im - 2.0 * PI * (w.im / (2.0 * PI)).round();
            Complex64::new(w.re, wrapped).norm()
        }
        _ => {
            let hkind = match kind.covering_analog() {
                FlowKind::InvertedCoveringAnnulus { .. } | FlowKind::CoveringDisc => HKind::HI,
                _ => HKind::H,
            };
            h_pole_distance(hkind, kind.kernel_modulus(t), z - xi).1
        }
    }
}

// ---------------------------------------------------------------------------
// point advance

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Advance {
    Reached,
    Swallowed(f64),
}

/// Advance one tracked point (with linearization `deriv`) from `t_from` to
/// `t_to` under `driving`; returns the swallow time if the point is
/// absorbed on the way.
pub fn advance_point<D: Driving>(
    kind: FlowKind,
    z: &mut Complex64,
    deriv: Option<&mut Complex64>,
    t_from: f64,
    t_to: f64,
    driving: &D,
    policy: &StepPolicy,
    cfg: &KernelConfig,
) -> LResult<Advance> {
    let mut t = t_from;
    let mut dz = deriv;
    while t < t_to - 1e-15 {
        let rem = t_to - t;
        if rem < policy.min_dt {
            break;
        }
        let d = sing_distance(kind, t, *z, driving.xi(t));
        if d < policy.swallow_eps {
            return Ok(Advance::Swallowed(t));
        }
        let mut h = policy.base_dt.min(policy.cfl * d * d).min(rem);
        if h < policy.min_dt {
            return Ok(Advance::Swallowed(t));
        }
        let brk = driving.next_break(t);
        if brk < t + h {
            // Break-point rounding must not masquerade as a swallow.
            h = (brk - t).max(policy.min_dt);
        }
        match rk4_point(kind, z, dz.as_deref_mut(), t, h, driving, cfg) {
            Ok(()) => {}
            Err(KernelError::PoleProximity { .. }) => return Ok(Advance::Swallowed(t)),
            Err(e) => return Err(e.into()),
        }
        if !z.re.is_finite() || !z.im.is_finite() {
            return Ok(Advance::Swallowed(t));
        }
        t += h;
    }
    Ok(Advance::Reached)
}

fn rk4_point<D: Driving>(
    kind: FlowKind,
    z: &mut Complex64,
    deriv: Option<&mut Complex64>,
    t: f64,
    h: f64,
    driving: &D,
    cfg: &KernelConfig,
) -> Result<(), KernelError> {
    // RK4 on the joint (z, dz) system; dz' = f'(z) dz.
    let eval = |tt: f64, zz: Complex64, dd: Complex64| -> Result<(Complex64, Complex64), KernelError> {
        let (v, dv) = field(kind, tt, zz, driving.xi(tt), cfg)?;
        Ok((v, dv * dd))
    };
    let d0 = deriv.as_ref().map(|d| **d).unwrap_or(Complex64::new(1.0, 0.0));
    let (k1, l1) = eval(t, *z, d0)?;
    let (k2, l2) = eval(t + 0.5 * h, *z + 0.5 * h * k1, d0 + 0.5 * h * l1)?;
    let (k3, l3) = eval(t + 0.5 * h, *z + 0.5 * h * k2, d0 + 0.5 * h * l2)?;
    let (k4, l4) = eval(t + h, *z + h * k3, d0 + h * l3)?;
    *z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if let Some(d) = deriv {
        *d += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    }
    Ok(())
}

/// Advance a covering-coordinate boundary jet (g̃, g̃′, g̃″, g̃‴).
pub fn advance_jet<D: Driving>(
    kind: FlowKind,
    state: &mut [Complex64; 4],
    t_from: f64,
    t_to: f64,
    driving: &D,
    policy: &StepPolicy,
    cfg: &KernelConfig,
) -> LResult<Advance> {
    let ck = kind.covering_analog();
    let mut t = t_from;
    while t < t_to - 1e-15 {
        let rem = t_to - t;
        if rem < policy.min_dt {
            break;
        }
        let d = sing_distance(ck, t, state[0], driving.xi(t));
        if d < policy.swallow_eps {
            return Ok(Advance::Swallowed(t));
        }
        let mut h = policy.base_dt.min(policy.cfl * d * d).min(rem);
        if h < policy.min_dt {
            return Ok(Advance::Swallowed(t));
        }
        let brk = driving.next_break(t);
        if brk < t + h {
            h = (brk - t).max(policy.min_dt);
        }
        match rk4_jet(ck, state, t, h, driving, cfg) {
            Ok(()) => {}
            Err(KernelError::PoleProximity { .. }) => return Ok(Advance::Swallowed(t)),
            Err(e) => return Err(e.into()),
        }
        if !state.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Ok(Advance::Swallowed(t));
        }
        t += h;
    }
    Ok(Advance::Reached)
}

fn rk4_jet<D: Driving>(
    kind: FlowKind,
    state: &mut [Complex64; 4],
    t: f64,
    h: f64,
    driving: &D,
    cfg: &KernelConfig,
) -> Result<(), KernelError> {
    let rhs = |tt: f64, s: &[Complex64; 4]| -> Result<[Complex64; 4], KernelError> {
        let k = covering_kernel_jet(kind, tt, s[0] - driving.xi(tt), cfg)?;
        let (k0, k1, k2, k3) = (k.value(), k.deriv(1), k.deriv(2), k.deriv(3));
        Ok([
            k0,
            k1 * s[1],
            k2 * s[1] * s[1] + k1 * s[2],
            k3 * s[1] * s[1] * s[1] + 3.0 * k2 * s[1] * s[2] + k1 * s[3],
        ])
    };
    let add = |a: &[Complex64; 4], b: &[Complex64; 4], w: f64| -> [Complex64; 4] {
        [a[0] + w * b[0], a[1] + w * b[1], a[2] + w * b[2], a[3] + w * b[3]]
    };
    let k1 = rhs(t, state)?;
    let k2 = rhs(t + 0.5 * h, &add(state, &k1, 0.5 * h))?;
    let k3 = rhs(t + 0.5 * h, &add(state, &k2, 0.5 * h))?;
    let k4 = rhs(t + h, &add(state, &k3, h))?;
    for i in 0..4 {
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// flows

#[derive(Clone, Debug)]
pub struct Tracked {
    pub id: usize,
    pub z: Complex64,
    pub deriv: Complex64,
    pub alive: bool,
    pub swallow_time: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BoundaryJet {
    pub base: f64,
    pub state: [Complex64; 4],
    pub alive: bool,
    pub swallow_time: Option<f64>,
}

impl BoundaryJet {
    pub fn g(&self) -> Complex64 {
        self.state[0]
    }

    pub fn schwarzian(&self) -> Complex64 {
        let r2 = self.state[2] / self.state[1];
        self.state[3] / self.state[1] - 1.5 * r2 * r2
    }
}

/// Evolving state of one Loewner equation.
#[derive(Clone, Debug)]
pub struct LoewnerFlow {
    pub kind: FlowKind,
    pub t_start: f64,
    pub time: f64,
    pub tracked: Vec<Tracked>,
    pub jets: Vec<BoundaryJet>,
    pub cfg: KernelConfig,
}

impl LoewnerFlow {
    pub fn new(
        kind: FlowKind,
        t_start: f64,
        seeds: &[Complex64],
        jet_bases: &[f64],
        cfg: KernelConfig,
    ) -> LoewnerFlow {
        let tracked = seeds
            .iter()
            .enumerate()
            .map(|(id, &z)| Tracked {
                id,
                z: kind.initial_value(z, t_start),
                deriv: Complex64::new(1.0, 0.0),
                alive: true,
                swallow_time: None,
            })
            .collect();
        let jets = jet_bases
            .iter()
            .map(|&base| BoundaryJet {
                base,
                state: [
                    kind.initial_jet_value(base, t_start),
                    Complex64::new(1.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                ],
                alive: true,
                swallow_time: None,
            })
            .collect();
        LoewnerFlow {
            kind,
            t_start,
            time: t_start,
            tracked,
            jets,
            cfg,
        }
    }

    /// Elapsed capacity (= elapsed time under the paper's parametrizations).
    pub fn capacity(&self) -> f64 {
        self.time - self.t_start
    }

    /// Advance the whole flow to absolute time `until`.
    pub fn run<D: Driving>(&mut self, driving: &D, until: f64, policy: &StepPolicy) -> LResult<()> {
        if let Some(p) = self.kind.modulus() {
            if until >= p {
                return Err(LoewnerError::ModulusExhausted { t: until, p });
            }
        }
        if matches!(
            self.kind,
            FlowKind::Disc | FlowKind::CoveringDisc | FlowKind::InvertedCoveringDisc
        ) && until >= 0.0
        {
            return Err(LoewnerError::ModulusExhausted { t: until, p: 0.0 });
        }
        if until > driving.t_end() + 1e-12 {
            return Err(LoewnerError::DrivingTooShort(until));
        }
        let from = self.time;
        for tp in self.tracked.iter_mut() {
            if !tp.alive {
                continue;
            }
            match advance_point(
                self.kind,
                &mut tp.z,
                Some(&mut tp.deriv),
                from,
                until,
                driving,
                policy,
                &self.cfg,
            )? {
                Advance::Reached => {}
                Advance::Swallowed(ts) => {
                    tp.alive = false;
                    tp.swallow_time = Some(ts);
                }
            }
        }
        for jet in self.jets.iter_mut() {
            if !jet.alive {
                continue;
            }
            match advance_jet(
                self.kind,
                &mut jet.state,
                from,
                until,
                driving,
                policy,
                &self.cfg,
            )? {
                Advance::Reached => {}
                Advance::Swallowed(ts) => {
                    jet.alive = false;
                    jet.swallow_time = Some(ts);
                }
            }
        }
        self.time = until;
        Ok(())
    }
}

/// Integrate `kind` under `driving` over its whole span.
pub fn solve_flow<D: Driving>(
    kind: FlowKind,
    driving: &D,
    seeds: &[Complex64],
    jet_bases: &[f64],
    policy: &StepPolicy,
    cfg: &KernelConfig,
) -> LResult<LoewnerFlow> {
    let mut flow = LoewnerFlow::new(kind, driving.t0(), seeds, jet_bases, cfg.clone());
    flow.run(driving, driving.t_end(), policy)?;
    Ok(flow)
}

/// Full boundary jet with the Schwarzian, looked up by base point.
pub fn boundary_jet(flow: &LoewnerFlow, base: f64) -> LResult<(Complex64, Complex64, Complex64, Complex64, Complex64)> {
    let jet = flow
        .jets
        .iter()
        .find(|j| (j.base - base).abs() < 1e-12)
        .ok_or(LoewnerError::NoSuchJet(base))?;
    if !jet.alive {
        return Err(LoewnerError::Swallowed(base));
    }
    Ok((
        jet.state[0],
        jet.state[1],
        jet.state[2],
        jet.state[3],
        jet.schwarzian(),
    ))
}

pub fn capacity_of(flow: &LoewnerFlow) -> f64 {
    flow.capacity()
}

// ---------------------------------------------------------------------------
// traces

#[derive(Clone, Debug)]
pub struct TraceSample {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
}

/// Trace β(t) by reverse-time integration of the covering flow from a point
/// just inside the domain above the driving value.
pub fn compute_trace<D: Driving>(
    kind: FlowKind,
    driving: &D,
    sample_times: &[f64],
    policy: &StepPolicy,
    cfg: &KernelConfig,
) -> LResult<TraceSample> {
    let ck = kind.covering_analog();
    let eps_tip = 0.5 * driving.grid_dt().sqrt();
    let circle_output = !matches!(
        ck,
        FlowKind::Strip
    ) && !kind.is_covering();
    let t0 = driving.t0();
    let mut points = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        if t > driving.t_end() + 1e-12 || t < t0 - 1e-12 {
            return Err(LoewnerError::DrivingTooShort(t));
        }
        // The physical domain sits above the driving singularity for the
        // annulus/radial strips but below it for whole-plane chains (the
        // state coordinate is plane + i·t there).
        let tip_offset = if matches!(ck, FlowKind::CoveringWholePlane) {
            -eps_tip
        } else {
            eps_tip
        };
        let w = if t - t0 < 1e-14 {
            Complex64::new(driving.xi(t0), 0.0)
        } else {
            let mut z = Complex64::new(driving.xi(t), tip_offset);
            reverse_covering(ck, &mut z, t, t0, driving, policy, cfg)?;
            z
        };
        let point = if circle_output {
            (Complex64::new(0.0, 1.0) * w).exp()
        } else {
            w
        };
        points.push(point);
    }
    Ok(TraceSample {
        times: sample_times.to_vec(),
        points,
    })
}

/// Integrate the covering ODE backwards from `t_from` to `t_to < t_from`.
pub fn reverse_covering<D: Driving>(
    kind: FlowKind,
    z: &mut Complex64,
    t_from: f64,
    t_to: f64,
    driving: &D,
    policy: &StepPolicy,
    cfg: &KernelConfig,
) -> LResult<()> {
    let mut t = t_from;
    while t > t_to + 1e-15 {
        let rem = t - t_to;
        if rem < policy.min_dt {
            break;
        }
        let d = sing_distance(kind, t, *z, driving.xi(t));
        let mut h = policy.base_dt.min(policy.cfl * d * d).min(rem);
        if h < policy.min_dt {
            return Err(LoewnerError::StepUnderflow { t });
        }
        let brk = driving.prev_break(t);
        if brk > t - h {
            h = (t - brk).max(policy.min_dt);
        }
        rk4_point(kind, z, None, t, -h, driving, cfg).map_err(|e| match e {
            KernelError::PoleProximity { .. } => LoewnerError::ReverseBlowup(t),
            other => LoewnerError::Kernel(other),
        })?;
        if !z.re.is_finite() || !z.im.is_finite() || z.im.abs() > 1e6 {
            return Err(LoewnerError::ReverseBlowup(t));
        }
        t -= h;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> KernelConfig {
        KernelConfig::default()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn radial_derivative_at_origin_is_exp_t() {
        // Prop 2.1: g(t,0) = 0, g'(t,0) = e^t.
        let driving = DrivingPath::constant(0.0, 0.0, 1.0, 1e-3);
        let policy = StepPolicy::for_driving(&driving);
        let flow = solve_flow(
            FlowKind::Radial,
            &driving,
            &[c(0.0, 0.0)],
            &[],
            &policy,
            &cfg(),
        )
        .unwrap();
        assert!(flow.tracked[0].z.norm() < 1e-12);
        assert_relative_eq!(flow.tracked[0].deriv.norm(), 1f64.exp(), epsilon = 1e-8);
        assert_relative_eq!(capacity_of(&flow), 1.0);
    }

    #[test]
    fn zero_time_is_identity() {
        let driving = DrivingPath::constant(0.3, 0.0, 1.0, 1e-3);
        let policy = StepPolicy::for_driving(&driving);
        for kind in [
            FlowKind::Radial,
            FlowKind::Annulus { p: 3.0 },
            FlowKind::CoveringAnnulus { p: 3.0 },
            FlowKind::Strip,
        ] {
            let mut flow = LoewnerFlow::new(kind, 0.0, &[c(0.4, 0.5)], &[2.0], cfg());
            flow.run(&driving, 0.0, &policy).unwrap();
            assert_eq!(flow.tracked[0].z, c(0.4, 0.5));
            assert_eq!(flow.jets[0].state[0], c(2.0, 0.0));
            assert_eq!(flow.jets[0].state[1], c(1.0, 0.0));
        }
    }

    #[test]
    fn annulus_large_modulus_matches_radial() {
        // The kernel difference S(10,·) − S(∞,·) is O(e^{−10}).
        let driving = DrivingPath::constant(0.0, 0.0, 0.5, 1e-4);
        let policy = StepPolicy::for_driving(&driving);
        let z = c(0.9, 0.0) * (Complex64::new(0.0, 0.1)).exp();
        let radial = solve_flow(FlowKind::Radial, &driving, &[z], &[], &policy, &cfg()).unwrap();
        let annulus = solve_flow(
            FlowKind::Annulus { p: 10.0 },
            &driving,
            &[z],
            &[],
            &policy,
            &cfg(),
        )
        .unwrap();
        assert!((radial.tracked[0].z - annulus.tracked[0].z).norm() < 5e-4);
    }

    #[test]
    fn covering_consistency() {
        // e^{i g̃(t,x)} = g(t, e^{ix})
        let mut values = Vec::new();
        let n = 501;
        for k in 0..n {
            values.push(0.4 * (k as f64 * 0.005).sin());
        }
        let driving = DrivingPath {
            t0: 0.0,
            dt: 1e-3,
            values,
            kappa: 0.0,
            seed: 0,
        };
        let policy = StepPolicy::for_driving(&driving);
        let x = 1.3f64;
        let p = 2.5;
        let seed = (c(0.0, 1.0) * x).exp();
        let circle = solve_flow(
            FlowKind::Annulus { p },
            &driving,
            &[seed],
            &[],
            &policy,
            &cfg(),
        )
        .unwrap();
        let covering = solve_flow(
            FlowKind::CoveringAnnulus { p },
            &driving,
            &[c(x, 0.0)],
            &[],
            &policy,
            &cfg(),
        )
        .unwrap();
        let lifted = (c(0.0, 1.0) * covering.tracked[0].z).exp();
        assert!((lifted - circle.tracked[0].z).norm() < 1e-8);
    }

    #[test]
    fn semigroup_property() {
        let mut values = Vec::new();
        for k in 0..1001 {
            values.push(0.3 * (k as f64 * 0.002).cos() - 0.3);
        }
        let driving = DrivingPath {
            t0: 0.0,
            dt: 5e-4,
            values,
            kappa: 0.0,
            seed: 0,
        };
        let policy = StepPolicy::for_driving(&driving);
        let seeds = [c(0.8, 0.3), c(1.9, 0.6)];
        let direct = solve_flow(
            FlowKind::CoveringAnnulus { p: 3.0 },
            &driving,
            &seeds,
            &[0.9],
            &policy,
            &cfg(),
        )
        .unwrap();
        let mut staged = LoewnerFlow::new(FlowKind::CoveringAnnulus { p: 3.0 }, 0.0, &seeds, &[0.9], cfg());
        staged.run(&driving, 0.25, &policy).unwrap();
        staged.run(&driving, driving.t_end(), &policy).unwrap();
        for i in 0..seeds.len() {
            assert!((direct.tracked[i].z - staged.tracked[i].z).norm() < 1e-9);
        }
        assert!((direct.jets[0].state[0] - staged.jets[0].state[0]).norm() < 1e-9);
    }

    #[test]
    fn inverted_annulus_is_conjugated_annulus() {
        // I_{p−t} ∘ g(t,·) ∘ I_p = g_I(t,·)
        let p = 2.0;
        let t_end = 0.4;
        let driving = DrivingPath::constant(0.7, 0.0, t_end, 1e-3);
        let policy = StepPolicy::for_driving(&driving);
        let z = c(0.5, 0.2); // inside A_p
        let i_p = |w: Complex64, q: f64| (-q).exp() / w.conj();
        let inverted = solve_flow(
            FlowKind::InvertedAnnulus { p },
            &driving,
            &[z],
            &[],
            &policy,
            &cfg(),
        )
        .unwrap();
        let annulus = solve_flow(
            FlowKind::Annulus { p },
            &driving,
            &[i_p(z, p)],
            &[],
            &policy,
            &cfg(),
        )
        .unwrap();
        let conj = i_p(annulus.tracked[0].z, p - t_end);
        assert!((conj - inverted.tracked[0].z).norm() < 1e-9);
    }

    #[test]
    fn whole_plane_initialization_stability() {
        // Halving |t0| changes g_I(t,z) at fixed t by < 1e−6 for t0 ≤ −20.
        let z = c(0.4, 0.1);
        let mut results = Vec::new();
        for &t0 in &[-20.0, -40.0] {
            let driving = DrivingPath::constant(0.0, t0, 1.0, 1e-3);
            let policy = StepPolicy::for_driving(&driving);
            let flow = solve_flow(FlowKind::WholePlane, &driving, &[z], &[], &policy, &cfg()).unwrap();
            results.push(flow.tracked[0].z);
        }
        assert!((results[0] - results[1]).norm() < 1e-6);
    }

    #[test]
    fn trace_starts_at_driving_point_and_stays_real_for_zero_driving() {
        let driving = DrivingPath::constant(0.0, 0.0, 0.5, 1e-3);
        let policy = StepPolicy::for_driving(&driving);
        let times: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
        let trace = compute_trace(FlowKind::Radial, &driving, &times, &policy, &cfg()).unwrap();
        assert!((trace.points[0] - c(1.0, 0.0)).norm() < 1e-6);
        for pt in &trace.points {
            // Radial trace with ξ≡0 lies on the real radius (0,1].
            assert!(pt.im.abs() < 1e-6, "trace point {pt} off the radius");
            assert!(pt.re > 0.0 && pt.re <= 1.0 + 1e-9);
        }
        // Trace should move inward over time.
        assert!(trace.points[5].re < trace.points[1].re);
    }

    #[test]
    fn boundary_jet_matches_finite_differences() {
        let mut values = Vec::new();
        for k in 0..501 {
            values.push(0.5 * (k as f64 * 0.004).sin());
        }
        let driving = DrivingPath {
            t0: 0.0,
            dt: 1e-3,
            values,
            kappa: 0.0,
            seed: 0,
        };
        let policy = StepPolicy::for_driving(&driving);
        let base = 2.0f64;
        let h = 1e-4;
        let seeds = [c(base - h, 0.0), c(base + h, 0.0)];
        let flow = solve_flow(
            FlowKind::CoveringAnnulus { p: 3.0 },
            &driving,
            &seeds,
            &[base],
            &policy,
            &cfg(),
        )
        .unwrap();
        let (g, g1, _, _, _) = boundary_jet(&flow, base).unwrap();
        let fd1 = (flow.tracked[1].z - flow.tracked[0].z) / (2.0 * h);
        assert!((g.im).abs() < 1e-9, "boundary point stays on the real line");
        assert!(
            ((fd1 - g1) / g1).norm() < 1e-5,
            "jet {g1} vs finite difference {fd1}"
        );
    }

    #[test]
    fn monotone_swallowing_radial() {
        // With ξ≡0 the radial hull is a slit along the positive real
        // radius; points on that radius swallow in order of their distance
        // from the driving point e^{i·0} = 1.
        let driving = DrivingPath::constant(0.0, 0.0, 2.5, 1e-3);
        let policy = StepPolicy::for_driving(&driving);
        let seeds = [c(0.9, 0.0), c(0.8, 0.0), c(0.65, 0.0), c(0.5, 0.0)];
        let flow = solve_flow(FlowKind::Radial, &driving, &seeds, &[], &policy, &cfg()).unwrap();
        let mut last = -1.0;
        for tp in &flow.tracked {
            let ts = tp.swallow_time.expect("all points on the slit swallow by t=2.5");
            assert!(ts > last, "swallow times must increase with distance from the tip");
            last = ts;
        }
    }

    #[test]
    fn modulus_exhaustion_detected() {
        let driving = DrivingPath::constant(0.0, 0.0, 3.0, 1e-3);
        let policy = StepPolicy::for_driving(&driving);
        let err = solve_flow(
            FlowKind::Annulus { p: 2.0 },
            &driving,
            &[c(0.5, 0.0)],
            &[],
            &policy,
            &cfg(),
        );
        assert!(matches!(err, Err(LoewnerError::ModulusExhausted { .. })));
    }
}
