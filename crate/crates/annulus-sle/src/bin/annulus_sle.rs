//! Command-line surface for the annulus-sle crate.
//!
//! Conventions shared by every subcommand:
//! * exit 0 = success / check passed, 1 = a numerical check failed,
//!   2 = bad input or a domain error (pole proximity, swallowed tip, ...);
//! * CSV output carries floats with 17 significant digits;
//! * when `--out FILE` is given, a JSON manifest `FILE.manifest.json` is
//!   written next to it recording the command, every parameter, the seed
//!   and the kernel configuration, so a run can be audited and replayed
//!   bit-for-bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use annulus_sle::drifts::{drift_from_id, dual, gamma_from_lambda, pde_residual, DriftKind, PdeKind};
use annulus_sle::ensemble::{
    ensemble_quantities, kappa0_commutation_check, martingale_estimate, EnsembleError,
    EnsembleMode, Geometry,
};
use annulus_sle::kernels::{eval_h, s_jet, HKind, KernelConfig, KernelError, SKind};
use annulus_sle::loewner::{compute_trace, Driving, DrivingPath, FlowKind, StepPolicy};
use annulus_sle::sde::drive_annulus_sle;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "annulus-sle", version, about = "Annulus Loewner evolutions and SLE(kappa, Lambda) diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate an elliptic kernel (S, S_I, H, H_I) at a point or on a grid.
    KernelEval(KernelEvalArgs),
    /// Audit a drift family against its annulus/radial/strip PDE.
    PdeCheck(PdeCheckArgs),
    /// Sample an annulus SLE(kappa, Lambda) driving path.
    Simulate(SimulateArgs),
    /// Reverse-integrate a trace from a driving path CSV.
    Trace(TraceArgs),
    /// Run one two-time ensemble experiment and report its record.
    Ensemble(EnsembleArgs),
    /// Deterministic kappa = 0 commutation check.
    Commute(CommuteArgs),
    /// Monte Carlo estimate of E[M(t1, t2)].
    Martingale(MartingaleArgs),
}

/// Outcome classification for exit codes.
enum Failure {
    /// A numerical check ran to completion and failed (exit 1).
    Check(String),
    /// Bad input or a domain error (exit 2).
    Domain(String),
}

type CliResult = Result<(), Failure>;

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Domain(e.to_string())
}

/// 17 significant digits: enough to round-trip an f64 exactly.
fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(serde::Serialize)]
struct RunManifest {
    command: String,
    parameters: BTreeMap<String, String>,
    seed: u64,
    tool_version: String,
    outputs: Vec<String>,
    kernel: KernelConfig,
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> CliResult {
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    let body = serde_json::to_string_pretty(manifest).map_err(domain)?;
    fs::write(PathBuf::from(path), body + "\n").map_err(domain)
}

/// Write `body` to `--out` if given, else to stdout.
fn emit(out: Option<&Path>, body: &str) -> CliResult {
    match out {
        Some(p) => fs::write(p, body).map_err(domain),
        None => {
            print!("{body}");
            std::io::stdout().flush().map_err(domain)
        }
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), Failure> {
    let mut it = s.split(',');
    let err = || Failure::Domain(format!("expected `{what}` as re,im (got `{s}`)"));
    let a = it.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
    let b = it.next().ok_or_else(err)?.trim().parse().map_err(|_| err())?;
    if it.next().is_some() {
        return Err(err());
    }
    Ok((a, b))
}

/// Parse `start,end,count` into an inclusive linspace.
fn parse_grid(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(',').collect();
    let err = || Failure::Domain(format!("expected `{what}` as start,end,count (got `{s}`)"));
    if parts.len() != 3 {
        return Err(err());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| err())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| err())?;
    let n: usize = parts[2].trim().parse().map_err(|_| err())?;
    if n == 0 {
        return Err(err());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn parse_p(s: &str) -> Result<f64, Failure> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    s.parse()
        .map_err(|_| Failure::Domain(format!("bad modulus `{s}` (want a real or `inf`)")))
}

// ---------------------------------------------------------------------------
// kernel-eval

#[derive(Args)]
struct KernelEvalArgs {
    /// Kernel: S, SI, H or HI.
    #[arg(long)]
    kind: String,
    /// Modulus p > 0, or `inf`.
    #[arg(long)]
    p: String,
    /// Evaluation point as `re,im` (ignored when --grid is given).
    #[arg(long)]
    z: Option<String>,
    /// Derivative order 0..3.
    #[arg(long, default_value_t = 0)]
    order: usize,
    /// Evaluate on a real-axis grid `start,end,count` instead of a point.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_kernel_eval(a: &KernelEvalArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let p = parse_p(&a.p)?;
    if a.order > 3 {
        return Err(Failure::Domain(format!("order {} out of range 0..3", a.order)));
    }
    let points: Vec<Complex64> = match (&a.grid, &a.z) {
        (Some(g), _) => parse_grid(g, "--grid")?
            .into_iter()
            .map(|x| Complex64::new(x, 0.0))
            .collect(),
        (None, Some(z)) => {
            let (re, im) = parse_pair(z, "--z")?;
            vec![Complex64::new(re, im)]
        }
        (None, None) => return Err(Failure::Domain("need --z or --grid".into())),
    };
    let mut body = String::from("p,re_z,im_z,order,re_val,im_val\n");
    for z in points {
        let val = match a.kind.as_str() {
            "H" => eval_h(HKind::H, p, z, a.order, &cfg),
            "HI" => eval_h(HKind::HI, p, z, a.order, &cfg),
            "S" => s_jet(SKind::S, p, z, &cfg).map(|j| j.deriv(a.order)),
            "SI" => s_jet(SKind::SI, p, z, &cfg).map(|j| j.deriv(a.order)),
            other => return Err(Failure::Domain(format!("unknown kernel kind `{other}`"))),
        };
        let val = match val {
            Ok(v) => v,
            Err(KernelError::PoleProximity { pole, dist }) => {
                eprintln!("point {z} lies within {dist:.3e} of the pole at {pole}");
                return Err(Failure::Domain("pole proximity".into()));
            }
            Err(e) => return Err(domain(e)),
        };
        body += &format!(
            "{},{},{},{},{},{}\n",
            f17(p),
            f17(z.re),
            f17(z.im),
            a.order,
            f17(val.re),
            f17(val.im)
        );
    }
    emit(a.out.as_deref(), &body)?;
    if let Some(out) = &a.out {
        let mut parameters = BTreeMap::new();
        parameters.insert("kind".into(), a.kind.clone());
        parameters.insert("p".into(), a.p.clone());
        parameters.insert("order".into(), a.order.to_string());
        if let Some(z) = &a.z {
            parameters.insert("z".into(), z.clone());
        }
        if let Some(g) = &a.grid {
            parameters.insert("grid".into(), g.clone());
        }
        write_manifest(
            out,
            &RunManifest {
                command: "kernel-eval".into(),
                parameters,
                seed: 0,
                tool_version: TOOL_VERSION.into(),
                outputs: vec![out.display().to_string()],
                kernel: cfg,
            },
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pde-check

#[derive(Args)]
struct PdeCheckArgs {
    /// Drift family id, e.g. `kappa4/1?C=0`, `kappa2/1`, `const-zero`.
    #[arg(long)]
    family: String,
    #[arg(long)]
    kappa: f64,
    /// PDE flavour: crossing, chordal, radial or strip.
    #[arg(long)]
    pde: String,
    /// Modulus grid `start,end,count`.  The default stays at p ≥ 0.8: for
    /// ratio-form drifts (κ = 2, 3) the denominators Θ′, Γ̂ decay like
    /// e^{−π²/p} near x = π, so smaller p turns double-precision noise in Λ
    /// into spurious finite-difference residuals.
    #[arg(long, default_value = "0.8,3.5,4")]
    pgrid: String,
    /// Angle grid `start,end,count`.
    #[arg(long, default_value = "0.3,5.9,12")]
    xgrid: String,
    /// Finite-difference step for the p-derivative.
    #[arg(long, default_value_t = 1e-4)]
    hp: f64,
    /// Pass threshold on the max residual.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_pde_check(a: &PdeCheckArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let l = drift_from_id(&a.family).map_err(domain)?;
    let pde = match a.pde.as_str() {
        "crossing" => PdeKind::CrossingAnnulus,
        "chordal" => PdeKind::ChordalAnnulus,
        "radial" => PdeKind::Radial,
        "strip" => PdeKind::Strip,
        other => return Err(Failure::Domain(format!("unknown PDE `{other}`"))),
    };
    let p_grid = parse_grid(&a.pgrid, "--pgrid")?;
    let x_grid = parse_grid(&a.xgrid, "--xgrid")?;
    let res = pde_residual(&l, a.kappa, pde, &p_grid, &x_grid, a.hp, &cfg).map_err(domain)?;
    let mut body = String::from("p,x,residual\n");
    let mut max = 0.0f64;
    for (i, &p) in p_grid.iter().enumerate() {
        for (j, &x) in x_grid.iter().enumerate() {
            let r = res[i][j];
            max = max.max(r.abs());
            body += &format!("{},{},{}\n", f17(p), f17(x), f17(r));
        }
    }
    emit(a.out.as_deref(), &body)?;
    println!("max residual = {:.3e} (threshold {:.1e})", max, a.tol);
    if let Some(out) = &a.out {
        let mut parameters = BTreeMap::new();
        parameters.insert("family".into(), a.family.clone());
        parameters.insert("kappa".into(), f17(a.kappa));
        parameters.insert("pde".into(), a.pde.clone());
        parameters.insert("pgrid".into(), a.pgrid.clone());
        parameters.insert("xgrid".into(), a.xgrid.clone());
        parameters.insert("hp".into(), f17(a.hp));
        parameters.insert("tol".into(), f17(a.tol));
        write_manifest(
            out,
            &RunManifest {
                command: "pde-check".into(),
                parameters,
                seed: 0,
                tool_version: TOOL_VERSION.into(),
                outputs: vec![out.display().to_string()],
                kernel: cfg,
            },
        )?;
    }
    if max < a.tol {
        Ok(())
    } else {
        Err(Failure::Check(format!("max residual {max:.3e} >= {:.1e}", a.tol)))
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    family: String,
    /// Geometry: crossing or chordal.
    #[arg(long, default_value = "crossing")]
    kind: String,
    #[arg(long)]
    p: f64,
    /// Driver start angle.
    #[arg(long)]
    x0: f64,
    /// Marked-point start angle.
    #[arg(long)]
    y0: f64,
    #[arg(long, value_name = "T")]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_drift_kind(s: &str) -> Result<DriftKind, Failure> {
    match s {
        "crossing" => Ok(DriftKind::Crossing),
        "chordal" => Ok(DriftKind::ChordalType),
        other => Err(Failure::Domain(format!(
            "unknown run kind `{other}` (want crossing or chordal)"
        ))),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let l = drift_from_id(&a.family).map_err(domain)?;
    let kind = parse_drift_kind(&a.kind)?;
    let run = drive_annulus_sle(
        a.kappa, &l, kind, a.p, a.x0, a.y0, a.t_end, a.dt, a.seed, a.stream,
    )
    .map_err(domain)?;
    let mut body = String::from("t,xi,q\n");
    for i in 0..run.xi.len() {
        body += &format!(
            "{},{},{}\n",
            f17(run.xi.time(i)),
            f17(run.xi.values[i]),
            f17(run.q[i])
        );
    }
    fs::write(&a.out, body).map_err(domain)?;
    println!(
        "wrote {} samples; stop_time = {}, collided = {}",
        run.xi.len(),
        f17(run.stop_time),
        run.collided
    );
    let mut parameters = BTreeMap::new();
    parameters.insert("kappa".into(), f17(a.kappa));
    parameters.insert("family".into(), a.family.clone());
    parameters.insert("kind".into(), a.kind.clone());
    parameters.insert("p".into(), f17(a.p));
    parameters.insert("x0".into(), f17(a.x0));
    parameters.insert("y0".into(), f17(a.y0));
    parameters.insert("t_end".into(), f17(a.t_end));
    parameters.insert("dt".into(), f17(a.dt));
    parameters.insert("stream".into(), a.stream.to_string());
    write_manifest(
        &a.out,
        &RunManifest {
            command: "simulate".into(),
            parameters,
            seed: a.seed,
            tool_version: TOOL_VERSION.into(),
            outputs: vec![a.out.display().to_string()],
            kernel: cfg,
        },
    )
}

// ---------------------------------------------------------------------------
// trace

#[derive(Args)]
struct TraceArgs {
    /// Flow geometry: radial, annulus, inverted-annulus, whole-plane, disc
    /// or strip (plus their covering- variants).
    #[arg(long)]
    kind: String,
    /// Modulus; required for the annulus kinds.
    #[arg(long)]
    p: Option<f64>,
    /// Driving path CSV with a header and columns t,xi[,...].
    #[arg(long)]
    driver: PathBuf,
    /// Number of equally spaced sample times.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_flow_kind(s: &str, p: Option<f64>) -> Result<FlowKind, Failure> {
    let need_p = || {
        p.ok_or_else(|| Failure::Domain(format!("--kind {s} requires --p")))
    };
    Ok(match s {
        "radial" => FlowKind::Radial,
        "covering-radial" => FlowKind::CoveringRadial,
        "annulus" => FlowKind::Annulus { p: need_p()? },
        "covering-annulus" => FlowKind::CoveringAnnulus { p: need_p()? },
        "inverted-annulus" => FlowKind::InvertedAnnulus { p: need_p()? },
        "inverted-covering-annulus" => FlowKind::InvertedCoveringAnnulus { p: need_p()? },
        "whole-plane" => FlowKind::WholePlane,
        "covering-whole-plane" => FlowKind::CoveringWholePlane,
        "disc" => FlowKind::Disc,
        "covering-disc" => FlowKind::CoveringDisc,
        "strip" => FlowKind::Strip,
        other => return Err(Failure::Domain(format!("unknown flow kind `{other}`"))),
    })
}

fn read_driver(path: &Path) -> Result<DrivingPath, Failure> {
    let text = fs::read_to_string(path).map_err(domain)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let mut cols = line.split(',');
        let bad = || Failure::Domain(format!("{}:{}: malformed driver row", path.display(), i + 1));
        let t: f64 = cols.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let x: f64 = cols.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        times.push(t);
        values.push(x);
    }
    if times.len() < 2 {
        return Err(Failure::Domain("driver needs at least two samples".into()));
    }
    let dt = times[1] - times[0];
    if dt <= 0.0
        || times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(Failure::Domain("driver grid must be uniform".into()));
    }
    Ok(DrivingPath {
        t0: times[0],
        dt,
        values,
        kappa: 0.0,
        seed: 0,
    })
}

fn cmd_trace(a: &TraceArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let kind = parse_flow_kind(&a.kind, a.p)?;
    let driving = read_driver(&a.driver)?;
    if a.samples < 2 {
        return Err(Failure::Domain("need at least two samples".into()));
    }
    let (t0, t1) = (driving.t0(), driving.t_end());
    let times: Vec<f64> = (0..a.samples)
        .map(|i| t0 + (t1 - t0) * i as f64 / (a.samples - 1) as f64)
        .collect();
    let policy = StepPolicy::for_driving(&driving);
    let trace = compute_trace(kind, &driving, &times, &policy, &cfg).map_err(domain)?;
    let mut body = String::from("t,re,im\n");
    for (t, z) in trace.times.iter().zip(trace.points.iter()) {
        body += &format!("{},{},{}\n", f17(*t), f17(z.re), f17(z.im));
    }
    fs::write(&a.out, body).map_err(domain)?;
    println!("wrote {} trace points", trace.points.len());
    let mut parameters = BTreeMap::new();
    parameters.insert("kind".into(), a.kind.clone());
    if let Some(p) = a.p {
        parameters.insert("p".into(), f17(p));
    }
    parameters.insert("driver".into(), a.driver.display().to_string());
    parameters.insert("samples".into(), a.samples.to_string());
    write_manifest(
        &a.out,
        &RunManifest {
            command: "trace".into(),
            parameters,
            seed: 0,
            tool_version: TOOL_VERSION.into(),
            outputs: vec![a.out.display().to_string()],
            kernel: cfg,
        },
    )
}

// ---------------------------------------------------------------------------
// ensemble

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long)]
    kappa: f64,
    /// Crossing drift family id.
    #[arg(long)]
    family: String,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    x1: f64,
    #[arg(long)]
    x2: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long)]
    t2: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Zipper knot spacing.
    #[arg(long, default_value_t = 2.5e-3)]
    delta: f64,
    /// Checkpoints per time axis for the two-time grid.
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_ensemble(a: &EnsembleArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let l = drift_from_id(&a.family).map_err(domain)?;
    let geometry = Geometry::from_kind(l.kind).map_err(domain)?;
    let l2 = dual(&l);
    let run1 = drive_annulus_sle(
        a.kappa, &l, l.kind, a.p, a.x1, a.x2, a.t1, a.dt, a.seed, 0,
    )
    .map_err(domain)?;
    let run2 = drive_annulus_sle(
        a.kappa, &l2, l.kind, a.p, a.x2, a.x1, a.t2, a.dt, a.seed, 1,
    )
    .map_err(domain)?;
    if run1.collided || run2.collided {
        return Err(Failure::Domain("a driver collided before its end time".into()));
    }
    let gamma = gamma_from_lambda(&l, a.kappa, &[], &[]).map_err(domain)?;
    let rec = ensemble_quantities(
        a.p,
        &run1.xi,
        &run2.xi,
        a.grid,
        a.grid,
        a.delta,
        geometry,
        &gamma,
        EnsembleMode::Annulus,
        &cfg,
    )
    .map_err(domain)?;
    let body = serde_json::to_string_pretty(&rec).map_err(domain)? + "\n";
    emit(a.out.as_deref(), &body)?;
    println!("m = {}, M = {}", f17(rec.m), f17(rec.ln_m.exp()));
    if let Some(out) = &a.out {
        let mut parameters = BTreeMap::new();
        parameters.insert("kappa".into(), f17(a.kappa));
        parameters.insert("family".into(), a.family.clone());
        parameters.insert("p".into(), f17(a.p));
        parameters.insert("x1".into(), f17(a.x1));
        parameters.insert("x2".into(), f17(a.x2));
        parameters.insert("t1".into(), f17(a.t1));
        parameters.insert("t2".into(), f17(a.t2));
        parameters.insert("dt".into(), f17(a.dt));
        parameters.insert("delta".into(), f17(a.delta));
        parameters.insert("grid".into(), a.grid.to_string());
        write_manifest(
            out,
            &RunManifest {
                command: "ensemble".into(),
                parameters,
                seed: a.seed,
                tool_version: TOOL_VERSION.into(),
                outputs: vec![out.display().to_string()],
                kernel: cfg,
            },
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// commute

#[derive(Args)]
struct CommuteArgs {
    /// kappa = 0 drift family.
    #[arg(long, default_value = "kappa0/1")]
    family: String,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    x1: f64,
    #[arg(long)]
    x2: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long)]
    t2: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Pass threshold on the sup-difference of the two growth orders.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Pass threshold on the drift of the U observables.
    #[arg(long, default_value_t = 5e-3)]
    u_tol: f64,
}

fn cmd_commute(a: &CommuteArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let l = drift_from_id(&a.family).map_err(domain)?;
    let report = kappa0_commutation_check(&l, a.p, a.x1, a.x2, a.t1, a.t2, a.delta, &cfg)
        .map_err(domain)?;
    println!(
        "sup_diff = {}, rotation = {}, max_u_drift = {}, residual = {}, m = {}",
        f17(report.sup_diff),
        f17(report.rotation),
        f17(report.max_u_drift),
        f17(report.residual),
        f17(report.m)
    );
    if report.sup_diff <= a.tol && report.max_u_drift <= a.u_tol {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "commutation check failed: sup_diff = {:.3e} (tol {:.1e}), max_u_drift = {:.3e} (tol {:.1e})",
            report.sup_diff, a.tol, report.max_u_drift, a.u_tol
        )))
    }
}

// ---------------------------------------------------------------------------
// martingale

#[derive(Args)]
struct MartingaleArgs {
    #[arg(long)]
    kappa: f64,
    /// Crossing drift family id.
    #[arg(long)]
    family: String,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.0)]
    x1: f64,
    #[arg(long, default_value_t = std::f64::consts::PI)]
    x2: f64,
    #[arg(long)]
    t1: f64,
    #[arg(long)]
    t2: f64,
    /// Number of Monte Carlo pairs.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2e-4)]
    dt: f64,
    #[arg(long, default_value_t = 2.5e-3)]
    delta: f64,
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_martingale(a: &MartingaleArgs) -> CliResult {
    let cfg = KernelConfig::default();
    let l = drift_from_id(&a.family).map_err(domain)?;
    let est = match martingale_estimate(
        a.kappa, &l, a.p, a.x1, a.x2, a.t1, a.t2, a.n, a.dt, a.delta, a.grid, a.seed, &cfg,
    ) {
        Ok(est) => est,
        Err(EnsembleError::ExcessiveRejection { rejected, total }) => {
            return Err(Failure::Check(format!(
                "rejected {rejected} of {total} samples"
            )))
        }
        Err(e) => return Err(domain(e)),
    };
    let rejection = est.rejected as f64 / (est.n_used + est.rejected) as f64;
    println!(
        "mean = {}, stderr = {}, n_used = {}, rejection_rate = {}",
        f17(est.mean),
        f17(est.stderr),
        est.n_used,
        f17(rejection)
    );
    if let Some(out) = &a.out {
        let body = serde_json::to_string_pretty(&est).map_err(domain)? + "\n";
        fs::write(out, body).map_err(domain)?;
        let mut parameters = BTreeMap::new();
        parameters.insert("kappa".into(), f17(a.kappa));
        parameters.insert("family".into(), a.family.clone());
        parameters.insert("p".into(), f17(a.p));
        parameters.insert("x1".into(), f17(a.x1));
        parameters.insert("x2".into(), f17(a.x2));
        parameters.insert("t1".into(), f17(a.t1));
        parameters.insert("t2".into(), f17(a.t2));
        parameters.insert("n".into(), a.n.to_string());
        parameters.insert("dt".into(), f17(a.dt));
        parameters.insert("delta".into(), f17(a.delta));
        parameters.insert("grid".into(), a.grid.to_string());
        write_manifest(
            out,
            &RunManifest {
                command: "martingale".into(),
                parameters,
                seed: a.seed,
                tool_version: TOOL_VERSION.into(),
                outputs: vec![out.display().to_string()],
                kernel: cfg,
            },
        )?;
    }
    if (est.mean - 1.0).abs() <= 3.0 * est.stderr {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "|mean - 1| = {:.3e} exceeds 3*stderr = {:.3e}",
            (est.mean - 1.0).abs(),
            3.0 * est.stderr
        )))
    }
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::KernelEval(a) => cmd_kernel_eval(a),
        Command::PdeCheck(a) => cmd_pde_check(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Commute(a) => cmd_commute(a),
        Command::Martingale(a) => cmd_martingale(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
