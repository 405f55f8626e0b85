//! Annulus Loewner evolutions and the commutation-coupling toolbox.
//!
//! This crate implements, numerically:
//!
//! * the elliptic kernels **S**, **S_I**, **H**, **H_I** with derivatives,
//!   the Taylor coefficient r(p) and its antiderivative R(p) ([`kernels`]);
//! * radial / whole-plane / annulus / disc / strip Loewner equations, their
//!   covering and inverted variants, boundary derivative jets, traces and
//!   capacities ([`loewner`]);
//! * the catalog of annulus drift functions Λ(p,x) for κ = 0, 2, 3, 4, 16/3,
//!   the radial/strip marked-point drifts, dual functions, the Θ and Γ̂
//!   special-function families, the Γ construction, and PDE-residual audits
//!   ([`drifts`]);
//! * SDE drivers: Brownian paths, annulus SLE(κ,Λ) via the coupled f/q
//!   system, whole-plane B^(κ), marked radial/strip drivers, and an
//!   approximate stationary disc-SLE driver ([`sde`]);
//! * the two-time ensemble: image chains ζ, the modulus m(t₁,t₂), the
//!   quantities X, A, Q, F, Y assembled into the martingale observable M,
//!   Monte-Carlo estimation of E[M] = 1, and the κ=0 commutation check
//!   ([`ensemble`]).
//!
//! Start with the `examples/` directory: each example is a runnable tour of
//! one capability, from kernel evaluation to the martingale experiment.

pub mod drifts;
pub mod ensemble;
pub mod jet;
pub mod kernels;
pub mod loewner;
pub mod quad;
pub mod sde;

pub use kernels::{KernelConfig, KernelError};
