//! Spectral solver and Monte-Carlo experiment harness for the stochastic
//! Cahn-Hilliard equation
//!
//! ```text
//! du = Δ(-εΔu + f(u)/ε) dt + ε^γ dW,   f(u) = u³ - u,
//! ```
//!
//! on `[0,1]^d` (d = 2, 3) with homogeneous Neumann boundary conditions and
//! additive discrete space-time white noise.
//!
//! The crate provides
//!
//! * cosine-spectral fields on cell-centered grids, with the Neumann
//!   Laplacian, its inverse and fractional powers, and the `L^p`/`H^s`/`H^-1`
//!   norms of the energy framework ([`field`], [`grid`]),
//! * nodal-hat approximations of space-time white-noise increments with
//!   reproducible counter-keyed sampling ([`noise`], [`rng`]),
//! * the implicit structure-preserving time steppers: the full stochastic
//!   scheme, its deterministic twin, the linear (stochastic-convolution)
//!   scheme and the random-PDE scheme solved by convex minimization
//!   ([`stepper`]),
//! * energy/error/event-set diagnostics and zero-level-set extraction
//!   ([`diagnostics`], [`levelset`]),
//! * trajectory/ensemble runners and parameter studies ([`harness`]),
//! * a thin command-line front end ([`cli`]).
//!
//! See the crate examples for one runnable program per capability.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod double_well;
pub mod field;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod initial;
pub mod levelset;
pub mod noise;
pub mod rng;
pub mod stepper;
mod transform;

pub use config::{EventKnobs, SolverConfig};
pub use field::{Field, Spectrum};
pub use grid::{make_grid, EigenvalueVariant, Grid};
pub use noise::{make_noise_mesh, sample_increment, NoiseIncrement, NoiseMesh};

