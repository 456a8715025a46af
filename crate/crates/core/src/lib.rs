//! Fast time-domain solver for 1-D Maxwell's equations in a Cole-Cole dispersive medium.
//!
//! The Cole-Cole polarization law couples the electric field to the polarization
//! through a Caputo fractional derivative of order `alpha in (0,1)`. Convolving
//! with the full history makes naive time stepping quadratic in the step count,
//! so this crate replaces the fractional derivative by its diffusive
//! representation: a continuum of first-order relaxation modes with density
//! `sin(pi*alpha)/pi * lambda^(alpha-1)`, collapsed to `L` discrete poles whose
//! weights and abscissae are calibrated per frequency band. Each pole evolves by
//! a local ODE, giving O(L) work per step and no stored history.
//!
//! Pieces, bottom up:
//!
//! - [`material`]: Cole-Cole material parameters and the scalar fractional-calculus
//!   helpers used by the tests and the direct scheme.
//! - [`quadopt`]: pole calibration — modified Gauss-Jacobi initialization plus a
//!   constrained least-squares fit of the approximate susceptibility over a band.
//! - [`dgcore`]: the discontinuous Galerkin space — uniform periodic mesh,
//!   orthonormal Legendre modal basis, upwind-flux derivative operators,
//!   and the L2 / Gauss-Radau projections.
//! - [`stepper`]: BDF2 time integration of the coupled field/polarization/pole
//!   system with the auxiliary unknowns eliminated per step.
//! - [`oracle`]: the direct L1 (history-convolution) discretization of the same
//!   semi-discrete system, kept as an independently coded cross-check.
//! - [`diagnostics`]: discrete energies, the decay-rate identity, dispersion
//!   curves, L2 errors, and mesh-refinement studies.
//! - [`scenarios`]: ready-made experiment setups (manufactured solution with
//!   known exact fields; standing-wave decay run).
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature simply switches float math from libm to the faster intrinsics.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dgcore;
pub mod diagnostics;
pub mod linalg;
pub mod material;
pub mod math;
pub mod oracle;
pub mod quadopt;
pub mod scenarios;
pub mod stepper;
