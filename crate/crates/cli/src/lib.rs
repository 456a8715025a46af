//! Experiment driver for the dispersive Maxwell solver in `coledg-core`:
//! TOML config resolution, deterministic artifact writers, and the five
//! experiments behind the `coledg` binary (quadrature fitting, mesh
//! refinement, energy decay, dispersion curves, and solver timing).

pub mod commands;
pub mod config;
pub mod fileio;
