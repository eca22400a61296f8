//! Stochastic zig-zag (run-and-tumble) Bohmian dynamics for spin-1/2
//! particles in a time-gated Stern-Gerlach apparatus.
//!
//! The crate is organized around the pipeline:
//!
//! * [`states`] — closed-form Pauli spinors (Gaussian packets with exact
//!   log-coefficients), their gradients and the field-gated z branches;
//! * [`guidance`] — velocity, chirality jump rate and spin vector fields
//!   derived from a spinor;
//! * [`sampling`] — quantum-equilibrium initial conditions;
//! * [`integrator`] — adaptive Cash-Karp drift with Bernoulli chirality
//!   flips, trajectory records and the deterministic batch runner;
//! * [`scenarios`] — parameter-pinned experiment definitions (single
//!   particle, weighted spin, free and measured entangled pairs) and the
//!   effective-collapse comparison;
//! * [`analysis`] — outcome statistics, equivariance (KS) tests, field
//!   maps and Fokker-Planck residuals;
//! * [`suite`] — the end-to-end verification checks used by the
//!   acceptance tests and the CLI `verify` subcommand.

pub mod analysis;
pub mod guidance;
pub mod integrator;
pub mod sampling;
pub mod scenarios;
pub mod states;
pub mod suite;
