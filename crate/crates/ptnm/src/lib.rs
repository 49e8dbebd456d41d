//! Process tensors for two-step open quantum dynamics.
//!
//! The crate builds Choi-form process tensors from a system-environment
//! unitary model, checks the exact conditions for Markovianity, for the
//! absence of information backflow through the reduced environment state
//! (IBTRES) and for the absence of system-environment correlation effects
//! (SECE), and computes the matching trace-distance measures by alternating
//! convex minimization.
//!
//! Modules, bottom up:
//! - [`linalg`]: dense complex matrices, labeled tensor factors, spectra.
//! - [`quantum`]: states, Choi-form maps and random generators.
//! - [`proctensor`]: one- and two-step process tensors.
//! - [`criteria`]: residuals for each membership condition.
//! - [`optim`]: projections, distance minimizers and a random-search oracle.
//! - [`models`]: parameterized unitary models.

pub mod criteria;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod proctensor;
pub mod quantum;
