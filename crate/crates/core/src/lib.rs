//! Event-triggered consensus for heterogeneous linear multi-agent systems.
//!
//! Agents share a state matrix `A` but have their own input matrices `B_i`.
//! Each agent broadcasts its state only when its measurement error outgrows
//! a fraction `φ` of its local disagreement. Control gains `K_i` and the
//! threshold `φ` are co-designed by one semidefinite program on the reduced
//! (consensus-to-stability) system.
//!
//! Modules, bottom-up:
//! - [`matkit`]: dense matrices, Kronecker products, pseudo-inverse, eigen.
//! - [`topology`]: Laplacians, spanning trees, the reduced Laplacian bundle.
//! - [`lmi`]: a small log-det barrier SDP solver.
//! - [`synthesis`]: LMI assembly, gain/threshold extraction, certificates.
//! - [`etsim`]: the event-triggered closed-loop simulator.
//! - [`lab`]: configuration, pipeline, sweeps, Monte-Carlo, reports.

pub mod error;
pub mod etsim;
pub mod lab;
pub mod matkit;
pub mod lmi;
pub mod synthesis;
pub mod topology;

pub use error::{Error, Result};
pub use matkit::Mat;
