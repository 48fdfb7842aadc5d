//! Fast multipole evaluation of potentials of axisymmetric ring sources with
//! azimuthal Fourier modes.
//!
//! The modal Green's function of the Poisson equation in cylindrical
//! coordinates is `G_n(r, r1, x) = Q_{n-1/2}(chi) / (2 pi sqrt(r r1))`.
//! [`fmm::evaluate`] sums `Phi_n(r, z) = sum_q S_n,q G_n(r, r_q, z - z_q)`
//! over all ring sources `q` with a uniform quadtree, and
//! [`oracle::direct_evaluate`] does the same sum directly.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod exec;
pub mod fmm;
pub mod greens;
pub mod index;
pub mod oracle;
pub mod specfun;
pub mod stats;
pub mod tree;

pub use error::{FmmError, Result};
pub use exec::Execution;
pub use fmm::{evaluate, FmmConfig, ModalPotential, ModalRingSource, Truncation};
pub use tree::Point2;
