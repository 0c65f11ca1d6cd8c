//! Gaussian steady states of bosonic tight-binding lattices damped by a single
//! squeezed reservoir at one "drain" site.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: Hamiltonian builders (chains, Hofstadter, random bipartite),
//!   disorder, diagnostics and the lattice JSON format.
//! - [`spectral`]: eigenmodes, drain couplings, dark modes, chiral pairing and
//!   the non-Hermitian dynamical matrix with its secular equation.
//! - [`lyapunov`]: dense Sylvester/Lyapunov solvers used as fallbacks and oracles.
//! - [`steady`]: exact steady state, the closed-form chiral state, purity,
//!   Bogoliubov-mode residuals and time evolution of the second moments.
//! - [`symmetry`]: named particle-hole symmetry matrices and their certification.
//! - [`entanglement`]: two-site reductions, log-negativity, mirrored-pair
//!   averages and nullifiers.
//! - [`ensemble`]: seeded disorder and loss sweeps.
//!
//! Energies and rates are in units of the hopping `J = 1`. Quadratures follow
//! `x = (a + a†)/√2`, `p = (a − a†)/(i√2)`, so the vacuum covariance is `I/2`.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod entanglement;
pub mod error;
pub mod io;
pub mod lattice;
pub mod lyapunov;
pub mod spectral;
pub mod steady;
pub mod symmetry;

mod linalg;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<C64>;
