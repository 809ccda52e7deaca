//! Radial Kohn-Sham solver for single atoms (Z = 1..92): high-order spectral
//! finite elements on [0, R] combined with a parameter-free moving-mesh
//! (equidistribution) strategy, LDA exchange-correlation (Slater + VWN), and
//! a preconditioned LOBPCG eigensolver.
//!
//! The crate is organized along the solver pipeline:
//!
//! - [`quadrature`]: Gauss-Legendre rules and Lobatto nodal bases
//! - [`mesh`]: the radial mesh, monitor function and equidistribution
//! - [`assembly`]: banded (H, M) pencils and the Hartree Poisson system
//! - [`eigensolve`]: LOBPCG, BiCG and dense test oracles
//! - [`xc`]: Slater exchange and VWN correlation
//! - [`atom_data`]: ground-state electron configurations
//! - [`scf`]: the self-consistent field and moving-mesh drivers

pub mod assembly;
pub mod atom_data;
mod error;
pub mod eigensolve;
pub mod mesh;
pub mod quadrature;
pub mod scf;
pub mod xc;

pub use error::{Error, Result};
