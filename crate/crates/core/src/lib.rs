//! Simulator for an RF SQUID closed by a topological (Majorana) Josephson
//! junction.
//!
//! Energies are in GHz (E/h) and times in ns; a state evolves as
//! `i dψ/dt = 2π H ψ`. The phase `φ` lives on an extended, non-compact
//! grid so the 4π-periodic junction term and the loop inductance coexist.
//!
//! - [`model`]: circuit parameters and potentials of both fermion parities.
//! - [`spectral`]: finite-difference Hamiltonians and lowest eigenpairs.
//! - [`analysis`]: wells, barriers, anticrossings and closed-form estimates.
//! - [`dynamics`]: spinor wavefunctions, Cayley stepping, parity flips.
//! - [`protocol`]: the reset / quench / hold / readout experiment over shots.
//! - [`config`] and [`cli`]: TOML run files and the `topo-squid` front end.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod spectral;
