//! Exact dynamics of two coupled spins-1/2 interacting with a finite,
//! thermalized spin bath.
//!
//! The joint register holds `N = m + 2` spins. Spins 1 and 2 form the
//! subsystem, spins 3..N the bath. Basis states are indexed big-endian:
//! spin 1 is the most significant bit, and bit value 1 is spin "up"
//! (the +1 eigenstate of σ_z).
//!
//! Layout:
//! - [`hilbert`]: state vectors and matrix-free single-site Pauli action.
//! - [`hamiltonian`]: the model Hamiltonian as a Pauli term list.
//! - [`thermal`]: bath diagonalization, Boltzmann weights, truncation.
//! - [`propagator`]: Laguerre-series time stepping and a dense oracle.
//! - [`observables`]: reduced density matrices, correlations, concurrence.
//! - [`bath_order`]: x-basis ordering probabilities of the bath.
//! - [`driver`]: run configuration, ensemble orchestration, sweeps, output.

pub mod bath_order;
pub mod driver;
pub mod error;
pub mod hamiltonian;
pub mod hilbert;
pub mod observables;
pub mod parallel;
pub mod propagator;
pub mod thermal;

pub use error::{Result, SimError};
pub use hamiltonian::{ModelSpec, OperatorPart};
pub use hilbert::{PauliAxis, SiteIndex, StateVector};
pub use parallel::Parallelism;

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
