//! Exact decoherence dynamics of qubits coupled to a non-Markovian
//! squeezed-vacuum reservoir.
//!
//! The single-qubit master equation is solved through a disentangled
//! product of exponentials ([`propagator`]) and cross-checked against a
//! direct integration of the same equation ([`oracle`]). Two identical,
//! independent qubits are then combined in [`entanglement`] to follow the
//! concurrence of Bell-like states, and [`sweep`] drives parameter scans.

pub mod coefficients;
pub mod entanglement;
pub mod ode;
pub mod oracle;
pub mod propagator;
pub mod quadrature;
pub mod sweep;

pub use coefficients::ReservoirParams;
pub use entanglement::{BellFamily, BellFamilyState, TwoQubitDensity};
pub use ode::Tolerances;
pub use propagator::{QubitDensity, SingleQubitMap};
