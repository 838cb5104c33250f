//! Entanglement in the ground state of finite harmonic chains and ion strings.
//!
//! The ground state is expanded over *local* number states (one oscillator per
//! site, each with a freely chosen frequency). On top of that expansion the
//! crate provides:
//!
//! * order-k two-mode squeezed states and fits of conditional states to them ([`tmss`]),
//! * entanglement entropy, the Wootters formula and convex-roof bounds ([`entmeas`]),
//! * number-basis heralding of central modes ([`herald`]),
//! * swap-type harvesting of mode excitations into qubits ([`harvest`]),
//! * local-frequency selection and heralded-entanglement maximization ([`tune`]),
//! * brute-force oracles used for cross-validation ([`oracle`]).
//!
//! Units follow the `ħ = m = 1` convention: chain frequencies are measured in
//! units of `√(k/m)` and trap frequencies in units of the axial frequency.

pub mod csv;
pub mod entmeas;
pub mod error;
pub mod gaussian;
pub mod harvest;
pub mod herald;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod tmss;
pub mod tune;

pub use error::{Error, Result};
pub use num_complex::Complex64;
