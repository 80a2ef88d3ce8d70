//! Joint design of constant-modulus transmit waveforms and receive filters for a
//! MIMO dual-function radar-communication system operating in clutter.
//!
//! The library maximizes radar output SINR subject to per-user communication
//! synthesis-error budgets, alternating a closed-form receive-filter update with a
//! fractional-programming waveform update (Dinkelbach transform, ADMM splitting, and
//! majorization-minimization on the unimodular subproblem). Evaluation helpers cover
//! beampatterns, detection probability, achievable rates, and Monte-Carlo symbol
//! error rates.

pub mod comms;
pub mod detect;
pub mod error;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub type CVector = nalgebra::DVector<Complex64>;
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Power/SINR in decibels (10·log10).
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Inverse of `to_db`.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
