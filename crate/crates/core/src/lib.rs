//! Delay-Doppler link-level simulation and diversity analysis for OTFS modulation.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: frame geometry, constellations, delay-Doppler frames.
//! * [`channel`]: sparse delay-Doppler channels and the effective `MN x MN` matrix.
//! * [`modem`]: ISFFT/SFFT, Heisenberg/Wigner, time-domain channel, phase rotation.
//! * [`detect`]: ML and MMSE detection over `y = Hx + v`.
//! * [`analysis`]: symbol matrices, rank enumeration, PEP and BER bounds, eigen-analysis.
//! * [`mimo`]: stacked MIMO channels and rank analysis.
//! * [`ofdm`]: the OFDM reference system.
//! * [`harness`]: configuration, seeded Monte Carlo sweeps, reports.

pub mod analysis;
pub mod channel;
pub mod detect;
pub mod error;
pub mod grid;
pub mod harness;
pub mod mimo;
pub mod modem;
pub mod ofdm;

pub use num_complex::Complex64;

pub use error::{OtfsError, Result};
pub use grid::{Alphabet, DDFrame, OtfsGrid};

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
