//! Link-level simulation and analysis of random time-hopping impulse radio
//! and random CDMA multiple access.
//!
//! The total processing gain `N` is split into pulses per symbol `N_f` and
//! chips per frame `N_c` (`N = N_f * N_c`). `N_c = 1` is random CDMA, small
//! `N_f` is a classic low pulse rate impulse radio system. The crate
//! provides:
//!
//! * [`model`]: configuration, hopping sequences and spreading algebra,
//! * [`channel`]: flat and frequency-selective chip-rate received signals,
//! * [`detectors`]: MF, ZF, MMSE and exhaustive ML multiuser detectors,
//! * [`analysis`]: closed-form BER approximations and condition checkers,
//! * [`stats`]: empirical checks of the asymptotic interference laws,
//! * [`montecarlo`]: seeded, thread-count independent BER estimation.

pub mod analysis;
pub mod channel;
pub mod detectors;
mod error;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
