//! End-to-end simulation of a learned optical IM/DD link.
//!
//! The crate has two transmission systems sharing one channel model:
//!
//! * an autoencoder built from bidirectional recurrent networks at the
//!   transmitter and receiver, trained through the channel and operated
//!   with a sliding-window sequence estimator ([`autoencoder`],
//!   [`trainer`], [`estimator`], [`labeling`]);
//! * a Gray-mapped PAM transmitter with a Viterbi maximum-likelihood
//!   sequence detector as the classic DSP baseline ([`mlsd`]).
//!
//! [`channel`] implements the dispersive fiber link with square-law
//! detection as a differentiable forward map, [`complexity`] the
//! closed-form FLOPS-per-decoded-bit accounting, and [`harness`] the
//! experiment orchestration (config files, sweeps, CSV/SVG emission).

pub mod autoencoder;
pub mod channel;
pub mod complexity;
pub mod estimator;
pub mod harness;
pub mod labeling;
pub mod math;
pub mod mlsd;
pub mod rng;
pub mod trainer;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
