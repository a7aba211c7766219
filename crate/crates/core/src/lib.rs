//! Unsupervised monaural dereverberation training at desk scale.
//!
//! The library builds a complete two-stage training pipeline around a small
//! hand-differentiated spectral-mapping network:
//!
//! 1. Stage one further reverberates each observed mixture with a synthetic
//!    statistical impulse response and trains the network to recover the
//!    original mixture.
//! 2. Stage two refines the result by self-distillation: an EMA teacher
//!    produces stable targets from a lightly-noised copy of the mixture while
//!    the student sees a physically-simulated relative reverb plus noise.
//!
//! Supporting modules provide the STFT machinery, room-impulse-response
//! synthesis and simulation, the reconstruction loss with analytic gradients,
//! evaluation metrics, and toy dataset construction.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rir;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
