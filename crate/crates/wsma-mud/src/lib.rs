//! Link-level simulator and detector library for uplink WSMA-NOMA.
//!
//! The crate covers the full receive chain for symbol-level multiuser
//! detection of spread non-orthogonal uplink transmissions:
//!
//! * [`signatures`] — design of low-correlation signature sequences
//!   (Welch-bound-equality sets and equiangular Grassmann line packings),
//! * [`constellation`] — normalized square-QAM alphabets and the joint
//!   transmit-symbol enumeration,
//! * [`channel`] — i.i.d. Rayleigh fading, effective spread channels and
//!   noisy received frames,
//! * [`detectors`] — classical multiuser detectors (exhaustive ML, matched
//!   filter, iterative MF-PIC, joint MMSE),
//! * [`labels`] — bijective symbol/label codecs for the two classifier
//!   flavours (one-hot softmax and per-user binary sigmoid),
//! * [`nn`] — a from-scratch feed-forward engine (fully-connected and 2D
//!   convolutional layers, batch normalization, ReLU, softmax/sigmoid heads,
//!   analytic backpropagation, adaptive-moment optimizer),
//! * [`trainer`] — input preprocessing and the epoch-sampling training
//!   protocol for the neural detectors,
//! * [`bench`] — Monte-Carlo SER sweeps over detectors and SNR grids with
//!   CSV/gnuplot output,
//! * [`checkpoint`] — versioned model persistence.
//!
//! Everything is deterministic given a seed; see
//! [`numerics::RandomStream`].
//!
//! The `examples/` directory has one runnable program per capability, and
//! the `wsma-mud` binary exposes the same workflows as subcommands
//! (`sequences`, `train`, `evaluate`, `sweep`).

pub mod bench;
pub mod channel;
pub mod checkpoint;
pub mod constellation;
pub mod detectors;
pub mod error;
pub mod labels;
pub mod nn;
pub mod numerics;
pub mod signatures;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, RandomStream};
