//! Deep-transfer-learning intrusion detection for IoT telemetry.
//!
//! The crate covers the whole workflow: synthetic telemetry generation
//! ([`synthgen`]), data preparation ([`pipeline`]), residual 1-D CNNs and
//! their kernels ([`network`], [`ops`]), single-to-multi-channel weight
//! transfer ([`transfer`]) and the training and evaluation harness
//! ([`training`]). The `dtlids` binary drives it from the command line.

pub mod cli;
pub mod error;
pub mod kv;
pub mod network;
pub mod ops;
pub mod pipeline;
pub mod synthgen;
pub mod tensor;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
pub use network::Network;
pub use tensor::Tensor;

/// Label of normal traffic; attacks are [`LABEL_ATTACK`].
pub const LABEL_NORMAL: usize = 1;
pub const LABEL_ATTACK: usize = 0;

/// One-line statement of the label convention, written into report headers.
pub const LABEL_CONVENTION: &str = "normal=1,attack=0";
