//! Sensing-matrix design and compressed-sensing simulation toolkit.
//!
//! The crate covers the full pipeline: sparse Gaussian source and channel
//! models, oracle-MSE lower bounds, the SDR / low-rank / power-rescale design
//! procedure with its closed-form special cases, multi-terminal (orthogonal
//! and coherent MAC) designs, practical decoders (OMP, random-OMP, exhaustive
//! MMSE), and a deterministic Monte-Carlo experiment harness with a CLI on
//! top.

pub mod bounds;
pub mod design;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod recon;
pub mod rng;
pub mod sdp;

pub use error::{Error, Result};
pub use linalg::Matrix;
