//! Constant, sparse, random ternary 1x1-convolutions for 1D time-channel
//! separable residual networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`weightgen`] synthesizes `{-1, 0, +1}` matrices from a 16-byte
//!   [`WeightSpec`](weightgen::WeightSpec), so a layer can be regenerated at
//!   any time instead of being stored.
//! - [`linalg`] applies those matrices without multiplications, in dense,
//!   index-pair, bitplane and on-the-fly representations that agree bit for bit.
//! - [`tcsconv`] holds the layers of a time-channel separable residual block
//!   with hand-written forward and backward passes.
//! - [`model`] builds `N x M x W` networks, counts their parameters and trains
//!   them on a synthetic sequence-classification task.
//! - [`bench`] measures kernels and reports static operation counts.
//! - [`cli`] is the command-line front end used by the `rtconv` binary.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod bench;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod tcsconv;
pub mod weightgen;

pub use error::{Error, Result};
