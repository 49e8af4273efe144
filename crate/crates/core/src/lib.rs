//! Numerical laboratory for gradient-descent training of deep ReLU networks
//! in the lazy (tangent-kernel) regime.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`] counter-based random streams, one per (purpose, layer, row);
//! - [`linalg`] dense row-major matrices, fixed-order reductions and power iteration;
//! - [`net`] the network, its symmetric initialisation, activation traces and gradients;
//! - [`checkpoint`] the binary checkpoint format;
//! - [`objective`] logistic risk, full-batch gradient descent and trajectory bookkeeping;
//! - [`data`] the noisy 2-XOR distribution and sphere samplers;
//! - [`margin`] tangent features, the min-norm-point margin solver and the reference model;
//! - [`probes`] measurements of the quantities the lazy-regime analysis bounds;
//! - [`lab`] configuration, run manifests and the experiment drivers behind the CLI.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod lab;
pub mod linalg;
pub mod margin;
pub mod net;
pub mod objective;
pub mod probes;
pub mod rng;

pub use error::{Error, Result};
