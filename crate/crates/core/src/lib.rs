//! # dismetrics
//!
//! Information-theoretic disentanglement metrics for encoders with diagonal
//! Gaussian posteriors `q(z_i | x) = N(mu_i, sigma_i)`.
//!
//! All raw scores are in nats. Two estimator families are provided:
//!
//! - **quantization** ([`quantizer`]): every scalar latent is discretized onto
//!   a shared [`QuantizationGrid`]; entropies and mutual informations are
//!   computed from the resulting probability tables. Used for
//!   informativeness, MISJED, RMIG, JEMMIG and modularity.
//! - **sampling** ([`sampler`]): Monte Carlo estimates of differential
//!   entropies of the aggregate posterior over arbitrary latent subsets,
//!   with the inner mixture density accumulated in the log domain. Used for
//!   SEPIN/WSEPIN and INDIN/WINDIN.
//!
//! The [`oracle`] module builds small discrete worlds whose quantized
//! quantities can be enumerated exactly, and is used to validate both
//! families. [`report`] ties everything together into a serializable
//! [`report::MetricReport`].
//!
//! ## Determinism
//!
//! Every sum over data points goes through a fixed-point accumulator
//! ([`accum::ExactSum`]), so results do not depend on the order of the
//! samples or on the rayon thread count.

// `!(x > y)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accum;
pub mod data;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod quantizer;
pub mod report;
pub mod sampler;
pub mod special;

mod error;

pub use data::{empirical_factor_entropy, BinMethod, EvalConfig, FactorTable, PosteriorSet, QuantizationGrid};
pub use error::{Error, Result};
pub use quantizer::{JointPmf, Pmf};
pub use sampler::{LatentSubset, McEstimate};
