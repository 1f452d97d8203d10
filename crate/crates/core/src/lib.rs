//! Code-expanded random access: analysis, simulation and codebook planning.
//!
//! Users contend by sending one codeword across the `L` sub-frames of a
//! virtual frame. In the reference scheme a codeword is a single preamble in
//! a single sub-frame; in the expanded scheme every sub-frame carries a
//! preamble or nothing. The base station only sees which preambles occur in
//! each sub-frame, so expanded observations can imply phantom codewords that
//! nobody sent.
//!
//! - [`codebook`]: codeword spaces, sizes, enumeration and sampling.
//! - [`analytic`]: closed-form singles/collisions and reference efficiency.
//! - [`chain`]: the observation Markov chain giving the expected perceived count.
//! - [`simulator`]: Monte Carlo trials and exact brute-force expectations.
//! - [`planner`]: crossovers and load-adaptive codebook schedules.

pub mod analytic;
pub mod chain;
pub mod codebook;
pub mod error;
pub mod planner;
pub mod simulator;

pub use codebook::{CodebookSpec, Codeword, Mode};
pub use error::{Error, Result};
