//! Fisher information rates for sequentially measured quantum probes.
//!
//! A probe evolving under a Lindblad generator is measured stroboscopically.
//! Projective (or subspace-resolving) measurements turn the outcome record
//! into a first-order Markov chain whose transition matrix `P(k|k')` carries
//! all the information about the unknown parameter. This crate builds that
//! chain, evaluates the stationary and conditional Fisher informations
//! `F_1` and `F_{2|1}`, optimizes waiting-time schedules (including
//! outcome-conditioned feedback), and checks the Cramér-Rao rate by
//! brute-force enumeration and Monte-Carlo estimation.
//!
//! Matrices of transition probabilities are column-stochastic everywhere:
//! entry `(k, k')` is the probability of outcome `k` given previous outcome `k'`.

pub mod chain;
pub mod channels;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod models;
pub mod qcore;
pub mod scan;

pub use error::{Error, Result};
