//! Privacy-aware complex event processing over multilayered stream networks.
//!
//! The crate evaluates sequence-pattern queries over activity event streams
//! and applies three privacy-preserving mechanisms around that pipeline:
//! sliding-window differential-privacy sanitization of pattern-count series
//! ([`dp`]), policy-driven query rewriting and access control ([`policy`],
//! [`access`]), and trust-constrained operator placement over a layered
//! topology ([`placement`]). An honest-but-curious adversary harness
//! ([`adversary`], [`synth`]) measures what each mechanism buys and costs.
//!
//! Everything here is deterministic given a seed and runs without the
//! standard library (allocation is required).

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod access;
pub mod adversary;
pub mod cep;
pub mod dp;
pub mod event;
pub mod placement;
pub mod policy;
pub mod query;
pub mod rng;
pub mod synth;
