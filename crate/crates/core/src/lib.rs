//! Search over GAN loss functions represented as expression trees.
//!
//! The crate is split along the pipeline: [`expr`] defines protected-arithmetic
//! expression trees (generation, parsing, symbolic differentiation), [`losses`]
//! wraps closed-form losses and tree losses behind one interface, [`genetics`]
//! runs the evolutionary search, [`gan`] trains small dense GANs from scratch to
//! score candidate losses, and [`metrics`] measures the resulting sample
//! distributions.
//!
//! Everything here is deterministic given a seed and works without the standard
//! library (`default-features = false`); allocation is required.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod expr;
pub mod gan;
pub mod genetics;
pub mod losses;
pub mod metrics;

mod seed;

pub use seed::derive_seed;
