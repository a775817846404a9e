//! Numerical toolkit for the no-arbitrage spectrum of continuous semimartingale
//! markets.
//!
//! The crate simulates the model zoo, extracts drift and diffusion rates along
//! paths, builds the minimal martingale deflator and the explicit arbitrage
//! strategies, and combines the evidence into NIP / NSA / NA1 / NFLVR verdicts.
//!
//! It is `no_std` and only needs `alloc`. Enable the `parallel` feature to
//! spread path simulation over a rayon pool; results are bit-identical either
//! way because every path draws from its own counter-addressed stream.
#![no_std]
// NaN must fail range checks, so `!(x > y)` is intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "parallel")]
extern crate std;

pub mod characteristics;
pub mod classifier;
pub mod deflators;
mod error;
pub mod grid;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod special;
pub mod stats;
pub mod strategies;

pub use error::{Error, Result};
