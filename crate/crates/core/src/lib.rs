//! Voronoi-gated probabilistic circuits.
//!
//! The crate covers circuit construction and evaluation, the geometry of
//! Voronoi cells, certified bounds on normalizers and marginals, exact
//! inference for hierarchical factorized gating, soft-gate training and the
//! synthetic dataset generators. Everything here is `no_std` with `alloc`;
//! file formats and the command line live in the `vtpc` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod builder;
pub mod certified;
pub mod circuit;
pub mod data;
pub mod error;
pub mod geometry;
pub mod hfv;
pub mod math;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
