//! Multi-scale, high-frequency-aware image enhancement.
//!
//! The crate carries its own small autodiff engine ([`tensor`]) and builds the
//! enhancement network ([`network`]) from an edge filter bank ([`edge`]),
//! channel and feature attention ([`attention`]), a learned high-pass loss
//! ([`highpass`]) and soft gradient-magnitude-similarity masking ([`gms`]).

pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod edge;
pub mod error;
pub mod filter;
pub mod gms;
pub mod highpass;
pub mod metrics;
pub mod network;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tape, Tensor, Var};
