//! Multi-frame super-resolution toolkit for underground root imagery.
//!
//! The crate covers the whole pipeline: procedural root scenes
//! ([`synthgen`]), half-pixel shifted low-resolution bursts ([`burst`]),
//! phase-correlation registration ([`align`]), a burst-fusion super-resolution
//! network with its training loop ([`network`]), image quality metrics
//! ([`metrics`]) and root-hair trait measurement ([`traits`]).
//!
//! All pixel data is held as `f64` in `[0, 1]` inside [`imageops::ImageBuffer`];
//! 8-bit values only exist at the PNG boundary.

// `!(x > 0.0)`-style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod burst;
pub mod error;
pub mod imageops;
pub mod metrics;
pub mod network;
pub mod parallel;
pub mod synthgen;
pub mod traits;

pub use error::{Error, Result};
pub use imageops::{ImageBuffer, Rect};
pub use parallel::Exec;
