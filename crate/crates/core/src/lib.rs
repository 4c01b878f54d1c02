//! Core of a chart steganography toolkit.
//!
//! Chart data is turned into grayscale data images ([`dtoi`]), chart
//! information and the data-image plan are serialized into a text blob
//! ([`payload`]), and an invertible hiding network ([`stegnet`]) conceals the
//! resulting secret channels inside the chart raster and reveals them again.
//! [`trainer`] holds the losses, the optimizer and the synthetic corpus
//! generators; [`metrics`] the quality and capacity measurements.
//!
//! The crate only needs `alloc`. The default `std` feature enables runtime
//! CPU feature detection in the matrix kernels.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dtoi;
pub mod error;
pub mod metrics;
pub mod payload;
pub mod stegnet;
pub mod trainer;

pub use error::{Error, Result};
