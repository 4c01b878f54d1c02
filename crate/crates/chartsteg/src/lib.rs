//! Hide chart data and chart information inside chart images, and get them
//! back out.

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod image_io;
pub mod pipeline;
pub mod qr;
pub mod synth;
pub mod train;

pub use error::{AppError, Result};
