//! Invertible hiding network and its building blocks.

pub mod conv;
pub mod coupling;
pub mod dense;
pub mod ffb;
pub mod invconv;
pub mod model;
pub mod secrets;
pub mod tensor;
pub mod wavelet;

pub use coupling::MixInit;
pub use model::{Concealed, EncodedImage, Hyper, PassOutput, Revealed, StegModel, CARRIER_CHANNELS};
pub use secrets::{ChannelLayout, SecretStack, MAX_DATA_CHANNELS, QR_CHANNEL, SECRET_CHANNELS};
pub use tensor::{Real, Tensor};
