use alloc::format;
use alloc::vec::Vec;

use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Error, Result};

/// Maximum number of data-image channels hidden next to the QR channel.
pub const MAX_DATA_CHANNELS: usize = 3;
/// Total number of secret channels seen by the network.
pub const SECRET_CHANNELS: usize = 4;
/// Index of the QR channel inside the secret stack.
pub const QR_CHANNEL: usize = 3;

/// Which secret channels carry payload.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ChannelLayout {
    pub data_channels: usize,
    pub qr: bool,
}

impl ChannelLayout {
    pub fn new(data_channels: usize, qr: bool) -> Result<Self> {
        if data_channels > MAX_DATA_CHANNELS {
            return Err(Error::Capacity {
                what: "data-image channels".into(),
                required: data_channels,
                available: MAX_DATA_CHANNELS,
            });
        }
        Ok(Self { data_channels, qr })
    }

    /// Populated flag per secret channel (data channels 0..3, QR channel 3).
    pub fn mask(&self) -> [bool; SECRET_CHANNELS] {
        let mut m = [false; SECRET_CHANNELS];
        for flag in m.iter_mut().take(self.data_channels) {
            *flag = true;
        }
        m[QR_CHANNEL] = self.qr;
        m
    }

    pub fn populated(&self) -> usize {
        self.data_channels + usize::from(self.qr)
    }
}

/// Secret input of the network: up to three data images and one (already
/// scaled) QR image, zero-padded to the carrier size.
#[derive(Clone, Debug, PartialEq)]
pub struct SecretStack<T> {
    planes: Tensor<T>,
    layout: ChannelLayout,
}

fn place<T: Real>(dst: &mut Tensor<T>, channel: usize, src: &Tensor<T>) -> Result<()> {
    if src.channels() != 1 {
        return Err(shape_err("secret planes must be single-channel"));
    }
    if src.height() > dst.height() || src.width() > dst.width() {
        return Err(Error::Capacity {
            what: format!("secret plane {}x{}", src.height(), src.width()),
            required: src.height().max(src.width()),
            available: dst.height().min(dst.width()),
        });
    }
    for y in 0..src.height() {
        for x in 0..src.width() {
            dst.set(channel, y, x, src.get(0, y, x));
        }
    }
    Ok(())
}

impl<T: Real> SecretStack<T> {
    /// Pads each plane into the top-left corner of a `height x width` canvas.
    pub fn new(height: usize, width: usize, data: &[Tensor<T>], qr: Option<&Tensor<T>>) -> Result<Self> {
        let layout = ChannelLayout::new(data.len(), qr.is_some())?;
        let mut planes = Tensor::zeros(SECRET_CHANNELS, height, width);
        for (i, plane) in data.iter().enumerate() {
            place(&mut planes, i, plane)?;
        }
        if let Some(q) = qr {
            place(&mut planes, QR_CHANNEL, q)?;
        }
        Ok(Self { planes, layout })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            planes: Tensor::zeros(SECRET_CHANNELS, height, width),
            layout: ChannelLayout::default(),
        }
    }

    /// Wraps a 4-channel tensor; channels outside the layout are zeroed.
    pub fn from_tensor(mut planes: Tensor<T>, layout: ChannelLayout) -> Result<Self> {
        if planes.channels() != SECRET_CHANNELS {
            return Err(shape_err(format!(
                "secret stack needs {SECRET_CHANNELS} channels, got {}",
                planes.channels()
            )));
        }
        for (c, used) in layout.mask().iter().enumerate() {
            if !used {
                planes.plane_mut(c).iter_mut().for_each(|v| *v = T::zero());
            }
        }
        Ok(Self { planes, layout })
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.planes
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.planes.height(), self.planes.width())
    }

    pub fn data_channel(&self, i: usize) -> &[T] {
        self.planes.plane(i)
    }

    pub fn qr_channel(&self) -> &[T] {
        self.planes.plane(QR_CHANNEL)
    }

    /// Crops channel `c` to `h x w` from the top-left corner.
    pub fn crop(&self, c: usize, h: usize, w: usize) -> Vec<T> {
        let src = self.planes.plane(c);
        let width = self.planes.width();
        (0..h).flat_map(|y| src[y * width..y * width + w].iter().copied()).collect()
    }
}
