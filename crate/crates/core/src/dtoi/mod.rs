//! Data-to-image transforms.
//!
//! Continuous fields are min-max normalized and stitched into at most three
//! grayscale channels. Discrete 2-D point sets are sorted, grouped, normalized
//! and reshaped into an x-image and a y-image, then smoothed by inserting `K`
//! linearly interpolated pixels between neighbours. Both directions are exact
//! inverses up to float rounding; 8-bit storage adds at most one quantization
//! step of `(max - min) / 255` per element.

use alloc::vec;
use alloc::vec::Vec;

mod continuous;
mod discrete;
mod pack;

pub use continuous::{dtoi_continuous, inverse_dtoi_continuous, normalize_planes};
pub use discrete::{
    discrete_images, dtoi_discrete, dtoi_discrete_fitted, inverse_dtoi_discrete, max_points, split_discrete, Part,
};
pub use pack::{pack_shelves, Rect};

use crate::error::{Error, Result};

/// Maximum number of data-image channels.
pub const MAX_CHANNELS: usize = crate::stegnet::MAX_DATA_CHANNELS;

/// Row-major real-valued 2-D array.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(crate::error::shape_err(alloc::format!(
                "{} values do not fill a {height}x{width} plane",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    /// Copy of the `h x w` window at `(row, col)`.
    pub fn window(&self, row: usize, col: usize, h: usize, w: usize) -> Self {
        let mut out = Self::zeros(h, w);
        for r in 0..h {
            out.data[r * w..(r + 1) * w].copy_from_slice(&self.data[(row + r) * self.width + col..][..w]);
        }
        out
    }

    pub fn blit(&mut self, src: &Plane, row: usize, col: usize) {
        for r in 0..src.height {
            self.data[(row + r) * self.width + col..][..src.width]
                .copy_from_slice(&src.data[r * src.width..(r + 1) * src.width]);
        }
    }

    /// Rounds every value to the nearest 8-bit level and back.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| dequantize(quantize(v))).collect(),
        }
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

#[inline]
pub fn dequantize(q: u8) -> f64 {
    f64::from(q) / 255.0
}

/// Min-max normalization constants. `max == min` marks a degenerate plane
/// that is stored as zeros and restored as the constant `min`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norm {
    pub min: f64,
    pub max: f64,
}

impl Norm {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Self { min, max }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Where a plane sits inside the data-image channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Placement {
    fn overlaps(&self, o: &Placement) -> bool {
        self.channel == o.channel
            && self.row < o.row + o.height
            && o.row < self.row + self.height
            && self.col < o.col + o.width
            && o.col < self.col + self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanePlan {
    pub norm: Norm,
    pub placement: Placement,
}

/// One sorted-and-interpolated piece of a discrete set.
#[derive(Clone, Debug, PartialEq)]
pub struct PartPlan {
    pub n_points: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Number of replicas of the last sorted point appended before grouping.
    pub pad_count: usize,
    /// Column of the first replica inside the last group after its sort.
    pub pad_start: usize,
    pub x_norm: Norm,
    pub y_norm: Norm,
    pub x_at: Placement,
    pub y_at: Placement,
}

/// Everything needed to invert a data-to-image transform.
#[derive(Clone, Debug, PartialEq)]
pub enum DataImagePlan {
    Continuous { planes: Vec<PlanePlan> },
    Discrete { k: usize, parts: Vec<PartPlan> },
}

impl DataImagePlan {
    pub fn placements(&self) -> Vec<Placement> {
        match self {
            Self::Continuous { planes } => planes.iter().map(|p| p.placement).collect(),
            Self::Discrete { parts, .. } => parts.iter().flat_map(|p| [p.x_at, p.y_at]).collect(),
        }
    }

    /// Number of data-image channels the plan refers to.
    pub fn channel_count(&self) -> usize {
        self.placements().iter().map(|p| p.channel + 1).max().unwrap_or(0)
    }

    /// Number of pixels holding original values (excludes interpolated and
    /// padding pixels).
    pub fn payload_pixels(&self) -> usize {
        match self {
            Self::Continuous { planes } => planes.iter().map(|p| p.placement.height * p.placement.width).sum(),
            Self::Discrete { parts, .. } => parts.iter().map(|p| 2 * p.n_points).sum(),
        }
    }

    /// Checks that placements are finite, non-overlapping and inside
    /// `channels` images of `h x w`.
    pub fn validate(&self, channels: usize, h: usize, w: usize) -> Result<()> {
        let corrupt = |msg: alloc::string::String| Err(Error::CorruptPlan(msg));
        let placements = self.placements();
        for (i, p) in placements.iter().enumerate() {
            if p.channel >= channels || p.row + p.height > h || p.col + p.width > w {
                return corrupt(alloc::format!(
                    "placement {i} ({}x{} at channel {}, row {}, col {}) lies outside {channels} images of {h}x{w}",
                    p.height,
                    p.width,
                    p.channel,
                    p.row,
                    p.col
                ));
            }
            if placements[..i].iter().any(|q| q.overlaps(p)) {
                return corrupt(alloc::format!("placement {i} overlaps an earlier one"));
            }
        }
        let norms: Vec<Norm> = match self {
            Self::Continuous { planes } => planes.iter().map(|p| p.norm).collect(),
            Self::Discrete { parts, .. } => parts.iter().flat_map(|p| [p.x_norm, p.y_norm]).collect(),
        };
        if norms.iter().any(|n| !n.min.is_finite() || !n.max.is_finite() || n.max < n.min) {
            return corrupt("normalization constants must be finite with max >= min".into());
        }
        Ok(())
    }
}
