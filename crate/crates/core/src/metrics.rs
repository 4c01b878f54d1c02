//! Quality and capacity measurements: PSNR, SSIM, RMSE, text recovery
//! accuracy and bits per pixel.
//!
//! Images are flat `CHW` buffers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(shape_err(alloc::format!("metric inputs have {a} and {b} elements")));
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Peak value used by [`psnr`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PsnrMode {
    /// 8-bit images, peak 255.
    EightBit,
    /// Float images in `[0, 1]`, peak 1.
    Unit,
}

impl PsnrMode {
    pub fn peak(self) -> f64 {
        match self {
            Self::EightBit => 255.0,
            Self::Unit => 1.0,
        }
    }
}

/// `10 log10(peak^2 / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64], mode: PsnrMode) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let m = mse(a, b);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = mode.peak();
    Ok(10.0 * libm::log10(peak * peak / m))
}

pub fn psnr_u8(a: &[u8], b: &[u8]) -> Result<f64> {
    let fa: Vec<f64> = a.iter().map(|&v| f64::from(v)).collect();
    let fb: Vec<f64> = b.iter().map(|&v| f64::from(v)).collect();
    psnr(&fa, &fb, PsnrMode::EightBit)
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(libm::sqrt(mse(a, b)))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted filter over every full window position.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, averaged over window positions and channels.
pub fn ssim(a: &[f64], b: &[f64], channels: usize, h: usize, w: usize, data_range: f64) -> Result<f64> {
    check_len(a.len(), b.len())?;
    if a.len() != channels * h * w {
        return Err(shape_err("ssim buffer does not match the declared dimensions"));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err(alloc::format!("ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    let k = gaussian_window();
    let c1 = (0.01 * data_range) * (0.01 * data_range);
    let c2 = (0.03 * data_range) * (0.03 * data_range);
    let plane = h * w;
    let mut total = 0.0;
    for c in 0..channels {
        let x = &a[c * plane..(c + 1) * plane];
        let y = &b[c * plane..(c + 1) * plane];
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter_valid(x, h, w, &k), filter_valid(y, h, w, &k));
        let (sxx, syy, sxy) = (filter_valid(&xx, h, w, &k), filter_valid(&yy, h, w, &k), filter_valid(&xy, h, w, &k));
        let mut sum = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / mx.len() as f64;
    }
    Ok(total / channels as f64)
}

/// Fraction of original characters restored at the same position. An empty
/// original counts as fully recovered only by an empty restoration.
pub fn tra(original: &str, restored: &str) -> f64 {
    let n = original.chars().count();
    if n == 0 {
        return if restored.is_empty() { 1.0 } else { 0.0 };
    }
    let hits = original.chars().zip(restored.chars()).filter(|(a, b)| a == b).count();
    hits as f64 / n as f64
}

/// Payload bits: 8 per original data-image pixel plus 8 per text character.
pub fn payload_bits(data_pixels: usize, text_chars: usize) -> u64 {
    8 * (data_pixels as u64 + text_chars as u64)
}

/// Bits per pixel: `bits / (C * H * W)`.
pub fn bpp(bits: u64, channels: usize, h: usize, w: usize) -> f64 {
    bits as f64 / (channels * h * w) as f64
}

/// Per-image measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEval {
    pub name: alloc::string::String,
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub tra: f64,
    pub bpp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub psnr_mode: PsnrMode,
    /// Mean PSNR; infinite when every pair was identical.
    pub psnr: f64,
    /// Number of pairs with infinite PSNR, left out of the mean.
    pub psnr_infinite: usize,
    pub ssim: f64,
    pub rmse: f64,
    pub tra: f64,
    pub bpp: f64,
    pub images: Vec<ImageEval>,
}

impl EvalReport {
    pub fn from_images(psnr_mode: PsnrMode, images: Vec<ImageEval>) -> Self {
        let n = images.len().max(1) as f64;
        let finite: Vec<f64> = images.iter().map(|i| i.psnr).filter(|p| p.is_finite()).collect();
        let psnr = if finite.is_empty() {
            if images.is_empty() {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let mean = |f: fn(&ImageEval) -> f64| images.iter().map(f).sum::<f64>() / n;
        Self {
            psnr_mode,
            psnr,
            psnr_infinite: images.len() - finite.len(),
            ssim: mean(|i| i.ssim),
            rmse: mean(|i| i.rmse),
            tra: mean(|i| i.tra),
            bpp: mean(|i| i.bpp),
            images,
        }
    }
}

/// Source of deep features for a learned perceptual distance. Each call
/// returns one feature map per layer as `(channels, values)`, values in
/// `CHW` order.
pub trait FeatureExtractor {
    fn features(&self, image: &[f64], channels: usize, h: usize, w: usize) -> Vec<(usize, Vec<f64>)>;
}

/// Perceptual distance from an external feature extractor: per layer, unit
/// normalize each spatial feature vector across channels, then average the
/// squared differences over positions; sum over layers.
pub fn lpips(extractor: &dyn FeatureExtractor, a: &[f64], b: &[f64], channels: usize, h: usize, w: usize) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let fa = extractor.features(a, channels, h, w);
    let fb = extractor.features(b, channels, h, w);
    if fa.len() != fb.len() {
        return Err(shape_err("feature extractor returned different layer counts"));
    }
    let mut total = 0.0;
    for ((ca, va), (cb, vb)) in fa.iter().zip(&fb) {
        if ca != cb || va.len() != vb.len() || *ca == 0 || va.len() % ca != 0 {
            return Err(shape_err("feature maps differ in shape"));
        }
        let positions = va.len() / ca;
        let mut layer = 0.0;
        for p in 0..positions {
            let norm = |v: &[f64]| libm::sqrt((0..*ca).map(|c| v[c * positions + p].powi(2)).sum::<f64>()) + 1e-10;
            let (na, nb) = (norm(va), norm(vb));
            layer += (0..*ca)
                .map(|c| {
                    let d = va[c * positions + p] / na - vb[c * positions + p] / nb;
                    d * d
                })
                .sum::<f64>();
        }
        total += layer / positions as f64;
    }
    Ok(total)
}
