//! Single-level orthonormal Haar transform and the 2x2 space-to-depth
//! reshape used on the secret branch.
//!
//! Sub-bands are stored band-major: output channel `band * C + c` holds band
//! `band` of input channel `c`, bands ordered `[LL, LH, HL, HH]`. For each 2x2
//! block `a b / c d`:
//!
//! ```text
//! LL = (a + b + c + d) / 2    LH = (a + b - c - d) / 2
//! HL = (a - b + c - d) / 2    HH = (a - b - c + d) / 2
//! ```
//!
//! The transform is orthogonal, so [`iwt`] is both its inverse and its
//! adjoint.

use alloc::format;

use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Result};

fn check_even(h: usize, w: usize, what: &str) -> Result<()> {
    if !h.is_multiple_of(2) || !w.is_multiple_of(2) || h == 0 || w == 0 {
        return Err(shape_err(format!("{what} needs positive even dims, got {h}x{w}")));
    }
    Ok(())
}

/// `(C, H, W) -> (4C, H/2, W/2)`.
pub fn dwt<T: Real>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = img.dims();
    check_even(h, w, "dwt")?;
    let (h2, w2) = (h / 2, w / 2);
    let half = T::lit(0.5);
    let mut out = Tensor::zeros(4 * c, h2, w2);
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let a = img.get(ch, 2 * y, 2 * x);
                let b = img.get(ch, 2 * y, 2 * x + 1);
                let cc = img.get(ch, 2 * y + 1, 2 * x);
                let d = img.get(ch, 2 * y + 1, 2 * x + 1);
                out.set(ch, y, x, (a + b + cc + d) * half);
                out.set(c + ch, y, x, (a + b - cc - d) * half);
                out.set(2 * c + ch, y, x, (a - b + cc - d) * half);
                out.set(3 * c + ch, y, x, (a - b - cc + d) * half);
            }
        }
    }
    Ok(out)
}

/// `(4C, H, W) -> (C, 2H, 2W)`, exact inverse of [`dwt`].
pub fn iwt<T: Real>(bands: &Tensor<T>) -> Result<Tensor<T>> {
    let (c4, h2, w2) = bands.dims();
    if c4 % 4 != 0 {
        return Err(shape_err(format!("iwt needs a multiple of 4 channels, got {c4}")));
    }
    let c = c4 / 4;
    let half = T::lit(0.5);
    let mut out = Tensor::zeros(c, 2 * h2, 2 * w2);
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                let ll = bands.get(ch, y, x);
                let lh = bands.get(c + ch, y, x);
                let hl = bands.get(2 * c + ch, y, x);
                let hh = bands.get(3 * c + ch, y, x);
                out.set(ch, 2 * y, 2 * x, (ll + lh + hl + hh) * half);
                out.set(ch, 2 * y, 2 * x + 1, (ll + lh - hl - hh) * half);
                out.set(ch, 2 * y + 1, 2 * x, (ll - lh + hl - hh) * half);
                out.set(ch, 2 * y + 1, 2 * x + 1, (ll - lh - hl + hh) * half);
            }
        }
    }
    Ok(out)
}

/// Mean of every 2x2 block, `(C, H, W) -> (C, H/2, W/2)`. Equals the LL band
/// of [`dwt`] divided by two; used by the low-frequency loss.
pub fn lowpass_mean<T: Real>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = img.dims();
    check_even(h, w, "lowpass")?;
    let q = T::lit(0.25);
    Ok(Tensor::from_fn(c, h / 2, w / 2, |ch, y, x| {
        (img.get(ch, 2 * y, 2 * x)
            + img.get(ch, 2 * y, 2 * x + 1)
            + img.get(ch, 2 * y + 1, 2 * x)
            + img.get(ch, 2 * y + 1, 2 * x + 1))
            * q
    }))
}

/// Space-to-depth with 2x2 blocks: pixel `(c, 2r+dr, 2s+dc)` lands in channel
/// `4c + 2dr + dc` at `(r, s)`.
pub fn space_to_depth<T: Real>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = img.dims();
    check_even(h, w, "space_to_depth")?;
    Ok(Tensor::from_fn(4 * c, h / 2, w / 2, |oc, r, s| {
        let (ch, sub) = (oc / 4, oc % 4);
        img.get(ch, 2 * r + sub / 2, 2 * s + sub % 2)
    }))
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space<T: Real>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (c4, h2, w2) = img.dims();
    if c4 % 4 != 0 {
        return Err(shape_err(format!("depth_to_space needs a multiple of 4 channels, got {c4}")));
    }
    Ok(Tensor::from_fn(c4 / 4, 2 * h2, 2 * w2, |ch, y, x| {
        img.get(4 * ch + 2 * (y % 2) + x % 2, y / 2, x / 2)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn dwt_halves_spatial_size_and_quadruples_channels() {
        let img = Tensor::<f32>::zeros(3, 512, 512);
        assert_eq!(dwt(&img).unwrap().dims(), (12, 256, 256));
    }

    #[test]
    fn constant_image_has_zero_detail_bands() {
        let img = Tensor::<f32>::from_fn(2, 8, 6, |_, _, _| 0.37);
        let bands = dwt(&img).unwrap();
        for c in 2..8 {
            assert!(bands.plane(c).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn iwt_reconstructs_dwt_input() {
        let img = random(3, 64, 48, 9);
        let back = iwt(&dwt(&img).unwrap()).unwrap();
        assert!(back.max_abs_diff(&img) <= 1e-6);
    }

    #[test]
    fn odd_dims_are_rejected() {
        let img = Tensor::<f32>::zeros(1, 5, 4);
        assert!(dwt(&img).is_err());
        assert!(space_to_depth(&img).is_err());
    }

    #[test]
    fn space_to_depth_matches_block_order() {
        let img = random(4, 512, 512, 2);
        let s = space_to_depth(&img).unwrap();
        assert_eq!(s.dims(), (16, 256, 256));
        let (c, r, col) = (2, 17, 101);
        for dr in 0..2 {
            for dc in 0..2 {
                assert_eq!(s.get(c * 4 + dr * 2 + dc, r, col), img.get(c, 2 * r + dr, 2 * col + dc));
            }
        }
        assert_eq!(depth_to_space(&s).unwrap(), img);
    }

    #[test]
    fn lowpass_is_half_of_ll_band() {
        let img = random(1, 6, 6, 5);
        let ll = dwt(&img).unwrap();
        let lp = lowpass_mean(&img).unwrap();
        for (a, b) in lp.data().iter().zip(ll.plane(0)) {
            assert!((a * 2.0 - b).abs() < 1e-6);
        }
    }
}
