//! Hybrid training loss.
//!
//! * encoding: pixel MSE plus `alpha` times the MSE of the 2x2 low-pass
//!   (Haar LL) images,
//! * restoration: per populated secret channel, mean L1 plus MSE,
//! * total: `encoding + beta * restoration`.

use crate::error::{shape_err, Result};
use crate::stegnet::secrets::SECRET_CHANNELS;
use crate::stegnet::tensor::{Real, Tensor};
use crate::stegnet::wavelet::lowpass_mean;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 1.6 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    pub freq: f64,
    pub restoration: f64,
    pub total: f64,
}

fn same_dims<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(shape_err(alloc::format!("loss inputs differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn mse_slices<T: Real>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).to_f64().unwrap();
            d * d
        })
        .sum();
    s / a.len() as f64
}

fn l1_slices<T: Real>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a.iter().zip(b).map(|(&x, &y)| (x - y).to_f64().unwrap().abs()).sum();
    s / a.len() as f64
}

/// Pixel MSE.
pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_dims(a, b)?;
    Ok(mse_slices(a.data(), b.data()))
}

/// MSE between the 2x2 low-pass images.
pub fn freq<T: Real>(carrier: &Tensor<T>, encoded: &Tensor<T>) -> Result<f64> {
    same_dims(carrier, encoded)?;
    let lc = lowpass_mean(carrier)?;
    let le = lowpass_mean(encoded)?;
    Ok(mse_slices(lc.data(), le.data()))
}

/// `mse + alpha * freq`.
pub fn encoding<T: Real>(carrier: &Tensor<T>, encoded: &Tensor<T>, alpha: f64) -> Result<f64> {
    Ok(mse(carrier, encoded)? + alpha * freq(carrier, encoded)?)
}

/// Sum over populated channels of mean L1 plus MSE.
pub fn restoration<T: Real>(
    secrets: &Tensor<T>,
    restored: &Tensor<T>,
    mask: &[bool; SECRET_CHANNELS],
) -> Result<f64> {
    same_dims(secrets, restored)?;
    if secrets.channels() != SECRET_CHANNELS {
        return Err(shape_err("restoration loss expects the four secret channels"));
    }
    Ok((0..SECRET_CHANNELS)
        .filter(|&c| mask[c])
        .map(|c| {
            let (a, b) = (secrets.plane(c), restored.plane(c));
            l1_slices(a, b) + mse_slices(a, b)
        })
        .sum())
}

pub fn total<T: Real>(
    carrier: &Tensor<T>,
    encoded: &Tensor<T>,
    secrets: &Tensor<T>,
    restored: &Tensor<T>,
    mask: &[bool; SECRET_CHANNELS],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let mse = mse(carrier, encoded)?;
    let freq = freq(carrier, encoded)?;
    let restoration = restoration(secrets, restored, mask)?;
    Ok(LossBreakdown {
        mse,
        freq,
        restoration,
        total: mse + weights.alpha * freq + weights.beta * restoration,
    })
}

/// Gradient of `mse + alpha * freq` with respect to `encoded`.
pub fn encoding_grad<T: Real>(carrier: &Tensor<T>, encoded: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    same_dims(carrier, encoded)?;
    let lc = lowpass_mean(carrier)?;
    let le = lowpass_mean(encoded)?;
    let (c, h, w) = carrier.dims();
    let n = T::lit((c * h * w) as f64);
    let two = T::lit(2.0);
    // each low-pass pixel averages four inputs; there are n/4 of them
    let freq_scale = alpha * two / (n / T::lit(4.0)) / T::lit(4.0);
    Ok(Tensor::from_fn(c, h, w, |ch, y, x| {
        let d = encoded.get(ch, y, x) - carrier.get(ch, y, x);
        let dl = le.get(ch, y / 2, x / 2) - lc.get(ch, y / 2, x / 2);
        two * d / n + freq_scale * dl
    }))
}

/// Gradient of `beta * restoration` with respect to `restored`; unpopulated
/// channels receive exactly zero.
pub fn restoration_grad<T: Real>(
    secrets: &Tensor<T>,
    restored: &Tensor<T>,
    mask: &[bool; SECRET_CHANNELS],
    beta: T,
) -> Tensor<T> {
    let (c, h, w) = restored.dims();
    let n = T::lit((h * w) as f64);
    let two = T::lit(2.0);
    Tensor::from_fn(c, h, w, |ch, y, x| {
        if !mask[ch] {
            return T::zero();
        }
        let d = restored.get(ch, y, x) - secrets.get(ch, y, x);
        let sign = if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        beta * (sign + two * d) / n
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let a = random(3, 8, 8, 1);
        let s = random(4, 8, 8, 2);
        let l = total(&a, &a, &s, &s, &[true; 4], &LossWeights::default()).unwrap();
        assert_eq!(l, LossBreakdown::default());
    }

    #[test]
    fn constant_offset_gives_closed_form_terms() {
        let a = random(3, 8, 8, 3);
        let b = a.map(|v| v + 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!((freq(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!((encoding(&a, &b, 0.5).unwrap() - 0.015).abs() < 1e-12);
        assert_eq!(encoding(&a, &b, 0.0).unwrap(), mse(&a, &b).unwrap());
    }

    #[test]
    fn restoration_counts_only_populated_channels() {
        let s = random(4, 6, 6, 4);
        let mut r = s.clone();
        r.plane_mut(1).iter_mut().for_each(|v| *v += 0.1);
        r.plane_mut(2).iter_mut().for_each(|v| *v += 0.5);
        let mask = [true, true, false, false];
        assert!((restoration(&s, &r, &mask).unwrap() - 0.11).abs() < 1e-12);
        let g = restoration_grad(&s, &r, &mask, 1.6);
        assert!(g.plane(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn total_is_linear_in_beta_and_matches_components() {
        let a = random(3, 4, 4, 5);
        let e = random(3, 4, 4, 6);
        let s = random(4, 4, 4, 7);
        let r = random(4, 4, 4, 8);
        let m = [true, false, true, true];
        let l1 = total(&a, &e, &s, &r, &m, &LossWeights { alpha: 0.5, beta: 1.0 }).unwrap();
        let l2 = total(&a, &e, &s, &r, &m, &LossWeights { alpha: 0.5, beta: 2.0 }).unwrap();
        assert!((l2.total - l1.total - l1.restoration).abs() < 1e-12);
        assert!((l1.total - (l1.mse + 0.5 * l1.freq + l1.restoration)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let a = random(3, 4, 6, 9);
        let e = random(3, 4, 6, 10);
        let s = random(4, 4, 6, 11);
        let r = random(4, 4, 6, 12);
        let mask = [true, false, false, true];
        let ge = encoding_grad(&a, &e, 0.5).unwrap();
        let gr = restoration_grad(&s, &r, &mask, 1.6);
        let eps = 1e-6;
        for i in [0, 7, 30, 71] {
            let mut p = e.clone();
            p.data_mut()[i] += eps;
            let mut m = e.clone();
            m.data_mut()[i] -= eps;
            let fd = (encoding(&a, &p, 0.5).unwrap() - encoding(&a, &m, 0.5).unwrap()) / (2.0 * eps);
            assert!((fd - ge.data()[i]).abs() < 1e-8);
        }
        for i in [0, 10, 75, 90] {
            let mut p = r.clone();
            p.data_mut()[i] += eps;
            let mut m = r.clone();
            m.data_mut()[i] -= eps;
            let fd = 1.6 * (restoration(&s, &p, &mask).unwrap() - restoration(&s, &m, &mask).unwrap()) / (2.0 * eps);
            assert!((fd - gr.data()[i]).abs() < 1e-8);
        }
    }
}
