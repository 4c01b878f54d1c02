//! Same-padded 2-D convolutions expressed as matrix products over an
//! im2col buffer.
//!
//! Rows of the im2col buffer are ordered `(channel, ky, kx)`, so the buffer of
//! a channel-concatenation is the vertical stack of the parts' buffers. Dense
//! blocks rely on this to grow one buffer instead of rebuilding it per layer.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tensor::Real;

/// Writes the 3x3 zero-padded im2col rows of `input` (`channels` planes of
/// `h x w`) into `col`, which must hold `channels * 9 * h * w` values.
pub fn im2col3<T: Real>(input: &[T], channels: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    debug_assert!(col.len() >= channels * 9 * hw);
    for c in 0..channels {
        let plane = &input[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((c * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: accumulates `col` rows back onto `out`.
pub fn col2im3<T: Real>(col: &[T], channels: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    for c in 0..channels {
        let plane = &mut out[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((c * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                dst[x - 1] += src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                dst[x] += src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                dst[x + 1] += src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 convolution, stride 1, zero padding 1, with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3x3<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `out_ch x (in_ch * 9)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv3x3<T> {
    pub fn zeros(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            weight: vec![T::zero(); out_ch * in_ch * 9],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialisation for weights and bias.
    pub fn init<R: Rng>(in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt((in_ch * 9) as f64);
        let mut draw = || T::lit(rng.gen_range(-bound..bound));
        let weight = (0..out_ch * in_ch * 9).map(|_| draw()).collect();
        let bias = (0..out_ch).map(|_| draw()).collect();
        Self {
            in_ch,
            out_ch,
            weight,
            bias,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch * 9
    }

    /// `out = W * col + b` where `col` holds at least `in_ch * 9` rows.
    pub fn forward_col(&self, col: &[T], hw: usize, out: &mut [T]) {
        for (o, &b) in self.bias.iter().enumerate() {
            out[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = b);
        }
        T::gemm(
            self.out_ch,
            self.fan_in(),
            hw,
            T::one(),
            &self.weight,
            false,
            col,
            false,
            T::one(),
            out,
        );
    }

    /// Accumulates parameter gradients into `grad` and, when given, adds
    /// `W^T * dout` onto the first `in_ch * 9` rows of `dcol`.
    pub fn backward_col(
        &self,
        col: &[T],
        dout: &[T],
        hw: usize,
        grad: &mut Conv3x3<T>,
        dcol: Option<&mut [T]>,
    ) {
        T::gemm(
            self.out_ch,
            hw,
            self.fan_in(),
            T::one(),
            dout,
            false,
            col,
            true,
            T::one(),
            &mut grad.weight,
        );
        for (o, gb) in grad.bias.iter_mut().enumerate() {
            *gb += dout[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
        }
        if let Some(dcol) = dcol {
            T::gemm(
                self.fan_in(),
                self.out_ch,
                hw,
                T::one(),
                &self.weight,
                true,
                dout,
                false,
                T::one(),
                dcol,
            );
        }
    }
}

pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub(crate) fn leaky_relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        v * T::lit(LEAKY_SLOPE)
    }
}

/// Derivative of leaky ReLU expressed through its output (sign preserved).
#[inline]
pub(crate) fn leaky_relu_grad<T: Real>(out: T) -> T {
    if out > T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}
