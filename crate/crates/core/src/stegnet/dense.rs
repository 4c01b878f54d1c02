//! Residual-dense style convolution block: every layer sees the block input
//! concatenated with all previous layer outputs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::conv::{col2im3, im2col3, leaky_relu, leaky_relu_grad, Conv3x3};
use super::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock<T> {
    pub in_ch: usize,
    pub growth: usize,
    pub out_ch: usize,
    pub layers: Vec<Conv3x3<T>>,
}

/// Activations kept from a forward pass for the backward pass.
pub struct DenseCache<T> {
    h: usize,
    w: usize,
    /// im2col rows of `[x, y1, ..., y_{L-1}]`.
    col: Vec<T>,
    /// Post-activation outputs of the hidden layers.
    hidden: Vec<Vec<T>>,
}

impl<T: Real> DenseBlock<T> {
    /// `layers` convolutions; the last one is zero-initialised so a fresh block
    /// outputs zeros.
    pub fn init<R: Rng>(
        in_ch: usize,
        growth: usize,
        out_ch: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        assert!(layers >= 1);
        let mut convs = Vec::with_capacity(layers);
        for l in 0..layers - 1 {
            convs.push(Conv3x3::init(in_ch + l * growth, growth, rng));
        }
        convs.push(Conv3x3::zeros(in_ch + (layers - 1) * growth, out_ch));
        Self {
            in_ch,
            growth,
            out_ch,
            layers: convs,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            in_ch: self.in_ch,
            growth: self.growth,
            out_ch: self.out_ch,
            layers: self
                .layers
                .iter()
                .map(|c| Conv3x3::zeros(c.in_ch, c.out_ch))
                .collect(),
        }
    }

    fn total_rows(&self) -> usize {
        (self.in_ch + (self.layers.len() - 1) * self.growth) * 9
    }

    fn group_rows(&self, group: usize) -> core::ops::Range<usize> {
        if group == 0 {
            0..self.in_ch * 9
        } else {
            let start = (self.in_ch + (group - 1) * self.growth) * 9;
            start..start + self.growth * 9
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> (Tensor<T>, DenseCache<T>) {
        assert_eq!(x.channels(), self.in_ch, "dense block input channels");
        let (h, w) = (x.height(), x.width());
        let hw = h * w;
        let mut col = vec![T::zero(); self.total_rows() * hw];
        im2col3(x.data(), self.in_ch, h, w, &mut col);
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (l, conv) in self.layers[..last].iter().enumerate() {
            let mut y = vec![T::zero(); self.growth * hw];
            conv.forward_col(&col, hw, &mut y);
            y.iter_mut().for_each(|v| *v = leaky_relu(*v));
            let rows = self.group_rows(l + 1);
            im2col3(&y, self.growth, h, w, &mut col[rows.start * hw..rows.end * hw]);
            hidden.push(y);
        }
        let mut out = vec![T::zero(); self.out_ch * hw];
        self.layers[last].forward_col(&col, hw, &mut out);
        let out = Tensor::from_vec(self.out_ch, h, w, out).expect("dense output shape");
        (out, DenseCache { h, w, col, hidden })
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the block input.
    pub fn backward(&self, cache: &DenseCache<T>, dout: &Tensor<T>, grad: &mut DenseBlock<T>) -> Tensor<T> {
        let (h, w) = (cache.h, cache.w);
        let hw = h * w;
        let mut dcol = vec![T::zero(); cache.col.len()];
        let mut dy = dout.data().to_vec();
        for l in (0..self.layers.len()).rev() {
            let conv = &self.layers[l];
            let rows = conv.fan_in();
            conv.backward_col(
                &cache.col[..rows * hw],
                &dy,
                hw,
                &mut grad.layers[l],
                Some(&mut dcol[..rows * hw]),
            );
            if l > 0 {
                // group l (output of layer l-1) has no consumers left
                let g = self.group_rows(l);
                let mut dh = vec![T::zero(); self.growth * hw];
                col2im3(&dcol[g.start * hw..g.end * hw], self.growth, h, w, &mut dh);
                for (d, &a) in dh.iter_mut().zip(&cache.hidden[l - 1]) {
                    *d *= leaky_relu_grad(a);
                }
                dy = dh;
            }
        }
        let mut dx = vec![T::zero(); self.in_ch * hw];
        col2im3(&dcol[..self.in_ch * 9 * hw], self.in_ch, h, w, &mut dx);
        Tensor::from_vec(self.in_ch, h, w, dx).expect("dense input grad shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randomize(block: &mut DenseBlock<f64>, rng: &mut ChaCha8Rng) {
        for conv in &mut block.layers {
            conv.weight.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
            conv.bias.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }

    #[test]
    fn fresh_block_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = DenseBlock::<f32>::init(3, 4, 2, 5, &mut rng);
        let x = Tensor::from_fn(3, 4, 4, |c, y, x| (c + y * x) as f32 * 0.1);
        let out = block.forward(&x);
        assert_eq!(out.dims(), (2, 4, 4));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = DenseBlock::<f64>::init(2, 3, 2, 4, &mut rng);
        randomize(&mut block, &mut rng);
        let x = Tensor::from_fn(2, 5, 4, |_, _, _| rng.gen_range(-1.0..1.0));
        let weights = Tensor::from_fn(2, 5, 4, |_, _, _| rng.gen_range(-1.0..1.0));
        let loss = |b: &DenseBlock<f64>, x: &Tensor<f64>| -> f64 {
            b.forward(x)
                .data()
                .iter()
                .zip(weights.data())
                .map(|(a, w)| a * w)
                .sum()
        };
        let (_, cache) = block.forward_cached(&x);
        let mut grad = block.zeros_like();
        let dx = block.backward(&cache, &weights, &mut grad);
        let eps = 1e-6;
        for i in [0, 7, 19, 33] {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let fd = (loss(&block, &xp) - loss(&block, &xm)) / (2.0 * eps);
            assert!((fd - dx.data()[i]).abs() < 1e-6, "input {i}: {fd} vs {}", dx.data()[i]);
        }
        for (l, idx) in [(0, 3), (1, 10), (2, 0), (3, 5)] {
            let mut bp = block.clone();
            bp.layers[l].weight[idx] += eps;
            let mut bm = block.clone();
            bm.layers[l].weight[idx] -= eps;
            let fd = (loss(&bp, &x) - loss(&bm, &x)) / (2.0 * eps);
            let an = grad.layers[l].weight[idx];
            assert!((fd - an).abs() < 1e-6, "layer {l} weight {idx}: {fd} vs {an}");
        }
        let mut bp = block.clone();
        bp.layers[1].bias[1] += eps;
        let mut bm = block.clone();
        bm.layers[1].bias[1] -= eps;
        let fd = (loss(&bp, &x) - loss(&bm, &x)) / (2.0 * eps);
        assert!((fd - grad.layers[1].bias[1]).abs() < 1e-6);
    }
}
