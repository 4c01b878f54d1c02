//! Feature fusion block: lifts the stacked carrier + secret image into a
//! wider feature space, refines it with residual dense blocks and projects it
//! back onto the input channels as a residual update.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::conv::{col2im3, im2col3, leaky_relu, leaky_relu_grad, Conv3x3};
use super::dense::{DenseBlock, DenseCache};
use super::tensor::{Real, Tensor};
use crate::error::{shape_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FusionBlock<T> {
    pub channels: usize,
    pub features: usize,
    pub lift: Conv3x3<T>,
    pub blocks: Vec<DenseBlock<T>>,
    /// Zero-initialised so a fresh block is the identity map.
    pub project: Conv3x3<T>,
}

pub struct FusionCache<T> {
    h: usize,
    w: usize,
    lift_col: Vec<T>,
    lifted: Vec<T>,
    blocks: Vec<DenseCache<T>>,
    project_col: Vec<T>,
}

impl<T: Real> FusionBlock<T> {
    pub fn init<R: Rng>(
        channels: usize,
        features: usize,
        growth: usize,
        dense_layers: usize,
        n_blocks: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            channels,
            features,
            lift: Conv3x3::init(channels, features, rng),
            blocks: (0..n_blocks)
                .map(|_| DenseBlock::init(features, growth, features, dense_layers, rng))
                .collect(),
            project: Conv3x3::zeros(features, channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            channels: self.channels,
            features: self.features,
            lift: Conv3x3::zeros(self.lift.in_ch, self.lift.out_ch),
            blocks: self.blocks.iter().map(DenseBlock::zeros_like).collect(),
            project: Conv3x3::zeros(self.project.in_ch, self.project.out_ch),
        }
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.channels {
            return Err(shape_err(alloc::format!(
                "fusion block expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, FusionCache<T>)> {
        self.check(x)?;
        let (c, h, w) = x.dims();
        let hw = h * w;
        let mut lift_col = vec![T::zero(); c * 9 * hw];
        im2col3(x.data(), c, h, w, &mut lift_col);
        let mut lifted = vec![T::zero(); self.features * hw];
        self.lift.forward_col(&lift_col, hw, &mut lifted);
        lifted.iter_mut().for_each(|v| *v = leaky_relu(*v));
        let mut feat = Tensor::from_vec(self.features, h, w, lifted.clone())?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (d, cache) = block.forward_cached(&feat);
            feat.add_assign(&d);
            caches.push(cache);
        }
        let mut project_col = vec![T::zero(); self.features * 9 * hw];
        im2col3(feat.data(), self.features, h, w, &mut project_col);
        let mut out = vec![T::zero(); c * hw];
        self.project.forward_col(&project_col, hw, &mut out);
        for (o, &xi) in out.iter_mut().zip(x.data()) {
            *o += xi;
        }
        let cache = FusionCache {
            h,
            w,
            lift_col,
            lifted,
            blocks: caches,
            project_col,
        };
        Ok((Tensor::from_vec(c, h, w, out)?, cache))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, cache: &FusionCache<T>, dout: &Tensor<T>, grad: &mut Self) -> Tensor<T> {
        let (h, w) = (cache.h, cache.w);
        let hw = h * w;
        let mut dcol = vec![T::zero(); cache.project_col.len()];
        self.project
            .backward_col(&cache.project_col, dout.data(), hw, &mut grad.project, Some(&mut dcol));
        let mut dfeat = vec![T::zero(); self.features * hw];
        col2im3(&dcol, self.features, h, w, &mut dfeat);
        let mut dfeat = Tensor::from_vec(self.features, h, w, dfeat).expect("feature grad shape");
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let through = block.backward(&cache.blocks[i], &dfeat, &mut grad.blocks[i]);
            dfeat.add_assign(&through);
        }
        let mut dlift = dfeat.into_vec();
        for (d, &a) in dlift.iter_mut().zip(&cache.lifted) {
            *d *= leaky_relu_grad(a);
        }
        let mut dcol = vec![T::zero(); cache.lift_col.len()];
        self.lift
            .backward_col(&cache.lift_col, &dlift, hw, &mut grad.lift, Some(&mut dcol));
        let mut dx = dout.data().to_vec();
        col2im3(&dcol, self.channels, h, w, &mut dx);
        Tensor::from_vec(self.channels, h, w, dx).expect("fusion input grad shape")
    }
}
