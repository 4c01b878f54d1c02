//! Affine coupling block: an invertible 1x1 channel mix followed by an
//! additive update of the carrier half and an affine update of the secret
//! half.
//!
//! ```text
//! (x_c, x_s) = W (a_c, a_s)
//! a'_c = x_c + phi(x_s)
//! a'_s = x_s * exp(s(rho(a'_c))) + eta(a'_c)
//! ```
//!
//! where `s(r) = B tanh(r / B)` keeps the log-scale inside `(-B, B)`.

use alloc::vec::Vec;

use rand::Rng;

use super::dense::{DenseBlock, DenseCache};
use super::invconv::InvConv1x1;
use super::tensor::{Real, Tensor};
use crate::error::Result;

/// Bound on the log-scale produced from the `rho` branch.
pub const LOG_SCALE_BOUND: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseSpec {
    pub growth: usize,
    pub layers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixInit {
    /// Random orthogonal kernel.
    Orthogonal,
    /// Identity kernel.
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingBlock<T> {
    pub carrier_ch: usize,
    pub secret_ch: usize,
    pub mix: InvConv1x1<T>,
    pub phi: DenseBlock<T>,
    pub rho: DenseBlock<T>,
    pub eta: DenseBlock<T>,
}

pub struct ForwardCache<T> {
    input: Tensor<T>,
    x_s: Tensor<T>,
    phi: DenseCache<T>,
    rho: DenseCache<T>,
    eta: DenseCache<T>,
    rho_out: Tensor<T>,
    scale: Tensor<T>,
}

pub struct InverseCache<T> {
    inv: Vec<T>,
    mixed: Tensor<T>,
    x_s: Tensor<T>,
    phi: DenseCache<T>,
    rho: DenseCache<T>,
    eta: DenseCache<T>,
    rho_out: Tensor<T>,
    inv_scale: Tensor<T>,
}

#[inline]
fn log_scale<T: Real>(r: T) -> T {
    let b = T::lit(LOG_SCALE_BOUND);
    b * (r / b).tanh()
}

#[inline]
fn log_scale_grad<T: Real>(r: T) -> T {
    let t = (r / T::lit(LOG_SCALE_BOUND)).tanh();
    T::one() - t * t
}

fn split<T: Real>(t: &Tensor<T>, at: usize) -> (Tensor<T>, Tensor<T>) {
    (t.slice_channels(0, at), t.slice_channels(at, t.channels()))
}

fn join<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    Tensor::concat(&[a, b]).expect("coupling halves share spatial dims")
}

impl<T: Real> CouplingBlock<T> {
    pub fn init<R: Rng>(
        carrier_ch: usize,
        secret_ch: usize,
        dense: DenseSpec,
        mix: MixInit,
        rng: &mut R,
    ) -> Self {
        let n = carrier_ch + secret_ch;
        let mix = match mix {
            MixInit::Orthogonal => InvConv1x1::random_orthogonal(n, rng),
            MixInit::Identity => InvConv1x1::identity(n),
        };
        Self {
            carrier_ch,
            secret_ch,
            mix,
            phi: DenseBlock::init(secret_ch, dense.growth, carrier_ch, dense.layers, rng),
            rho: DenseBlock::init(carrier_ch, dense.growth, secret_ch, dense.layers, rng),
            eta: DenseBlock::init(carrier_ch, dense.growth, secret_ch, dense.layers, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            carrier_ch: self.carrier_ch,
            secret_ch: self.secret_ch,
            mix: self.mix.zeros_like(),
            phi: self.phi.zeros_like(),
            rho: self.rho.zeros_like(),
            eta: self.eta.zeros_like(),
        }
    }

    /// Forward pass on the stacked `[carrier; secret]` tensor.
    pub fn forward(&self, a: &Tensor<T>) -> Tensor<T> {
        let x = self.mix.forward(a);
        let (x_c, x_s) = split(&x, self.carrier_ch);
        let mut y_c = x_c;
        y_c.add_assign(&self.phi.forward(&x_s));
        let r = self.rho.forward(&y_c);
        let h = self.eta.forward(&y_c);
        let mut y_s = x_s;
        for ((v, &rv), &hv) in y_s.data_mut().iter_mut().zip(r.data()).zip(h.data()) {
            *v = *v * log_scale(rv).exp() + hv;
        }
        join(&y_c, &y_s)
    }

    /// Exact algebraic inverse of [`CouplingBlock::forward`].
    pub fn inverse(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let (y_c, y_s) = split(y, self.carrier_ch);
        let r = self.rho.forward(&y_c);
        let h = self.eta.forward(&y_c);
        let mut x_s = y_s;
        for ((v, &rv), &hv) in x_s.data_mut().iter_mut().zip(r.data()).zip(h.data()) {
            *v = (*v - hv) * (-log_scale(rv)).exp();
        }
        let p = self.phi.forward(&x_s);
        let mut x_c = y_c;
        for (v, &pv) in x_c.data_mut().iter_mut().zip(p.data()) {
            *v -= pv;
        }
        self.mix.inverse(&join(&x_c, &x_s))
    }

    pub fn forward_cached(&self, a: &Tensor<T>) -> (Tensor<T>, ForwardCache<T>) {
        let x = self.mix.forward(a);
        let (x_c, x_s) = split(&x, self.carrier_ch);
        let (p, phi) = self.phi.forward_cached(&x_s);
        let mut y_c = x_c;
        y_c.add_assign(&p);
        let (r, rho) = self.rho.forward_cached(&y_c);
        let (h, eta) = self.eta.forward_cached(&y_c);
        let scale = r.map(|v| log_scale(v).exp());
        let mut y_s = x_s.clone();
        for ((v, &e), &hv) in y_s.data_mut().iter_mut().zip(scale.data()).zip(h.data()) {
            *v = *v * e + hv;
        }
        let cache = ForwardCache {
            input: a.clone(),
            x_s,
            phi,
            rho,
            eta,
            rho_out: r,
            scale,
        };
        (join(&y_c, &y_s), cache)
    }

    /// Backward of [`CouplingBlock::forward_cached`]; returns the input gradient.
    pub fn forward_backward(&self, cache: &ForwardCache<T>, dy: &Tensor<T>, grad: &mut Self) -> Tensor<T> {
        let (dy_c, dy_s) = split(dy, self.carrier_ch);
        let mut dx_s = dy_s.clone();
        let mut dr = dy_s.clone();
        for i in 0..dx_s.data().len() {
            let e = cache.scale.data()[i];
            let g = dy_s.data()[i];
            dx_s.data_mut()[i] = g * e;
            dr.data_mut()[i] = g * cache.x_s.data()[i] * e * log_scale_grad(cache.rho_out.data()[i]);
        }
        let mut dy_c_total = dy_c;
        dy_c_total.add_assign(&self.rho.backward(&cache.rho, &dr, &mut grad.rho));
        dy_c_total.add_assign(&self.eta.backward(&cache.eta, &dy_s, &mut grad.eta));
        dx_s.add_assign(&self.phi.backward(&cache.phi, &dy_c_total, &mut grad.phi));
        let dx = join(&dy_c_total, &dx_s);
        self.mix.backward(&cache.input, &dx, &mut grad.mix)
    }

    pub fn inverse_cached(&self, y: &Tensor<T>) -> Result<(Tensor<T>, InverseCache<T>)> {
        let inv = self.mix.inverse_weight()?;
        let (y_c, y_s) = split(y, self.carrier_ch);
        let (r, rho) = self.rho.forward_cached(&y_c);
        let (h, eta) = self.eta.forward_cached(&y_c);
        let inv_scale = r.map(|v| (-log_scale(v)).exp());
        let mut x_s = y_s;
        for ((v, &e), &hv) in x_s.data_mut().iter_mut().zip(inv_scale.data()).zip(h.data()) {
            *v = (*v - hv) * e;
        }
        let (p, phi) = self.phi.forward_cached(&x_s);
        let mut x_c = y_c;
        for (v, &pv) in x_c.data_mut().iter_mut().zip(p.data()) {
            *v -= pv;
        }
        let mixed = join(&x_c, &x_s);
        let out = super::invconv::apply(&inv, &mixed);
        let cache = InverseCache {
            inv,
            mixed,
            x_s,
            phi,
            rho,
            eta,
            rho_out: r,
            inv_scale,
        };
        Ok((out, cache))
    }

    /// Backward of [`CouplingBlock::inverse_cached`]; returns the gradient
    /// with respect to the inverse pass input.
    pub fn inverse_backward(&self, cache: &InverseCache<T>, dout: &Tensor<T>, grad: &mut Self) -> Tensor<T> {
        let dmixed = self.mix.inverse_backward(&cache.inv, &cache.mixed, dout, &mut grad.mix);
        let (dx_c, mut dx_s) = split(&dmixed, self.carrier_ch);
        // x_c = y_c - phi(x_s)
        let neg = dx_c.map(|v| -v);
        dx_s.add_assign(&self.phi.backward(&cache.phi, &neg, &mut grad.phi));
        let mut dy_c = dx_c;
        // x_s = (y_s - eta(y_c)) * exp(-s(rho(y_c)))
        let mut dy_s = dx_s.clone();
        let mut dh = dx_s.clone();
        let mut dr = dx_s.clone();
        for i in 0..dy_s.data().len() {
            let e = cache.inv_scale.data()[i];
            let g = dx_s.data()[i];
            dy_s.data_mut()[i] = g * e;
            dh.data_mut()[i] = -g * e;
            dr.data_mut()[i] = -g * cache.x_s.data()[i] * log_scale_grad(cache.rho_out.data()[i]);
        }
        dy_c.add_assign(&self.rho.backward(&cache.rho, &dr, &mut grad.rho));
        dy_c.add_assign(&self.eta.backward(&cache.eta, &dh, &mut grad.eta));
        join(&dy_c, &dy_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn perturbed(seed: u64) -> (CouplingBlock<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dense = DenseSpec { growth: 3, layers: 3 };
        let mut block = CouplingBlock::<f64>::init(4, 5, dense, MixInit::Orthogonal, &mut rng);
        for d in [&mut block.phi, &mut block.rho, &mut block.eta] {
            for conv in &mut d.layers {
                conv.weight.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
                conv.bias.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
            }
        }
        (block, rng)
    }

    #[test]
    fn zero_branches_with_identity_mix_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dense = DenseSpec { growth: 4, layers: 5 };
        let block = CouplingBlock::<f32>::init(12, 16, dense, MixInit::Identity, &mut rng);
        let x = Tensor::from_fn(28, 4, 4, |_, _, _| rng.gen_range(-1.0..1.0));
        assert_eq!(block.forward(&x), x);
    }

    #[test]
    fn inverse_recovers_input() {
        let (block, mut rng) = perturbed(2);
        let x = Tensor::from_fn(9, 6, 5, |_, _, _| rng.gen_range(-1.0..1.0));
        let back = block.inverse(&block.forward(&x)).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn amplification_is_bounded_for_extreme_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = DenseSpec { growth: 2, layers: 2 };
        let mut block = CouplingBlock::<f64>::init(1, 1, dense, MixInit::Identity, &mut rng);
        // rho outputs a huge constant, eta and phi stay zero
        block.rho.layers[1].bias[0] = 1e6;
        let x = Tensor::from_vec(2, 1, 1, alloc::vec![0.0, 1.0]).unwrap();
        let y = block.forward(&x);
        let gain = y.get(1, 0, 0);
        assert!(gain <= LOG_SCALE_BOUND.exp() + 1e-9 && gain > 7.0);
        block.rho.layers[1].bias[0] = -1e6;
        let gain = block.forward(&x).get(1, 0, 0);
        assert!(gain >= (-LOG_SCALE_BOUND).exp() - 1e-9 && gain < 0.14);
    }

    fn check_grads(inverse: bool) {
        let (block, mut rng) = perturbed(if inverse { 5 } else { 4 });
        let x = Tensor::from_fn(9, 4, 4, |_, _, _| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(9, 4, 4, |_, _, _| rng.gen_range(-1.0..1.0));
        let run = |b: &CouplingBlock<f64>, x: &Tensor<f64>| -> f64 {
            let y = if inverse { b.inverse(x).unwrap() } else { b.forward(x) };
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let mut grad = block.zeros_like();
        let dx = if inverse {
            let (_, cache) = block.inverse_cached(&x).unwrap();
            block.inverse_backward(&cache, &w, &mut grad)
        } else {
            let (_, cache) = block.forward_cached(&x);
            block.forward_backward(&cache, &w, &mut grad)
        };
        let eps = 1e-6;
        for i in [0, 20, 70, 143] {
            let mut p = x.clone();
            p.data_mut()[i] += eps;
            let mut m = x.clone();
            m.data_mut()[i] -= eps;
            let fd = (run(&block, &p) - run(&block, &m)) / (2.0 * eps);
            assert!((fd - dx.data()[i]).abs() < 1e-5, "input {i}: {fd} vs {}", dx.data()[i]);
        }
        let probes: [(&str, usize); 4] = [("mix", 11), ("phi", 7), ("rho", 3), ("eta", 2)];
        for (name, idx) in probes {
            let mut p = block.clone();
            *probe(&mut p, name, idx) += eps;
            let mut m = block.clone();
            *probe(&mut m, name, idx) -= eps;
            let fd = (run(&p, &x) - run(&m, &x)) / (2.0 * eps);
            let an = *probe(&mut grad, name, idx);
            assert!((fd - an).abs() < 1e-5, "{name}[{idx}]: {fd} vs {an}");
        }
    }

    fn probe<'a>(b: &'a mut CouplingBlock<f64>, name: &str, idx: usize) -> &'a mut f64 {
        match name {
            "mix" => &mut b.mix.weight[idx],
            "phi" => &mut b.phi.layers[0].weight[idx],
            "rho" => &mut b.rho.layers[2].weight[idx],
            _ => &mut b.eta.layers[2].weight[idx],
        }
    }

    #[test]
    fn forward_backward_matches_finite_differences() {
        check_grads(false);
    }

    #[test]
    fn inverse_backward_matches_finite_differences() {
        check_grads(true);
    }
}
