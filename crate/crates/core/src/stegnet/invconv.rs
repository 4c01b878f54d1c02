//! Invertible 1x1 convolution: a learned square channel-mixing matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Determinant magnitude below which a kernel is treated as singular.
pub const MIN_ABS_DET: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct InvConv1x1<T> {
    pub channels: usize,
    /// `channels x channels`, row-major: `out[i] = sum_j weight[i][j] * in[j]`.
    pub weight: Vec<T>,
}

/// LU factorisation with partial pivoting of an `n x n` row-major matrix.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    det: f64,
}

fn lu(n: usize, m: &[f64]) -> Lu {
    let mut a = m.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut det = 1.0;
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[i * n + k].abs() > a[p * n + k].abs() {
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            det = -det;
        }
        let pivot = a[k * n + k];
        det *= pivot;
        if pivot == 0.0 {
            continue;
        }
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            a[i * n + k] = f;
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    Lu { n, lu: a, perm, det }
}

impl Lu {
    fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        for col in 0..n {
            // solve A x = e_col; P A = L U
            let mut x: Vec<f64> = (0..n).map(|i| if self.perm[i] == col { 1.0 } else { 0.0 }).collect();
            for i in 0..n {
                for j in 0..i {
                    x[i] -= self.lu[i * n + j] * x[j];
                }
            }
            for i in (0..n).rev() {
                for j in i + 1..n {
                    x[i] -= self.lu[i * n + j] * x[j];
                }
                x[i] /= self.lu[i * n + i];
            }
            for i in 0..n {
                inv[i * n + col] = x[i];
            }
        }
        inv
    }
}

/// Random orthogonal `n x n` matrix: Gram-Schmidt on a uniform random matrix.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut q: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut ok = true;
        for i in 0..n {
            for _ in 0..2 {
                for k in 0..i {
                    let dot: f64 = (0..n).map(|j| q[i * n + j] * q[k * n + j]).sum();
                    for j in 0..n {
                        q[i * n + j] -= dot * q[k * n + j];
                    }
                }
            }
            let norm = libm::sqrt((0..n).map(|j| q[i * n + j] * q[i * n + j]).sum::<f64>());
            if norm < 1e-6 {
                ok = false;
                break;
            }
            for j in 0..n {
                q[i * n + j] /= norm;
            }
        }
        if ok {
            return q;
        }
    }
}

impl<T: Real> InvConv1x1<T> {
    pub fn identity(channels: usize) -> Self {
        let mut weight = vec![T::zero(); channels * channels];
        for i in 0..channels {
            weight[i * channels + i] = T::one();
        }
        Self { channels, weight }
    }

    pub fn random_orthogonal<R: Rng>(channels: usize, rng: &mut R) -> Self {
        let q = random_orthogonal(channels, rng);
        Self {
            channels,
            weight: q.into_iter().map(T::lit).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            channels: self.channels,
            weight: vec![T::zero(); self.weight.len()],
        }
    }

    fn as_f64(&self) -> Vec<f64> {
        self.weight.iter().map(|v| v.to_f64().unwrap()).collect()
    }

    pub fn determinant(&self) -> f64 {
        lu(self.channels, &self.as_f64()).det
    }

    /// Inverse kernel, or a model-integrity error when `|det| <= 1e-8`.
    pub fn inverse_weight(&self) -> Result<Vec<T>> {
        let f = lu(self.channels, &self.as_f64());
        if f.det.is_nan() || f.det.abs() <= MIN_ABS_DET {
            return Err(Error::ModelIntegrity(format!(
                "1x1 kernel is not invertible (det = {:e})",
                f.det
            )));
        }
        Ok(f.inverse().into_iter().map(T::lit).collect())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        apply(&self.weight, x)
    }

    pub fn inverse(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(apply(&self.inverse_weight()?, y))
    }

    /// Backward of `y = W x`: accumulates `dy x^T` into `grad`, returns `W^T dy`.
    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, grad: &mut InvConv1x1<T>) -> Tensor<T> {
        let n = self.channels;
        let hw = x.plane_len();
        T::gemm(n, hw, n, T::one(), dy.data(), false, x.data(), true, T::one(), &mut grad.weight);
        let mut dx = Tensor::zeros(n, x.height(), x.width());
        T::gemm(n, n, hw, T::one(), &self.weight, true, dy.data(), false, T::zero(), dx.data_mut());
        dx
    }

    /// Backward of `x = W^-1 y` given the precomputed inverse: accumulates
    /// `-W^-T (dx y^T) W^-T` into `grad`, returns `W^-T dx`.
    pub fn inverse_backward(
        &self,
        inv: &[T],
        y: &Tensor<T>,
        dx: &Tensor<T>,
        grad: &mut InvConv1x1<T>,
    ) -> Tensor<T> {
        let n = self.channels;
        let hw = y.plane_len();
        let mut g_inv = vec![T::zero(); n * n];
        T::gemm(n, hw, n, T::one(), dx.data(), false, y.data(), true, T::zero(), &mut g_inv);
        let mut tmp = vec![T::zero(); n * n];
        T::gemm(n, n, n, T::one(), inv, true, &g_inv, false, T::zero(), &mut tmp);
        T::gemm(n, n, n, -T::one(), &tmp, false, inv, true, T::one(), &mut grad.weight);
        let mut dy = Tensor::zeros(n, y.height(), y.width());
        T::gemm(n, n, hw, T::one(), inv, true, dx.data(), false, T::zero(), dy.data_mut());
        dy
    }
}

pub(crate) fn apply<T: Real>(w: &[T], x: &Tensor<T>) -> Tensor<T> {
    let n = x.channels();
    let hw = x.plane_len();
    let mut y = Tensor::zeros(n, x.height(), x.width());
    T::gemm(n, n, hw, T::one(), w, false, x.data(), false, T::zero(), y.data_mut());
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 28;
        let q = random_orthogonal(n, &mut rng);
        for i in 0..n {
            for k in 0..n {
                let dot: f64 = (0..n).map(|j| q[i * n + j] * q[k * n + j]).sum();
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut conv = InvConv1x1::<f64>::random_orthogonal(6, &mut rng);
        conv.weight.iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        let x = Tensor::from_fn(6, 3, 5, |_, _, _| rng.gen_range(-1.0..1.0));
        let back = conv.inverse(&conv.forward(&x)).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn singular_kernel_is_rejected() {
        let mut conv = InvConv1x1::<f32>::identity(3);
        conv.weight[4] = 0.0;
        assert!(matches!(conv.inverse_weight(), Err(Error::ModelIntegrity(_))));
    }

    #[test]
    fn inverse_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut conv = InvConv1x1::<f64>::random_orthogonal(4, &mut rng);
        conv.weight.iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        let y = Tensor::from_fn(4, 2, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        let r = Tensor::from_fn(4, 2, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        let loss = |c: &InvConv1x1<f64>| -> f64 {
            c.inverse(&y).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let inv = conv.inverse_weight().unwrap();
        let mut grad = conv.zeros_like();
        let dy = conv.inverse_backward(&inv, &y, &r, &mut grad);
        let eps = 1e-6;
        for idx in [0, 5, 10, 15] {
            let mut p = conv.clone();
            p.weight[idx] += eps;
            let mut m = conv.clone();
            m.weight[idx] -= eps;
            let fd = (loss(&p) - loss(&m)) / (2.0 * eps);
            assert!((fd - grad.weight[idx]).abs() < 1e-6, "{fd} vs {}", grad.weight[idx]);
        }
        // input gradient: x = W^-1 y is linear in y
        let mut yp = y.clone();
        yp.data_mut()[3] += 1.0;
        let delta: f64 = conv.inverse(&yp).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
            - loss(&conv);
        assert!((delta - dy.data()[3]).abs() < 1e-9);
    }
}
