//! Adam optimizer over a model's flat parameter vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::stegnet::tensor::Real;
use crate::stegnet::StegModel;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update of `params` given `grad` (same length).
    pub fn update<T: Real>(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(shape_err(alloc::format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for i in 0..params.len() {
            let g = grad[i].to_f64().unwrap();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let step = self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            params[i] -= T::lit(step);
        }
        Ok(())
    }

    pub fn step_model<T: Real>(&mut self, model: &mut StegModel<T>, grad: &StegModel<T>) -> Result<()> {
        let mut params = model.flat();
        self.update(&mut params, &grad.flat())?;
        model.load_flat(&params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_parameter_by_lr_against_the_gradient_sign() {
        let mut adam = Adam::new(3, 0.01);
        let mut p = [1.0f64, -2.0, 0.5];
        adam.update(&mut p, &[0.3, -4.0, 0.0]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 1.99).abs() < 1e-9);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut adam = Adam::new(2, 0.05);
        let mut p = [3.0f64, -1.5];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            adam.update(&mut p, &g).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut adam = Adam::new(2, 0.1);
        assert!(adam.update(&mut [0.0f32; 3], &[0.0; 3]).is_err());
    }
}
