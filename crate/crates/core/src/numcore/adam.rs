use super::{ParamStore, Scalar, Tensor};
use crate::error::{bail, Result};

/// Adam optimizer state with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ParamStore<F>, lr: F) -> Self {
        let m: Vec<Tensor<F>> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            eps: F::lit(1e-8),
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter from its accumulated
    /// gradient, then zeroes all gradients. A non-finite gradient aborts the
    /// step before any value changes.
    pub fn step(&mut self, params: &mut ParamStore<F>) -> Result<()> {
        if params.len() != self.m.len() {
            bail!(Argument, "optimizer built for {} parameters, store has {}", self.m.len(), params.len());
        }
        if let Some(p) = params.iter().find(|p| p.trainable && !p.grad.is_finite()) {
            bail!(Numeric, "non-finite gradient for parameter {}", p.name);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = F::one() - self.beta1.powi(t);
        let bc2 = F::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.trainable {
                continue;
            }
            let grads = p.grad.data();
            let values = p.value.data_mut();
            for (((x, &g), mi), vi) in values.iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = b1 * *mi + (F::one() - b1) * g;
                *vi = b2 * *vi + (F::one() - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grads();
        Ok(())
    }
}
