use super::{Gradients, Real, Tensor};
use crate::error::{Error, Result};

/// Trainable tensor with its accumulated gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter<T: Real = f32> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
    adam_m: Vec<T>,
    adam_v: Vec<T>,
    step_count: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<T>) -> Result<Self> {
        let value = Tensor::leaf(shape, data, true)?;
        let n = value.numel();
        Ok(Parameter {
            name: name.into(),
            value,
            grad: vec![T::ZERO; n],
            adam_m: vec![T::ZERO; n],
            adam_v: vec![T::ZERO; n],
            step_count: 0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The gradient-tracked leaf to feed into ops.
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[T] {
        self.value.data()
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Adds this parameter's share of `grads` into its gradient buffer.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        if let Some(g) = grads.get(&self.value) {
            self.grad.iter_mut().zip(g).for_each(|(a, &v)| *a += v);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }

    /// Overwrites the values, keeping identity and resetting optimizer state.
    pub fn set_data(&mut self, data: Vec<T>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(Error::shape(format!(
                "parameter {}: expected {} values, got {}",
                self.name,
                self.numel(),
                data.len()
            )));
        }
        self.value = self.value.with_data(data);
        self.reset_optimizer();
        Ok(())
    }

    /// Clears moments, step count and gradient.
    pub fn reset_optimizer(&mut self) {
        self.adam_m.fill(T::ZERO);
        self.adam_v.fill(T::ZERO);
        self.step_count = 0;
        self.zero_grad();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update with bias correction on every parameter, then clears
/// their gradients.
pub fn adam_step<'a, T: Real>(params: impl IntoIterator<Item = &'a mut Parameter<T>>, cfg: &AdamConfig) {
    for p in params {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
        let step = T::from_f64(cfg.lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(cfg.eps);
        let mut data = p.value.data().to_vec();
        for (((x, &g), m), v) in data
            .iter_mut()
            .zip(&p.grad)
            .zip(p.adam_m.iter_mut())
            .zip(p.adam_v.iter_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *x -= step * *m / ((*v * inv_bc2).sqrt() + eps);
        }
        p.value = p.value.with_data(data);
        p.zero_grad();
    }
}
