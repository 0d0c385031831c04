use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::CSegNetParams;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates per parameter, and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: BTreeMap<String, Tensor<T>>,
    pub v: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }
}

/// One bias-corrected Adam update of every parameter that has a gradient.
/// A non-finite gradient rejects the whole step and leaves state untouched.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut CSegNetParams<T>,
    grads: &BTreeMap<String, Tensor<T>>,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        let p = params.get(name).ok_or_else(|| TrainError::UnknownParameter(name.clone()))?;
        if p.shape() != g.shape() {
            return Err(TrainError::GradientShape(name.clone()));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(name.clone()));
        }
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
    let bc1 = T::lit(1.0 - c.beta1.powi(t));
    let bc2 = T::lit(1.0 - c.beta2.powi(t));
    let (lr, eps) = (T::lit(c.lr), T::lit(c.epsilon));
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
        for (((pi, mi), vi), &gi) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
