use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        OptimizerState { config, step: 0, first_moment: zeros.clone(), second_moment: zeros }
    }
}

/// One bias-corrected Adam update; clears every gradient afterwards.
pub fn adam_step(params: &mut ParamSet, state: &mut OptimizerState) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(Error::Contract(format!(
            "optimizer tracks {} tensors, parameter set has {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    for (name, t) in params.iter() {
        if t.grad().is_none() {
            return Err(Error::Contract(format!("parameter {name} has no gradient")));
        }
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((tensor, m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        if m.len() != tensor.numel() {
            return Err(Error::Contract("optimizer moment shape differs from parameter".into()));
        }
        let grad = tensor.grad().expect("checked above").to_vec();
        for (((p, g), m), v) in tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        tensor.clear_grad();
    }
    Ok(())
}
