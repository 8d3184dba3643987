use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn update(
        &mut self,
        config: &AdamConfig,
        name: &str,
        param: &mut [f64],
        grad: &[f64],
    ) -> Result<()> {
        if param.len() != grad.len() || param.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: parameter {name} has {} values, gradient {}, state {}",
                param.len(),
                grad.len(),
                self.m.len()
            )));
        }
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {bad} for parameter {name}"
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - config.beta1.powi(t);
        let bc2 = 1.0 - config.beta2.powi(t);
        for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
        Ok(())
    }
}

/// Adam over every parameter of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let states = store
            .ids()
            .map(|id| AdamState::new(store.get(id).len()))
            .collect();
        Self { config, states }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Applies the gradients last collected into `store`. Parameters without
    /// a gradient are left alone.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.states.len() != store.len() {
            return Err(Error::Shape(format!(
                "adam tracks {} parameters, store has {}",
                self.states.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for (id, state) in ids.into_iter().zip(&mut self.states) {
            let (name, value, grad) = store.value_and_grad_mut(id);
            let Some(grad) = grad else { continue };
            let grad = grad.data().to_vec();
            state.update(&self.config, name, value.data_mut(), &grad)?;
        }
        Ok(())
    }
}
