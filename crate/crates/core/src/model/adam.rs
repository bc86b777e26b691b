//! Bias-corrected Adam over named parameter blocks.

use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// In-place update of one block at 1-based `step`.
pub fn adam_update<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    config: &AdamConfig,
    step: u64,
) {
    let b1 = T::of(config.beta1);
    let b2 = T::of(config.beta2);
    let one = T::one();
    let bc1 = T::of(1.0 - config.beta1.powi(step as i32));
    let bc2 = T::of(1.0 - config.beta2.powi(step as i32));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.epsilon);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// First-block-wins scan for a non-finite gradient entry.
pub fn check_finite<'a, T: Scalar>(blocks: impl IntoIterator<Item = (&'a str, &'a [T])>) -> Result<()> {
    for (name, g) in blocks {
        if let Some((index, v)) = g.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: name.to_string(),
                index,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

/// Optimizer state for an ordered list of blocks; moments are allocated on
/// the first step.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params[k]` and `grads[k]` must describe the same
    /// block on every call. Nothing is modified when a gradient is
    /// non-finite.
    pub fn step(&mut self, params: Vec<(&str, &mut [T])>, grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Contract(format!(
                "{} parameter blocks but {} gradient blocks",
                params.len(),
                grads.len()
            )));
        }
        check_finite(params.iter().map(|(n, _)| *n).zip(grads.iter().copied()))?;
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        for (k, (name, p)) in params.into_iter().enumerate() {
            if p.len() != grads[k].len() || p.len() != self.m[k].len() {
                return Err(Error::Contract(format!("block `{name}` changed size")));
            }
            adam_update(p, grads[k], &mut self.m[k], &mut self.v[k], &self.config, self.step);
        }
        Ok(())
    }

    pub fn step_model(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<()> {
        let mut names = Vec::new();
        let mut g = Vec::new();
        grads.visit(|n, s| {
            names.push(n.to_string());
            g.push(s);
        });
        let mut blocks = Vec::new();
        params.visit_mut(|_, s| blocks.push(s));
        let named: Vec<(&str, &mut [T])> = names.iter().map(String::as_str).zip(blocks).collect();
        self.step(named, &g)
    }
}
