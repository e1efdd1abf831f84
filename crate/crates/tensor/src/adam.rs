use std::collections::BTreeMap;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam moments for one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.v.get(name)
    }
}

/// One bias-corrected Adam update of every entry in `params`.
///
/// `grads` must hold a same-shaped tensor for each parameter; nothing is
/// modified when any is missing.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(TensorError::Contract(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| TensorError::MissingGradient(name.to_string()))?;
        if g.numel() != p.numel() {
            return Err(TensorError::Shape {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);

    for (name, p) in params.iter_mut() {
        let g = grads.get(name).expect("checked above");
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(p.shape()));
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (i, &gi) in g.data().iter().enumerate() {
            md[i] = b1 * md[i] + (1.0 - b1) * gi;
            vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
