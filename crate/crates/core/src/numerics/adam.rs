use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Moment buffers and hyperparameters for Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam step over `params`, which must keep the same order and shapes
/// across calls with the same `state`. Gradients are zeroed afterwards.
pub fn adam_update(params: &mut [(String, &mut Tensor)], state: &mut AdamState) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(_, p)| p.grad().is_none()) {
        return Err(Error::MissingGrad(name.clone()));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Invalid(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (lr, b1, b2, eps) = (state.lr, state.beta1, state.beta2, state.eps);

    for (k, (name, p)) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        if m.len() != p.len() {
            return Err(Error::Invalid(format!("parameter `{name}` changed shape")));
        }
        let grad = p.grad().map(<[f64]>::to_vec).unwrap_or_default();
        let data = p.data_mut();
        for i in 0..data.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if let Some(gbuf) = p.grad_mut() {
            gbuf.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Ok(())
}
