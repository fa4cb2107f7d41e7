use super::{ParamGrads, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for every parameter of one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 0.0067;

    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|(_, _, p)| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moment(&self, index: usize) -> &Tensor {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor {
        &self.v[index]
    }
}

/// One Adam update. Parameters without an entry in `grads` are treated as
/// having a zero gradient (their moments still decay).
pub fn adam_step(store: &mut ParamStore, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::shape(
            "adam_step",
            format!("state tracks {} parameters, store has {}", state.m.len(), store.len()),
        ));
    }
    for id in store.ids() {
        if let Some(g) = grads.get(id) {
            if g.shape() != store.get(id).shape() || g.shape() != state.m[id.index()].shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "{}: gradient {:?} vs parameter {:?}",
                        store.name(id),
                        g.shape(),
                        store.get(id).shape()
                    ),
                ));
            }
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);

    for id in store.ids() {
        let i = id.index();
        let grad = grads.get(id);
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = store.get_mut(id).data_mut();
        for j in 0..p.len() {
            let g = grad.map_or(0.0, |g| g.data()[j]);
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
