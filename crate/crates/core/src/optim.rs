//! Adam with bias-corrected moments.

use crate::networks::ParamSet;
use crate::tensor::Scalar;

pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One Adam step over flat slices; `step` is the 1-based update count.
pub fn adam_update<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    hp: AdamHyper,
) {
    let b1 = T::lit(hp.beta1);
    let b2 = T::lit(hp.beta2);
    let one = T::one();
    let bc1 = T::lit(1.0 - hp.beta1.powi(step as i32));
    let bc2 = T::lit(1.0 - hp.beta2.powi(step as i32));
    let lr = T::lit(hp.lr);
    let eps = T::lit(hp.eps);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Moment buffers for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(like: &ParamSet<T>) -> Self {
        Self {
            m: ParamSet::zeros(like.id(), like.side()),
            v: ParamSet::zeros(like.id(), like.side()),
            step: 0,
        }
    }

    pub fn apply(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, hp: AdamHyper) {
        self.step += 1;
        let step = self.step;
        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut().iter_mut()));
        for ((p, g), (m, v)) in tensors {
            adam_update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), step, hp);
        }
    }
}
