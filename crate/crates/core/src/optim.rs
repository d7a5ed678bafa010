//! Optimizers. Both keep per-parameter state aligned with a [`ParamStore`].

use crate::numerics::{Gradients, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One bias-corrected update with learning rate `lr`.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let Some(g) = grads.param_ref(id) else { continue };
            let m = &mut self.first_moment[id.index()];
            let v = &mut self.second_moment[id.index()];
            let w = store.get_mut(id);
            for (((wi, mi), vi), gi) in w
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *wi -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Plain SGD with classical momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub momentum: f64,
    pub velocity: Vec<Tensor>,
}

impl SgdMomentum {
    pub fn new(store: &ParamStore, momentum: f64) -> Self {
        SgdMomentum {
            momentum,
            velocity: store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        for id in store.ids().collect::<Vec<_>>() {
            let Some(g) = grads.param_ref(id) else { continue };
            let vel = &mut self.velocity[id.index()];
            let w = store.get_mut(id);
            for ((wi, vi), gi) in w.data_mut().iter_mut().zip(vel.data_mut()).zip(g.data()) {
                *vi = self.momentum * *vi + gi;
                *wi -= lr * *vi;
            }
        }
    }
}
