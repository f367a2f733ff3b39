//! Adam over flat parameter slices.

use crate::lm::Params;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment buffers are created lazily on the first step and keyed by slot
/// position, so callers must pass slots in a stable order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, slots: Vec<(&mut [f64], &[f64])>, lr: f64) {
        if self.m.is_empty() {
            self.m = slots.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), slots.len(), "slot layout changed between Adam steps");
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for ((param, grad), (m, v)) in slots.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                param[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }

    /// Update the trainable tensors of `params` (adapter tensors only when
    /// an adapter is attached).
    pub fn update_params(&mut self, params: &mut Params, grad: &Params, lr: f64) {
        let trainable: Vec<bool> = params.named().iter().map(|(n, _)| params.is_trainable(n)).collect();
        let slots = params
            .named_mut()
            .into_iter()
            .zip(grad.named())
            .zip(trainable)
            .filter(|(_, t)| *t)
            .map(|(((_, p), (_, g)), _)| (p.data.as_mut_slice(), g.data.as_slice()))
            .collect();
        self.update(slots, lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // f(x) = (x - 3)^2 at x = 0: g = -6, mhat = g, vhat = g^2
        let mut x = [0.0];
        let mut adam = AdamState::new();
        adam.update(vec![(&mut x, &[-6.0])], 0.1);
        let expected = 0.0 - 0.1 * (-6.0) / (6.0 + 1e-8);
        assert!((x[0] - expected).abs() < 1e-12);
    }
}
