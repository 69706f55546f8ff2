use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First and second moment buffers shadowing a parameter block.
/// Empty for plain SGD.
#[derive(Clone, Debug, Default)]
pub(crate) struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    pub fn new(optimizer: Optimizer, len: usize) -> Self {
        match optimizer {
            Optimizer::Sgd => Moments::default(),
            Optimizer::Adam => Moments {
                m: vec![0.0; len],
                v: vec![0.0; len],
            },
        }
    }

    /// Moment slices for `start..start + len`; empty slices under SGD.
    pub fn slice(&mut self, start: usize, len: usize) -> (&mut [f64], &mut [f64]) {
        if self.m.is_empty() {
            (&mut [], &mut [])
        } else {
            (&mut self.m[start..start + len], &mut self.v[start..start + len])
        }
    }
}

/// Minimizing update rule. Adam updates rows lazily: only parameters touched by
/// a step move, with bias correction taken from the global step count.
#[derive(Clone, Debug)]
pub(crate) struct Stepper {
    optimizer: Optimizer,
    lr: f64,
    correction1: f64,
    correction2: f64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl Stepper {
    pub fn new(optimizer: Optimizer, lr: f64) -> Self {
        Stepper {
            optimizer,
            lr,
            correction1: 1.0,
            correction2: 1.0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }

    /// Advances the global step; call once per sample before `apply`.
    pub fn tick(&mut self) {
        self.beta1_pow *= BETA1;
        self.beta2_pow *= BETA2;
        self.correction1 = 1.0 - self.beta1_pow;
        self.correction2 = 1.0 - self.beta2_pow;
    }

    pub fn apply(&self, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64]) {
        match self.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                for k in 0..params.len() {
                    let g = grads[k];
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                    let m_hat = m[k] / self.correction1;
                    let v_hat = v[k] / self.correction2;
                    params[k] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}
