use super::{Gradient, Params};

/// Momentum SGD with global gradient-norm clipping.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub clip: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            clip: 1.0,
            velocity: Vec::new(),
        }
    }

    /// Applies one update to the active slots of `grad`. Inactive slots are left bit-identical.
    pub fn step(&mut self, params: &mut Params, grad: &Gradient) {
        if self.velocity.len() != params.len() {
            self.velocity = vec![0.0; params.len()];
        }
        let norm = grad.norm();
        let scale = if self.clip > 0.0 && norm > self.clip {
            self.clip / norm
        } else {
            1.0
        };
        let slots = params.slots().to_vec();
        let data = params.data_mut();
        for (slot, &active) in slots.iter().zip(&grad.active) {
            if !active {
                continue;
            }
            for i in slot.offset..slot.offset + slot.len {
                let v = self.momentum * self.velocity[i] + scale * grad.flat[i];
                self.velocity[i] = v;
                if self.lr != 0.0 {
                    data[i] -= self.lr * v;
                }
            }
        }
    }
}

/// Adam with bias correction and the same clipping and slot rules as [`Sgd`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Gradient) {
        if self.m.len() != params.len() {
            self.m = vec![0.0; params.len()];
            self.v = vec![0.0; params.len()];
            self.t = 0;
        }
        self.t += 1;
        let norm = grad.norm();
        let scale = if self.clip > 0.0 && norm > self.clip {
            self.clip / norm
        } else {
            1.0
        };
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let slots = params.slots().to_vec();
        let data = params.data_mut();
        for (slot, &active) in slots.iter().zip(&grad.active) {
            if !active {
                continue;
            }
            for i in slot.offset..slot.offset + slot.len {
                let g = scale * grad.flat[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                if self.lr != 0.0 {
                    data[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn params() -> Params {
        let mut p = Params::new();
        p.push("a", Tensor::filled(&[2], 1.0)).unwrap();
        p.push("b", Tensor::filled(&[1], 1.0)).unwrap();
        p
    }

    #[test]
    fn clips_to_unit_norm() {
        let mut p = params();
        let g = Gradient {
            flat: vec![3.0, 4.0, 0.0],
            active: vec![true, true],
        };
        Sgd::new(1.0, 0.0).step(&mut p, &g);
        assert!((p.data()[0] - 0.4).abs() < 1e-12);
        assert!((p.data()[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn inactive_and_zero_lr_untouched() {
        let mut p = params();
        let g = Gradient {
            flat: vec![0.1, 0.1, 0.1],
            active: vec![true, false],
        };
        Sgd::new(0.0, 0.9).step(&mut p, &g);
        assert_eq!(p.data(), &[1.0, 1.0, 1.0]);
        Sgd::new(0.5, 0.9).step(&mut p, &g);
        assert_eq!(p.data()[2], 1.0);
        assert!(p.data()[0] < 1.0);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = params();
        let g = Gradient {
            flat: vec![0.3, -0.01, 5.0],
            active: vec![true, false],
        };
        Adam::new(0.1).step(&mut p, &g);
        assert!((p.data()[0] - 0.9).abs() < 1e-6);
        assert!((p.data()[1] - 1.1).abs() < 1e-6);
        assert_eq!(p.data()[2], 1.0);
    }
}
