use serde::{Deserialize, Serialize};

use super::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConstants {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConstants {
    fn default() -> Self {
        AdamConstants { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with a fixed learning rate and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    c: AdamConstants,
    t: i32,
    m: Parameters,
    v: Parameters,
}

impl Adam {
    pub fn new(params: &Parameters, lr: f64, c: AdamConstants) -> Self {
        Adam { lr, c, t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) {
        self.t += 1;
        let bc1 = 1.0 - self.c.beta1.powi(self.t);
        let bc2 = 1.0 - self.c.beta2.powi(self.t);
        let (b1, b2, eps, lr) = (self.c.beta1, self.c.beta2, self.c.epsilon, self.lr);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar(v: f64) -> Parameters {
        use super::super::params::LayerParams;
        Parameters {
            layers: vec![LayerParams { weights: vec![DMatrix::from_element(1, 1, v)], depthwise: None, bias: None }],
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(1.0);
        let mut opt = Adam::new(&p, 0.1, AdamConstants::default());
        opt.step(&mut p, &scalar(3.0));
        // m̂ = g, v̂ = g², step = lr g/(|g| + eps)
        assert!((p.layers[0].weights[0][0] - (1.0 - 0.1 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = scalar(5.0);
        let mut opt = Adam::new(&p, 0.05, AdamConstants::default());
        for _ in 0..2000 {
            let x = p.layers[0].weights[0][0];
            opt.step(&mut p, &scalar(2.0 * (x - 1.5)));
        }
        assert!((p.layers[0].weights[0][0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn zero_rate_is_a_no_op() {
        let mut p = scalar(2.0);
        let mut opt = Adam::new(&p, 0.0, AdamConstants::default());
        for _ in 0..10 {
            opt.step(&mut p, &scalar(-7.0));
        }
        assert_eq!(p, scalar(2.0));
    }
}
