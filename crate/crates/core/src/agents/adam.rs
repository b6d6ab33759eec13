//! Adam optimizer over flat parameter vectors (beta1 = 0.9, beta2 = 0.999,
//! eps = 1e-8).

use crate::mlp::{FlatParams, GradientBuffer};

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// One descent step on the accumulated gradients.
    pub fn step(&mut self, params: &mut FlatParams, grads: &GradientBuffer) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .as_mut_slice()
            .iter_mut()
            .zip(grads.as_slice())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    /// Scalar variant for single learned parameters (e.g. a log-temperature).
    pub fn step_scalar(&mut self, param: &mut f64, grad: f64) {
        debug_assert_eq!(self.m.len(), 1);
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        self.m[0] = self.beta1 * self.m[0] + (1.0 - self.beta1) * grad;
        self.v[0] = self.beta2 * self.v[0] + (1.0 - self.beta2) * grad * grad;
        let m_hat = self.m[0] / bc1;
        let v_hat = self.v[0] / bc2;
        *param -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Activation, GradientBuffer, MlpArchitecture};

    #[test]
    fn descends_a_quadratic() {
        // Minimize 0.5 * p^2 for every coordinate; gradient is p itself.
        let arch = MlpArchitecture::new(1, vec![2], 1, Activation::Tanh).unwrap();
        let mut params = FlatParams::new(vec![1.0; arch.param_count()]);
        let mut adam = Adam::new(0.05, params.len());
        let mut grads = GradientBuffer::for_arch(&arch);
        for _ in 0..500 {
            grads.zero();
            let g: Vec<f64> = params.as_slice().to_vec();
            grads.as_mut_slice().copy_from_slice(&g);
            adam.step(&mut params, &grads);
        }
        assert!(params.as_slice().iter().all(|p| p.abs() < 1e-3));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With a constant gradient of 1, the bias-corrected first Adam step
        // is almost exactly -lr.
        let arch = MlpArchitecture::new(1, vec![1], 1, Activation::Tanh).unwrap();
        let mut params = FlatParams::zeros(arch.param_count());
        let mut adam = Adam::new(0.1, params.len());
        let mut grads = GradientBuffer::for_arch(&arch);
        grads.as_mut_slice().fill(1.0);
        adam.step(&mut params, &grads);
        for p in params.as_slice() {
            assert!((p + 0.1).abs() < 1e-6, "step was {p}");
        }
    }
}
