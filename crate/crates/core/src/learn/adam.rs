//! Adaptive-moment gradient descent used by the training loop.

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u32,
}

impl Adam {
    pub fn new(learning_rate: f64, dim: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// One update with bias-corrected first and second moments.
    pub fn update(&mut self, x: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(x.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for j in 0..x.len() {
            let g = grad[j];
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            x[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // with bias correction the very first update is lr * sign(g)
        let mut x = vec![1.0, -2.0];
        let mut adam = Adam::new(0.01, 2);
        adam.update(&mut x, &[0.3, -0.7]);
        assert!((x[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((x[1] - (-2.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut x = vec![5.0];
        let mut adam = Adam::new(0.05, 1);
        for _ in 0..2000 {
            let g = 2.0 * (x[0] - 3.0);
            adam.update(&mut x, &[g]);
        }
        assert!((x[0] - 3.0).abs() < 1e-3);
    }
}
