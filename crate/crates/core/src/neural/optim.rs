use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Adam with global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Gradients whose global L2 norm exceeds this are rescaled to it.
    pub clip_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64, clip_norm: Option<f64>) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Gradient after clipping, as the moments will see it.
    pub fn clipped(&self, grads: &[f64]) -> Vec<f64> {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        match self.clip_norm {
            Some(c) if norm > c => grads.iter().map(|g| g * c / norm).collect(),
            _ => grads.to_vec(),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NeuralError::ShapeMismatch { expected: self.m.len(), got: grads.len() });
        }
        let g = self.clipped(grads);
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut adam = Adam::new(2, 1e-3, Some(1.0));
        let mut p = vec![1.0, -2.0];
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        adam.step(&mut p, &[0.5, 0.0]).unwrap();
        let (m1, v1) = (adam.moments().0[0], adam.moments().1[0]);
        let before = p.clone();
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert!((adam.moments().0[0] - 0.9 * m1).abs() < 1e-15);
        assert!((adam.moments().1[0] - 0.999 * v1).abs() < 1e-15);
        assert_eq!(p[1], before[1]);
    }

    #[test]
    fn clipping_halves_a_double_norm_gradient() {
        let adam = Adam::new(3, 1e-3, Some(1.0));
        let g = [1.2, -1.6, 0.0]; // norm 2
        let c = adam.clipped(&g);
        for (a, b) in c.iter().zip(g) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        assert_eq!(adam.clipped(&[0.3, 0.4, 0.0]), vec![0.3, 0.4, 0.0]);
    }

    #[test]
    fn converges_on_a_quadratic() {
        // f(x) = (x − 3)², minimum at 3.
        let mut adam = Adam::new(1, 0.02, None);
        let mut x = vec![2.5];
        for _ in 0..100 {
            let g = 2.0 * (x[0] - 3.0);
            adam.step(&mut x, &[g]).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "{}", x[0]);
    }
}
