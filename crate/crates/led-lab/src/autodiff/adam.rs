//! Adam with bias correction.

use super::param::ParamSet;

pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let moments = params
            .iter()
            .map(|p| {
                let n = p.borrow().values.len();
                (vec![0.0; n], vec![0.0; n])
            })
            .collect();
        AdamState { lr, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, moments }
    }

    /// One update over every parameter's accumulated gradient.
    pub fn step(&mut self, params: &ParamSet) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (p, (m, v)) in params.iter().zip(self.moments.iter_mut()) {
            let mut p = p.borrow_mut();
            debug_assert_eq!(p.values.len(), m.len(), "adam state out of sync with params");
            for i in 0..m.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
