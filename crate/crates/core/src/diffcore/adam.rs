/// Bias-corrected Adam over a flat parameter slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update in place; `maximize` ascends the objective.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], maximize: bool) {
        assert_eq!(params.len(), self.first_moment.len(), "parameter length changed");
        assert_eq!(grads.len(), params.len(), "gradient length mismatch");
        self.step_count += 1;
        let t = self.step_count as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let sign = if maximize { 1.0 } else { -1.0 };
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p += sign * self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
