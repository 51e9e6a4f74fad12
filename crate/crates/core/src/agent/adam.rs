use super::mlp::{Gradients, QNetwork};

/// Adam optimizer state over a network's flattened parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(net: &QNetwork, learning_rate: f64) -> Self {
        let n = net.param_count();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut k = 0;
        for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            for (p, &gi) in params.zip(gs) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}
