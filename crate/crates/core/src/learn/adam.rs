use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, net: &Mlp) -> Self {
        let zeros: Vec<Vec<f64>> = net.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected step on `net` (gradient descent direction).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let sizes: Vec<usize> = grads.tensors().map(<[f64]>::len).collect();
        let expected: Vec<usize> = self.m.iter().map(Vec::len).collect();
        if sizes != expected {
            return Err(Error::Shape {
                context: "adam gradients",
                expected: expected.iter().sum(),
                actual: sizes.iter().sum(),
            });
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in net.tensors_mut().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::mlp::Head;
    use crate::rng::{SeedTree, Stream};
    use ndarray::Array2;

    fn setup() -> (Mlp, Adam) {
        let mut rng = SeedTree::new(1).rng(Stream::Init, &[0]);
        let net = Mlp::new(2, &[3], vec![Head::Identity(1)], &mut rng).unwrap();
        let adam = Adam::new(AdamConfig::with_lr(1e-3), &net);
        (net, adam)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut net, mut adam) = setup();
        let before: Vec<f64> = net.tensors().flatten().copied().collect();
        let g = net.zero_gradients();
        adam.step(&mut net, &g).unwrap();
        let after: Vec<f64> = net.tensors().flatten().copied().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let (mut net, mut adam) = setup();
        let before: Vec<f64> = net.tensors().flatten().copied().collect();
        let mut g = net.zero_gradients();
        for (i, v) in g.layers[0].weight.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.5 } else { -3.0 };
        }
        adam.step(&mut net, &g).unwrap();
        let after: Vec<f64> = net.tensors().flatten().copied().collect();
        let grads: Vec<f64> = g.tensors().flatten().copied().collect();
        for ((b, a), g) in before.iter().zip(&after).zip(&grads) {
            let expected = if *g == 0.0 { 0.0 } else { -1e-3 * g.signum() };
            assert!((a - b - expected).abs() < 1e-9, "{} vs {}", a - b, expected);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let (mut net, _) = setup();
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2), &net);
        let x = Array2::from_shape_vec((4, 2), vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, -1.0, 0.5]).unwrap();
        let y = [1.0, -1.0, 0.0, 2.0];
        let mse = |net: &Mlp| {
            let out = net.predict_batch(x.view()).unwrap();
            out.iter().zip(&y).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / 4.0
        };
        let start = mse(&net);
        for _ in 0..500 {
            let out = net.forward_batch(x.view()).unwrap();
            let g = Array2::from_shape_fn((4, 1), |(r, _)| 2.0 * (out[[r, 0]] - y[r]) / 4.0);
            let (grads, _) = net.backward(g.view()).unwrap();
            adam.step(&mut net, &grads).unwrap();
        }
        assert!(mse(&net) < 0.1 * start);
    }
}
