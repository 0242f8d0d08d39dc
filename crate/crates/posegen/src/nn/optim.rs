//! Adam with bias correction, one moment pair per parameter blob.

use super::layers::GradStore;

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(blob_sizes: &[usize], beta1: f32, beta2: f32) -> Self {
        Adam {
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: blob_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: blob_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Vec<f32>>, grads: &GradStore, lr: f32) {
        assert_eq!(params.len(), grads.blobs.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads.blobs.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                p[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
