use super::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are indexed like the store.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Adam {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// First and second moments of parameter `index`, if it has been updated.
    pub fn moments(&self, index: usize) -> Option<(&[f64], &[f64])> {
        match (self.m.get(index), self.v.get(index)) {
            (Some(m), Some(v)) if !m.is_empty() => Some((m, v)),
            _ => None,
        }
    }

    /// Applies one update to every trainable parameter using its stored gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        if self.m.len() < store.len() {
            self.m.resize(store.len(), Vec::new());
            self.v.resize(store.len(), Vec::new());
        }
        for id in store.ids().collect::<Vec<_>>() {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let i = id.index();
            let n = p.value.numel();
            if self.m[i].len() != n {
                self.m[i] = vec![0.0; n];
                self.v[i] = vec![0.0; n];
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let grad = p.grad.data().to_vec();
            for (k, (w, g)) in p.value.data_mut().iter_mut().zip(grad).enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nd::Tensor;

    #[test]
    fn first_step_is_sign_like() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::row(vec![1.0, 1.0, 1.0]), true)
            .unwrap();
        let buf = store.add("buf", Tensor::row(vec![5.0]), false).unwrap();
        store.get_mut(w).grad = Tensor::row(vec![0.5, -2.0, 0.0]);
        store.get_mut(buf).grad = Tensor::row(vec![1.0]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut store);
        // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        let expect = [
            1.0 - 1e-3 * 0.5 / (0.5 + 1e-8),
            1.0 + 1e-3 * 2.0 / (2.0 + 1e-8),
            1.0,
        ];
        for (a, e) in store.get(w).value.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
        assert_eq!(store.get(buf).value.data(), &[5.0]);
        let (m, v) = adam.moments(w.index()).unwrap();
        assert!((m[1] + 0.2).abs() < 1e-15);
        assert!((v[1] - 0.004).abs() < 1e-15);
    }

    #[test]
    fn second_step_matches_hand_computation() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.0), true).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        store.get_mut(w).grad = Tensor::scalar(1.0);
        adam.step(&mut store);
        store.get_mut(w).grad = Tensor::scalar(-1.0);
        adam.step(&mut store);
        let m = 0.9 * 0.1 - 0.1;
        let v = 0.999 * 0.001 + 0.001;
        let m_hat = m / (1.0 - 0.81);
        let v_hat: f64 = v / (1.0 - 0.999f64.powi(2));
        let expect = -1e-3 * 1.0 / (1.0 + 1e-8) - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((store.get(w).value.data()[0] - expect).abs() < 1e-15);
    }
}
