//! Adam optimizer over a flat registry of named real tensors.

use super::tensor::Tensor;
use crate::error::{CoreError, CoreResult};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the shared timestep.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper, param_sizes: &[usize]) -> Self {
        AdamState {
            hyper,
            t: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update: t += 1 first, then
    /// m_t = b1 m + (1-b1) g; v_t = b2 v + (1-b2) g^2;
    /// w -= alpha sqrt(1-b2^t)/(1-b1^t) * m_t / (sqrt(v_t) + eps).
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> CoreResult<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::dim("adam state arity mismatch"));
        }
        self.t += 1;
        let h = self.hyper;
        let alpha_t = h.alpha * (1.0 - h.beta2.powi(self.t as i32)).sqrt()
            / (1.0 - h.beta1.powi(self.t as i32));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.numel() != g.numel() || p.numel() != m.len() {
                return Err(CoreError::dim("adam tensor size mismatch"));
            }
            let pd = p.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gd[i];
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gd[i] * gd[i];
                pd[i] -= alpha_t * m[i] / (v[i].sqrt() + h.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut params = vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let grads = vec![Tensor::zeros(&[3])];
        let mut st = AdamState::new(AdamHyper::default(), &[3]);
        st.step(&mut params, &grads).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn degenerate_betas_give_sign_step() {
        let hyper = AdamHyper {
            alpha: 0.05,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 1e-300,
        };
        let mut params = vec![Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()];
        let grads = vec![Tensor::new(vec![2], vec![3.0, -0.2]).unwrap()];
        let mut st = AdamState::new(hyper, &[2]);
        st.step(&mut params, &grads).unwrap();
        assert!((params[0].data()[0] + 0.05).abs() < 1e-12);
        assert!((params[0].data()[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn first_step_matches_scalar_arithmetic() {
        let hyper = AdamHyper::default();
        let mut params = vec![Tensor::scalar(0.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(hyper, &[1]);
        st.step(&mut params, &grads).unwrap();
        // oracle: m1 = 0.1, v1 = 1e-3,
        // alpha_1 = 1e-3 sqrt(1 - 0.999) / (1 - 0.9),
        // delta = -alpha_1 * 0.1 / (sqrt(1e-3) + 1e-8)
        let alpha_1 = 1e-3 * (1.0f64 - 0.999).sqrt() / (1.0 - 0.9);
        let delta = -alpha_1 * 0.1 / ((1e-3f64).sqrt() + 1e-8);
        assert!((params[0].item() - delta).abs() < 1e-15);
        assert!((delta + 9.999e-4).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn updates_are_bitwise_deterministic() {
        let run = || {
            let mut params = vec![Tensor::new(vec![4], vec![0.3, -0.4, 1.1, 0.0]).unwrap()];
            let mut st = AdamState::new(AdamHyper::default(), &[4]);
            for k in 0..50 {
                let g = Tensor::new(
                    vec![4],
                    (0..4).map(|i| ((k * 7 + i) as f64 * 0.13).sin()).collect(),
                )
                .unwrap();
                st.step(&mut params, &[g]).unwrap();
            }
            params[0].data().to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
