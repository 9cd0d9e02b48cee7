use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    /// Lower rate kept for fine-tuning runs.
    pub fn fine_tune() -> Self {
        Self::with_lr(5e-5)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moment buffers laid out like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub step: u64,
}

impl<P: Parameters + Clone> AdamState<P> {
    pub fn new(params: &P) -> Self {
        let mut m = params.clone();
        m.zero();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, config: &AdamConfig, params: &mut P, grads: &P) -> Result<()> {
        let (pt, gt) = (params.tensors(), grads.tensors());
        if pt.len() != gt.len() || pt.iter().zip(&gt).any(|(a, b)| a.shape != b.shape) {
            return Err(Error::ShapeMismatch("gradient layout differs from parameters".into()));
        }
        self.step += 1;
        let c1 = 1.0 - config.beta1.powf(self.step as f64);
        let c2 = 1.0 - config.beta2.powf(self.step as f64);
        let grads = grads.tensors();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Tensor;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::with_lr(1e-3);
        let mut p = Tensor::filled(&[4], 1.0);
        let g = Tensor {
            shape: vec![4],
            data: vec![0.5, -2.0, 0.02, 40.0],
        };
        let mut st = AdamState::new(&p);
        st.step(&cfg, &mut p, &g).unwrap();
        for (&x, &gv) in p.data.iter().zip(&g.data) {
            let moved = 1.0 - x;
            assert_eq!(moved.signum(), gv.signum());
            assert!(moved.abs() <= cfg.lr && moved.abs() >= cfg.lr * (1.0 - 1e-6), "{moved}");
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut p = Tensor::filled(&[3], 2.0);
        let mut st = AdamState::new(&p);
        st.step(&cfg, &mut p, &Tensor::filled(&[3], 1.0)).unwrap();
        let (m1, v1, p1) = (st.m.clone(), st.v.clone(), p.clone());
        // A zero gradient still applies the decayed momentum; with zero moments it is a no-op.
        let mut fresh = AdamState::new(&p);
        fresh.step(&cfg, &mut p, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(p, p1);
        st.step(&cfg, &mut p.clone(), &Tensor::zeros(&[3])).unwrap();
        for i in 0..3 {
            assert!(st.m.data[i] < m1.data[i] && st.v.data[i] < v1.data[i]);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let cfg = AdamConfig::with_lr(0.0);
        let mut p = Tensor::filled(&[3], 0.25);
        let mut st = AdamState::new(&p);
        st.step(&cfg, &mut p, &Tensor::filled(&[3], 3.0)).unwrap();
        assert_eq!(p, Tensor::filled(&[3], 0.25));
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::zeros(&[3]);
        let mut st = AdamState::new(&p);
        assert!(matches!(
            st.step(&AdamConfig::default(), &mut p, &Tensor::zeros(&[2])),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
