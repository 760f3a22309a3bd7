use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::tensor::Tensor;

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·step/T_max))`, with `step`
/// clamped to `[0, T_max]`.
pub fn cosine_lr(step: usize, t_max: usize, lr_max: f64, lr_min: f64) -> f64 {
    if t_max == 0 {
        return lr_max;
    }
    let s = step.min(t_max) as f64 / t_max as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * s).cos())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let c = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= c);
        }
    }
    norm
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    #[serde(skip)]
    m: Vec<Vec<f64>>,
    #[serde(skip)]
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ParamStore, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.values().iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// First and second moments, flattened in parameter order.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        (self.m.concat(), self.v.concat())
    }

    /// Restores moments saved by [`Self::moments`].
    pub fn set_moments(&mut self, m: &[f64], v: &[f64]) -> Result<()> {
        let total: usize = self.m.iter().map(Vec::len).sum();
        if m.len() != total || v.len() != total {
            return Err(Error::Checkpoint(format!(
                "optimizer state holds {}/{} values, model needs {total}",
                m.len(),
                v.len()
            )));
        }
        let mut off = 0;
        for (mi, vi) in self.m.iter_mut().zip(self.v.iter_mut()) {
            let n = mi.len();
            mi.copy_from_slice(&m[off..off + n]);
            vi.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.numel() != params.get(i).numel() {
                return Err(Error::Dimension {
                    op: "adamw",
                    lhs: g.shape().to_vec(),
                    rhs: params.get(i).shape().to_vec(),
                });
            }
            if let Some(k) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!("non-finite gradient in {}[{k}]", params.name(i))));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = params.get_mut(i).data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                p[k] *= 1.0 - lr * self.weight_decay;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![values.len()], values.to_vec()).unwrap());
        s
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 4e-4, 1e-5), 4e-4);
        assert!((cosine_lr(100, 100, 4e-4, 1e-5) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 4e-4, 0.0) - 2e-4).abs() < 1e-18);
        assert!((cosine_lr(500, 100, 4e-4, 0.0)).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = store(&[1.0, -2.0]);
        let mut opt = AdamW::new(&p, 0.0);
        opt.update(&mut p, &[Tensor::zeros(&[2])], 0.1).unwrap();
        assert_eq!(p.get(0).data(), &[1.0, -2.0]);
        let mut opt = AdamW::new(&p, 0.01);
        opt.update(&mut p, &[Tensor::zeros(&[2])], 0.1).unwrap();
        assert_eq!(p.get(0).data(), &[1.0 * (1.0 - 0.001), -2.0 * (1.0 - 0.001)]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        // fixed point of the moment recursions: m̂ → g, v̂ → g², so the step → lr·g/|g|
        let mut p = store(&[0.0]);
        let mut opt = AdamW::new(&p, 0.0);
        let g = [Tensor::new(vec![1], vec![0.37]).unwrap()];
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..5000 {
            opt.update(&mut p, &g, 1e-3).unwrap();
            let now = p.get(0).data()[0];
            last_step = prev - now;
            prev = now;
        }
        assert!((last_step - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn first_step_matches_hand_calculation() {
        let mut p = store(&[0.5]);
        let mut opt = AdamW::new(&p, 0.1);
        opt.update(&mut p, &[Tensor::new(vec![1], vec![2.0]).unwrap()], 0.01).unwrap();
        // decay 0.5·(1 − 0.001), then m̂ = 2, v̂ = 4: step 0.01·2/(2 + 1e-8)
        let want = 0.5 * 0.999 - 0.01 * 2.0 / (2.0 + 1e-8);
        assert!((p.get(0).data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = store(&[0.0, 0.0]);
        let mut opt = AdamW::new(&p, 0.0);
        let err = opt.update(&mut p, &[Tensor::new(vec![2], vec![0.0, f64::NAN]).unwrap()], 0.1).unwrap_err();
        assert!(err.to_string().contains("w[1]"));
        assert_eq!(p.get(0).data(), &[0.0, 0.0]);
    }

    #[test]
    fn clipping_hits_threshold() {
        let mut g = vec![Tensor::new(vec![2], vec![3.0, 4.0]).unwrap(), Tensor::new(vec![1], vec![12.0]).unwrap()];
        let before = clip_grad_norm(&mut g, 2.0);
        assert_eq!(before, 13.0);
        let after = clip_grad_norm(&mut g, 1e9);
        assert!((after - 2.0).abs() < 1e-15);
        let mut small = vec![Tensor::new(vec![1], vec![0.5]).unwrap()];
        clip_grad_norm(&mut small, 2.0);
        assert_eq!(small[0].data(), &[0.5]);
    }

    #[test]
    fn moments_round_trip() {
        let mut p = store(&[1.0, 2.0]);
        let mut opt = AdamW::new(&p, 0.0);
        opt.update(&mut p, &[Tensor::new(vec![2], vec![0.1, -0.3]).unwrap()], 0.1).unwrap();
        let (m, v) = opt.moments();
        let mut other = AdamW::new(&p, 0.0);
        other.step = opt.step;
        other.set_moments(&m, &v).unwrap();
        assert_eq!(other, opt);
        assert!(other.set_moments(&m[..1], &v).is_err());
    }
}
