use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::ParamStore;
use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Dense layers with SiLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(usize, usize)>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new(store: &mut ParamStore, prefix: &str, dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let scale = 1.0 / (w[0].max(1) as f64).sqrt();
                let data = (0..w[0] * w[1])
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z * scale
                    })
                    .collect();
                let wi = store.add(format!("{prefix}.{k}.weight"), Tensor::new(vec![w[0], w[1]], data).expect("shape"));
                let bi = store.add(format!("{prefix}.{k}.bias"), Tensor::zeros(&[w[1]]));
                (wi, bi)
            })
            .collect();
        Mlp { layers }
    }

    pub fn apply(&self, tape: &mut Tape, x: Var, p: &[Var]) -> Result<Var> {
        let mut h = x;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.matmul(h, p[w])?;
            h = tape.add(h, p[b])?;
            if k + 1 < self.layers.len() {
                h = tape.silu(h);
            }
        }
        Ok(h)
    }
}
