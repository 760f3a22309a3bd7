use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::model::Outputs;
use crate::tensor::{Tape, Tensor, Var};

/// Weights of the L1 energy, force and (optional) stress terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub energy: f64,
    pub forces: f64,
    #[serde(default)]
    pub stress: Option<f64>,
}

impl LossWeights {
    pub fn new(energy: f64, forces: f64) -> Result<Self> {
        let w = LossWeights {
            energy,
            forces,
            stress: None,
        };
        w.validate()?;
        Ok(w)
    }

    /// Parses an `"E:F"` ratio such as `"1:1000"`.
    pub fn from_ratio(ratio: &str) -> Result<Self> {
        let (e, f) = ratio
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("loss ratio {ratio:?} is not of the form E:F")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("loss ratio {ratio:?} is not of the form E:F")))
        };
        LossWeights::new(parse(e)?, parse(f)?)
    }

    pub fn stress_weight(&self) -> f64 {
        self.stress.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.energy, self.forces, self.stress_weight()];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            energy: 1.0,
            forces: 1000.0,
            stress: None,
        }
    }
}

/// Targets of one batch (or shard) in graph order.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchLabels {
    /// `[B, 1]`.
    pub energy: Option<Tensor>,
    /// `[N, 3]`.
    pub forces: Option<Tensor>,
    /// `[B, 6]`.
    pub stress: Option<Tensor>,
}

impl BatchLabels {
    /// Collects the labels the weights need; missing ones are a data error.
    pub fn gather(structures: &[&AtomicStructure], w: &LossWeights) -> Result<Self> {
        let missing = |what: &str, k: usize| Error::Data(format!("structure {k} in the batch has no {what} label"));
        let energy = if w.energy > 0.0 {
            let e = structures
                .iter()
                .enumerate()
                .map(|(k, s)| s.energy.ok_or_else(|| missing("energy", k)))
                .collect::<Result<Vec<_>>>()?;
            Some(Tensor::new(vec![e.len(), 1], e)?)
        } else {
            None
        };
        let forces = if w.forces > 0.0 {
            let mut f = Vec::new();
            for (k, s) in structures.iter().enumerate() {
                let fs = s.forces.as_ref().ok_or_else(|| missing("forces", k))?;
                f.extend(fs.iter().flatten());
            }
            Some(Tensor::new(vec![f.len() / 3, 3], f)?)
        } else {
            None
        };
        let stress = if w.stress_weight() > 0.0 {
            let mut v = Vec::new();
            for (k, s) in structures.iter().enumerate() {
                v.extend(s.stress.ok_or_else(|| missing("stress", k))?);
            }
            Some(Tensor::new(vec![structures.len(), 6], v)?)
        } else {
            None
        };
        Ok(BatchLabels { energy, forces, stress })
    }
}

/// Sums of absolute errors, for metrics accumulated during training.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSums {
    pub energy_abs: f64,
    pub energy_abs_per_atom: f64,
    pub force_abs: f64,
}

/// `λ_E·Σ_b|E_b − Ê_b|/B + λ_F·Σ_{i,α}|F − F̂|/(3N) + λ_σ·Σ|σ − σ̂|/(6B)`.
///
/// `structures` and `atoms` are the batch-wide counts, so shards of one
/// batch can be evaluated separately and their losses and gradients summed.
pub fn l1_loss(
    tape: &mut Tape,
    out: &Outputs,
    labels: &BatchLabels,
    w: &LossWeights,
    structures: usize,
    atoms: usize,
) -> Result<Var> {
    let mut terms = Vec::new();
    if w.energy > 0.0 {
        let target = labels
            .energy
            .as_ref()
            .ok_or_else(|| Error::Data("energy weight set but no energy labels".into()))?;
        let t = tape.constant(target.clone());
        let d = tape.sub(out.energy, t)?;
        let a = tape.abs(d);
        let s = tape.sum(a);
        terms.push(tape.scale(s, w.energy / structures as f64));
    }
    if w.forces > 0.0 {
        let target = labels
            .forces
            .as_ref()
            .ok_or_else(|| Error::Data("force weight set but no force labels".into()))?;
        let f = out
            .forces
            .ok_or_else(|| Error::Config("force weight set but the model has no force head (hidden irreps lack 1o)".into()))?;
        let t = tape.constant(target.clone());
        let d = tape.sub(f, t)?;
        let a = tape.abs(d);
        let s = tape.sum(a);
        terms.push(tape.scale(s, w.forces / (3 * atoms) as f64));
    }
    if w.stress_weight() > 0.0 {
        let target = labels
            .stress
            .as_ref()
            .ok_or_else(|| Error::Data("stress weight set but no stress labels".into()))?;
        let st = out
            .stress
            .ok_or_else(|| Error::Config("stress weight set but the stress head is disabled".into()))?;
        let t = tape.constant(target.clone());
        let d = tape.sub(st, t)?;
        let a = tape.abs(d);
        let s = tape.sum(a);
        terms.push(tape.scale(s, w.stress_weight() / (6 * structures) as f64));
    }
    let mut total = terms[0];
    for t in &terms[1..] {
        total = tape.add(total, *t)?;
    }
    Ok(total)
}

/// Absolute-error sums of the current predictions against whatever labels exist.
pub fn error_sums(tape: &Tape, out: &Outputs, structures: &[&AtomicStructure]) -> ErrorSums {
    let mut sums = ErrorSums::default();
    let e = tape.value(out.energy).data();
    for (b, s) in structures.iter().enumerate() {
        if let Some(t) = s.energy {
            sums.energy_abs += (e[b] - t).abs();
            sums.energy_abs_per_atom += (e[b] - t).abs() / s.len() as f64;
        }
    }
    if let Some(f) = out.forces {
        let f = tape.value(f).data();
        let mut row = 0;
        for s in structures {
            if let Some(t) = &s.forces {
                for (i, fi) in t.iter().enumerate() {
                    for k in 0..3 {
                        sums.force_abs += (f[3 * (row + i) + k] - fi[k]).abs();
                    }
                }
            }
            row += s.len();
        }
    }
    sums
}
