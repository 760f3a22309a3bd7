use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::model::Prediction;

/// 1 eV in kcal/mol (e·N_A / 4184 J).
pub const EV_TO_KCAL_PER_MOL: f64 = 23.0605;

pub fn ev_to_kcal_per_mol(ev: f64) -> f64 {
    ev * EV_TO_KCAL_PER_MOL
}

pub fn ev_to_mev(ev: f64) -> f64 {
    ev * 1000.0
}

/// Errors in eV, eV/atom and eV/Å. Force entries are `None` when no
/// force labels or predictions exist.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mae_energy: f64,
    pub mae_energy_per_atom: f64,
    pub rmse_energy: f64,
    pub rmse_energy_per_atom: f64,
    pub mae_forces: Option<f64>,
    pub rmse_forces: Option<f64>,
}

/// Plain MAE and RMSE of two aligned arrays.
pub fn mae_rmse(pred: &[f64], label: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != label.len() {
        return Err(Error::Contract(format!("{} predictions for {} labels", pred.len(), label.len())));
    }
    if pred.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = pred.len() as f64;
    let (abs, sq) = pred.iter().zip(label).fold((0.0, 0.0), |(a, s), (p, l)| {
        let d = p - l;
        (a + d.abs(), s + d * d)
    });
    Ok((abs / n, (sq / n).sqrt()))
}

impl Metrics {
    pub fn compute(preds: &[Prediction], labels: &[&AtomicStructure]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::Contract(format!("{} predictions for {} structures", preds.len(), labels.len())));
        }
        let (mut pe, mut le, mut pa, mut la) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut pf, mut lf) = (Vec::new(), Vec::new());
        for (p, s) in preds.iter().zip(labels) {
            if let Some(e) = s.energy {
                let n = s.len() as f64;
                pe.push(p.energy);
                le.push(e);
                pa.push(p.energy / n);
                la.push(e / n);
            }
            if let (Some(f), Some(t)) = (&p.forces, &s.forces) {
                if f.len() != t.len() {
                    return Err(Error::Contract("force prediction and label atom counts differ".into()));
                }
                pf.extend(f.iter().flatten());
                lf.extend(t.iter().flatten());
            }
        }
        let (mae_energy, rmse_energy) = mae_rmse(&pe, &le)?;
        let (mae_energy_per_atom, rmse_energy_per_atom) = mae_rmse(&pa, &la)?;
        let (mae_forces, rmse_forces) = if pf.is_empty() {
            (None, None)
        } else {
            let (m, r) = mae_rmse(&pf, &lf)?;
            (Some(m), Some(r))
        };
        Ok(Metrics {
            count: preds.len(),
            mae_energy,
            mae_energy_per_atom,
            rmse_energy,
            rmse_energy_per_atom,
            mae_forces,
            rmse_forces,
        })
    }
}
