use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{AtomicStructure, SpeciesIndex};
use crate::model::Normalization;

/// Per-species reference energies minimizing `Σ_s (E_s − Σ_z n_sz·e0_z)²`
/// (minimum-norm solution when compositions are collinear).
pub fn fit_reference_energies(structures: &[&AtomicStructure], species: &SpeciesIndex) -> Result<Vec<f64>> {
    let labelled: Vec<&&AtomicStructure> = structures.iter().filter(|s| s.energy.is_some()).collect();
    if labelled.is_empty() {
        return Ok(vec![0.0; species.len()]);
    }
    let mut a = DMatrix::<f64>::zeros(labelled.len(), species.len());
    let mut b = DVector::<f64>::zeros(labelled.len());
    for (r, s) in labelled.iter().enumerate() {
        for z in &s.species {
            a[(r, species.row(*z)?)] += 1.0;
        }
        b[r] = s.energy.expect("filtered");
    }
    let x = a
        .svd(true, true)
        .solve(&b, 1e-10)
        .map_err(|e| Error::Training(format!("reference-energy fit failed: {e}")))?;
    Ok(x.iter().copied().collect())
}

/// Reference energies plus energy and force scales from the training set:
/// the standard deviation of the reference-shifted energies and the RMS
/// force component (1 where undefined or degenerate).
pub fn fit_normalization(structures: &[&AtomicStructure], species: &SpeciesIndex) -> Result<Normalization> {
    let e0 = fit_reference_energies(structures, species)?;
    let mut residual = Vec::new();
    let mut f_sq = (0.0, 0usize);
    for s in structures {
        if let Some(e) = s.energy {
            let shift: f64 = s.species.iter().map(|z| species.row(*z).map(|r| e0[r])).sum::<Result<f64>>()?;
            residual.push(e - shift);
        }
        if let Some(f) = &s.forces {
            for v in f.iter().flatten() {
                f_sq.0 += v * v;
                f_sq.1 += 1;
            }
        }
    }
    let usable = |x: f64| if x.is_finite() && x > 1e-6 { x } else { 1.0 };
    let energy_scale = if residual.len() > 1 {
        let mean = residual.iter().sum::<f64>() / residual.len() as f64;
        let var = residual.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / residual.len() as f64;
        usable(var.sqrt())
    } else {
        1.0
    };
    let force_scale = if f_sq.1 > 0 { usable((f_sq.0 / f_sq.1 as f64).sqrt()) } else { 1.0 };
    Ok(Normalization {
        e0,
        energy_scale,
        force_scale,
        stress_scale: 1.0,
    })
}
