//! Inference latency: one untimed warm-up call, then `repeat` timed
//! energy-and-force evaluations per structure.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::model::MlaNet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub atoms: usize,
    pub edges: usize,
    pub repeat: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "label,atoms,edges,repeat,mean_ms,median_ms,min_ms,max_ms";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.label, self.atoms, self.edges, self.repeat, self.mean_ms, self.median_ms, self.min_ms, self.max_ms
        )
    }
}

/// Graph construction is part of every timed call.
pub fn bench_structure(model: &MlaNet, s: &AtomicStructure, label: &str, repeat: usize) -> Result<BenchRow> {
    if repeat == 0 {
        return Err(Error::Config("repeat must be at least 1".into()));
    }
    let edges = model.graph(s)?.num_edges();
    model.predict(s)?;
    let mut ms = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t = Instant::now();
        std::hint::black_box(model.predict(std::hint::black_box(s))?);
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] };
    Ok(BenchRow {
        label: label.to_string(),
        atoms: s.len(),
        edges,
        repeat,
        mean_ms: ms.iter().sum::<f64>() / repeat as f64,
        median_ms: median,
        min_ms: sorted[0],
        max_ms: sorted[sorted.len() - 1],
    })
}

/// One row per structure, labelled by `config_type` or the frame index.
pub fn bench_structures(model: &MlaNet, structures: &[AtomicStructure], repeat: usize) -> Result<Vec<BenchRow>> {
    structures
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let label = s.info.get("config_type").cloned().unwrap_or_else(|| format!("frame{k}"));
            bench_structure(model, s, &label, repeat)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::carbon_lattice;
    use crate::model::ModelConfig;

    #[test]
    fn rows_describe_the_input() {
        let model = MlaNet::new(ModelConfig::small(&[6], "4x0e+2x1o").unwrap(), 0).unwrap();
        let s = carbon_lattice(3).unwrap();
        let rows = bench_structures(&model, &[s], 3).unwrap();
        assert_eq!(rows[0].atoms, 27);
        assert_eq!(rows[0].label, "frame0");
        assert!(rows[0].edges > 0 && rows[0].min_ms <= rows[0].median_ms && rows[0].median_ms <= rows[0].max_ms);
        assert_eq!(rows[0].csv_line().split(',').count(), BenchRow::CSV_HEADER.split(',').count());
    }
}
