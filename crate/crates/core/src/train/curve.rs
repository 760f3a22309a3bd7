use serde::{Deserialize, Serialize};

use super::split::shuffled;
use super::trainer::{evaluate, Dataset, EpochRecord, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::irreps::IrrepsSpec;
use crate::model::{MlaNet, ModelConfig};

/// One row of the learning-curve CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub size: usize,
    pub l_max: u32,
    pub test_mae_energy: f64,
    pub test_mae_energy_per_atom: f64,
    pub test_mae_forces: Option<f64>,
    pub seconds_per_epoch: f64,
    /// Peak resident set size in KiB during the run, where the OS reports it.
    pub peak_rss_kib: Option<u64>,
}

impl CurveRow {
    pub const CSV_HEADER: &'static str =
        "size,l_max,test_mae_energy_ev,test_mae_energy_per_atom_ev,test_mae_forces_ev_per_a,seconds_per_epoch,peak_rss_kib";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{:.9e},{:.9e},{},{:.6},{}",
            self.size,
            self.l_max,
            self.test_mae_energy,
            self.test_mae_energy_per_atom,
            opt(self.test_mae_forces.map(|v| format!("{v:.9e}"))),
            self.seconds_per_epoch,
            opt(self.peak_rss_kib.map(|v| v.to_string())),
        )
    }
}

/// Resets the kernel's high-water mark so the next reading covers only the
/// work that follows. Best effort.
fn reset_peak_rss() {
    let _ = std::fs::write("/proc/self/clear_refs", "5");
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// The median keeps first-epoch warm-up out of the timing.
fn median_epoch_seconds(records: &[EpochRecord]) -> f64 {
    let mut t: Vec<f64> = records.iter().map(|r| r.seconds).collect();
    if t.is_empty() {
        return 0.0;
    }
    t.sort_by(f64::total_cmp);
    let mid = t.len() / 2;
    if t.len() % 2 == 0 {
        0.5 * (t[mid - 1] + t[mid])
    } else {
        t[mid]
    }
}

fn train_and_test(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &Dataset,
    train: &[usize],
    test: &[usize],
    size: usize,
) -> Result<CurveRow> {
    let model = MlaNet::new(model_cfg.clone(), train_cfg.seed)?;
    let mut trainer = Trainer::new(model, train_cfg.clone())?;
    reset_peak_rss();
    let records = trainer.fit(data, train, &[], |_, _| Ok(()))?;
    let seconds = median_epoch_seconds(&records);
    let m = evaluate(&trainer.model, data, test, train_cfg.batch_size)?;
    Ok(CurveRow {
        size,
        l_max: model_cfg.l_max,
        test_mae_energy: m.mae_energy,
        test_mae_energy_per_atom: m.mae_energy_per_atom,
        test_mae_forces: m.mae_forces,
        seconds_per_epoch: seconds,
        peak_rss_kib: peak_rss_kib(),
    })
}

/// Trains one model per size on nested seeded subsets of `pool` and scores
/// each on the fixed `test` set.
pub fn learning_curve(
    structures: &[AtomicStructure],
    pool: &[usize],
    test: &[usize],
    sizes: &[usize],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<Vec<CurveRow>> {
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > pool.len()) {
        return Err(Error::Config(format!("size {s} outside 1..={}", pool.len())));
    }
    let probe = MlaNet::new(model_cfg.clone(), train_cfg.seed)?;
    let data = Dataset::new(structures.to_vec(), &probe)?;
    let order: Vec<usize> = shuffled(pool.len(), train_cfg.seed, 7).into_iter().map(|k| pool[k]).collect();
    sizes
        .iter()
        .map(|&size| train_and_test(model_cfg, train_cfg, &data, &order[..size], test, size))
        .collect()
}

/// `base` restricted to irreps with `l ≤ l_max`.
pub fn truncate_irreps(base: &IrrepsSpec, l_max: u32) -> Result<IrrepsSpec> {
    let kept: Vec<_> = base
        .entries()
        .iter()
        .filter(|e| e.irrep.l <= l_max)
        .map(|e| (e.mult, e.irrep))
        .collect();
    IrrepsSpec::new(kept)
}

/// Per-epoch cost at fixed data for each rotation order: hidden irreps are
/// `base` truncated to `l ≤ l_max` and edge harmonics go up to `l_max`.
pub fn lmax_timing(
    structures: &[AtomicStructure],
    train: &[usize],
    test: &[usize],
    base: &ModelConfig,
    l_values: &[u32],
    train_cfg: &TrainConfig,
) -> Result<Vec<CurveRow>> {
    l_values
        .iter()
        .map(|&l| {
            let mut cfg = base.clone();
            cfg.l_max = l;
            cfg.hidden_irreps = truncate_irreps(&base.hidden_irreps, l)?;
            let probe = MlaNet::new(cfg.clone(), train_cfg.seed)?;
            let data = Dataset::new(structures.to_vec(), &probe)?;
            train_and_test(&cfg, train_cfg, &data, train, test, train.len())
        })
        .collect()
}
