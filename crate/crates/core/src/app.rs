//! The logic behind each CLI subcommand. Every function writes its files
//! into `out_dir` and returns what it wrote about.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{bench_structures, BenchRow};
use crate::datasets::bundled_toy_set;
use crate::error::{Error, Result};
use crate::graph::AtomicStructure;
use crate::io::{
    load_model, load_trainer, parse_extxyz, save_trainer, write_atomic, write_extxyz, write_json, RunConfig,
};
use crate::md::{run_md, MdConfig, MdReport};
use crate::model::MlaNet;
use crate::train::{
    ev_to_kcal_per_mol, learning_curve, lmax_timing, predict_indices, CurveRow, Dataset, EpochRecord, Metrics,
    SplitSpec, Trainer,
};
use crate::verify::{run_suite, CheckReport, SuiteScale};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";

const METRICS_HEADER: &str = "split,count,mae_energy_ev,mae_energy_per_atom_ev,rmse_energy_ev,\
rmse_energy_per_atom_ev,mae_energy_kcal_mol,mae_forces_ev_per_a,rmse_forces_ev_per_a";

fn metrics_csv(rows: &[(String, Metrics)]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
    for (split, m) in rows {
        let _ = writeln!(
            out,
            "{split},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},{}",
            m.count,
            m.mae_energy,
            m.mae_energy_per_atom,
            m.rmse_energy,
            m.rmse_energy_per_atom,
            ev_to_kcal_per_mol(m.mae_energy),
            opt(m.mae_forces),
            opt(m.rmse_forces)
        );
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_completed: usize,
    pub final_train_loss: Option<f64>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub metrics: Vec<(String, Metrics)>,
    pub checkpoint: PathBuf,
}

/// Trains per `cfg`, optionally on fold `fold` or resuming a checkpoint.
///
/// Writes `train_log.jsonl` (one record per epoch), `model.ckpt` (after
/// every epoch), `metrics.csv` and `train_summary.json`.
pub fn train(cfg: &RunConfig, fold: Option<usize>, resume: Option<&Path>, out_dir: &Path) -> Result<TrainSummary> {
    let (mut structures, test_file) = cfg.load_data()?;
    let n_pool = structures.len();
    let mut everything = structures.clone();
    everything.extend(test_file.iter().flatten().cloned());
    let model_cfg = cfg.model_config_for(&everything)?;

    let mut trainer = match resume {
        Some(path) => {
            let mut t = load_trainer(path)?;
            if t.model.config() != &model_cfg {
                return Err(Error::Checkpoint(
                    "resume checkpoint architecture differs from the config's [model]".into(),
                ));
            }
            t.config.epochs = cfg.train.epochs;
            t
        }
        None => Trainer::new(MlaNet::new(model_cfg, cfg.train.seed)?, cfg.train.clone())?,
    };

    let split = match test_file {
        Some(_) => SplitSpec {
            test_fraction: 0.0,
            ..cfg.train.split.clone()
        },
        None => cfg.train.split.clone(),
    };
    let part = split.partition(n_pool, cfg.train.seed, fold)?;
    let mut test = part.test.clone();
    if let Some(t) = test_file {
        test.extend(n_pool..n_pool + t.len());
        structures.extend(t);
    }
    let data = Dataset::new(structures, &trainer.model)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    let log_path = out_dir.join(TRAIN_LOG_FILE);
    let mut log = match resume {
        Some(_) => std::fs::read_to_string(&log_path).unwrap_or_default(),
        None => String::new(),
    };
    let records = trainer.fit(&data, &part.train, &part.val, |t: &Trainer, rec: &EpochRecord| {
        let line = serde_json::to_string(rec).map_err(|e| Error::Data(e.to_string()))?;
        log.push_str(&line);
        log.push('\n');
        write_atomic(&log_path, log.as_bytes())?;
        save_trainer(t, &ckpt)
    })?;
    if records.is_empty() {
        save_trainer(&trainer, &ckpt)?;
    }

    let mut metrics = Vec::new();
    for (name, idx) in [("train", &part.train), ("val", &part.val), ("test", &test)] {
        if !idx.is_empty() {
            let preds = predict_indices(&trainer.model, &data, idx, trainer.config.batch_size)?;
            metrics.push((name.to_string(), Metrics::compute(&preds, &data.select(idx))?));
        }
    }
    write_atomic(&out_dir.join(METRICS_FILE), metrics_csv(&metrics).as_bytes())?;
    let summary = TrainSummary {
        epochs_completed: trainer.progress.epoch,
        final_train_loss: records.last().map(|r| r.train_loss),
        train_size: part.train.len(),
        val_size: part.val.len(),
        test_size: test.len(),
        metrics,
        checkpoint: ckpt,
    };
    write_json(&out_dir.join("train_summary.json"), &summary)?;
    Ok(summary)
}

/// Metrics of a checkpoint on a labelled file; also writes the predictions
/// as `predictions.extxyz`.
pub fn eval(checkpoint: &Path, data_path: &Path, out_dir: &Path) -> Result<Metrics> {
    let model = load_model(checkpoint)?;
    let structures = parse_extxyz(data_path)?;
    let data = Dataset::new(structures, &model)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let preds = predict_indices(&model, &data, &idx, 32)?;
    let m = Metrics::compute(&preds, &data.select(&idx))?;
    let predicted: Vec<AtomicStructure> = data
        .structures()
        .iter()
        .zip(&preds)
        .map(|(s, p)| {
            let mut s = s.clone();
            s.energy = Some(p.energy);
            s.forces = p.forces.clone();
            s.stress = p.stress;
            s
        })
        .collect();
    write_atomic(&out_dir.join("eval_metrics.csv"), metrics_csv(&[("eval".into(), m.clone())]).as_bytes())?;
    write_json(&out_dir.join("eval_metrics.json"), &m)?;
    write_extxyz(out_dir.join("predictions.extxyz"), &predicted)?;
    Ok(m)
}

/// MD from the first frame of `structure`; writes `trajectory.extxyz` and
/// `md_report.json`.
pub fn md(checkpoint: &Path, structure: &Path, cfg: &MdConfig, out_dir: &Path) -> Result<MdReport> {
    let model = load_model(checkpoint)?;
    let frames = parse_extxyz(structure)?;
    let start = frames
        .first()
        .ok_or_else(|| Error::Data(format!("{} holds no frames", structure.display())))?;
    let run = run_md(start, &model, cfg)?;
    write_extxyz(out_dir.join("trajectory.extxyz"), &run.frames)?;
    write_json(&out_dir.join("md_report.json"), &run.report)?;
    Ok(run.report)
}

/// One model per size on nested subsets of the training pool, scored on a
/// fixed test set, plus the per-epoch timing sweep over `curve.l_values`.
/// Writes `learning_curve.csv` and `lmax_timing.csv`.
pub fn learning_curve_cmd(cfg: &RunConfig, sizes: &[usize], out_dir: &Path) -> Result<(Vec<CurveRow>, Vec<CurveRow>)> {
    let sizes = if sizes.is_empty() { cfg.curve.sizes.as_slice() } else { sizes };
    if sizes.is_empty() {
        return Err(Error::Config("no training sizes given (--sizes or [curve].sizes)".into()));
    }
    let (mut structures, test_file) = cfg.load_data()?;
    let mut everything = structures.clone();
    everything.extend(test_file.iter().flatten().cloned());
    let model_cfg = cfg.model_config_for(&everything)?;
    let n_pool = structures.len();
    let (pool, test) = match test_file {
        Some(t) => {
            let test: Vec<usize> = (n_pool..n_pool + t.len()).collect();
            structures.extend(t);
            ((0..n_pool).collect::<Vec<_>>(), test)
        }
        None => {
            let part = SplitSpec {
                val_fraction: 0.0,
                ..cfg.train.split.clone()
            }
            .partition(n_pool, cfg.train.seed, None)?;
            (part.train, part.test)
        }
    };
    if test.is_empty() {
        return Err(Error::Config("learning curve needs a test set (data.test or split.test_fraction)".into()));
    }
    let rows = learning_curve(&structures, &pool, &test, sizes, &model_cfg, &cfg.train)?;
    let mut text = format!("{}\n", CurveRow::CSV_HEADER);
    for r in &rows {
        let _ = writeln!(text, "{}", r.csv_line());
    }
    write_atomic(&out_dir.join("learning_curve.csv"), text.as_bytes())?;
    let mut timing = Vec::new();
    if !cfg.curve.l_values.is_empty() {
        let largest = sizes.iter().copied().max().unwrap_or(1).min(pool.len());
        let tc = crate::train::TrainConfig {
            epochs: cfg.curve.timing_epochs.max(1),
            ..cfg.train.clone()
        };
        timing = lmax_timing(&structures, &pool[..largest], &test, &model_cfg, &cfg.curve.l_values, &tc)?;
        let mut text = format!("{}\n", CurveRow::CSV_HEADER);
        for r in &timing {
            let _ = writeln!(text, "{}", r.csv_line());
        }
        write_atomic(&out_dir.join("lmax_timing.csv"), text.as_bytes())?;
    }
    Ok((rows, timing))
}

/// Latency rows for every frame of `structure`; writes `bench.csv`.
pub fn bench(checkpoint: &Path, structure: &Path, repeat: usize, out_dir: &Path) -> Result<Vec<BenchRow>> {
    let model = load_model(checkpoint)?;
    let rows = bench_structures(&model, &parse_extxyz(structure)?, repeat)?;
    let mut text = format!("{}\n", BenchRow::CSV_HEADER);
    for r in &rows {
        let _ = writeln!(text, "{}", r.csv_line());
    }
    write_atomic(&out_dir.join("bench.csv"), text.as_bytes())?;
    Ok(rows)
}

/// The verification suite: symmetry, gradient, oracle, basis, latency and
/// persistence checks, plus the training-based checks at full scale with
/// `full`. Writes `verify_report.json`.
pub fn verify(full: bool, out_dir: &Path) -> Result<Vec<CheckReport>> {
    let scale = if full { SuiteScale::full() } else { SuiteScale::quick() };
    let reports = run_suite(&scale, &bundled_toy_set()?, full);
    write_json(&out_dir.join("verify_report.json"), &reports)?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_table_has_one_row_per_split() {
        let m = Metrics {
            count: 2,
            mae_energy: 0.1,
            mae_energy_per_atom: 0.05,
            rmse_energy: 0.2,
            rmse_energy_per_atom: 0.1,
            mae_forces: None,
            rmse_forces: Some(0.3),
        };
        let text = metrics_csv(&[("train".into(), m.clone()), ("test".into(), m)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let width = METRICS_HEADER.split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == width));
        assert!(lines[1].starts_with("train,2,"));
    }
}
