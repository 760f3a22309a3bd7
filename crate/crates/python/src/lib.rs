use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use mlanet::graph::AtomicStructure;
use mlanet::io::{self as mio, RunConfig};
use mlanet::md::MdConfig;
use mlanet::model::{MlaNet, ModelConfig};

fn err(e: mlanet::Error) -> PyErr {
    let msg = format!("[{}] {e}", e.category());
    match e {
        mlanet::Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

/// Serde value to the equivalent Python object via `json.loads`.
fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Structure", module = "pymlanet", from_py_object)]
#[derive(Clone)]
pub struct PyStructure {
    inner: AtomicStructure,
}

#[pymethods]
impl PyStructure {
    /// Positions in Å, atomic numbers, and an optional 3×3 cell (rows are
    /// lattice vectors) that makes every direction periodic unless `pbc` says
    /// otherwise.
    #[new]
    #[pyo3(signature = (positions, species, cell=None, pbc=None))]
    fn new(
        positions: Vec<[f64; 3]>,
        species: Vec<u32>,
        cell: Option<[[f64; 3]; 3]>,
        pbc: Option<[bool; 3]>,
    ) -> PyResult<Self> {
        let mut s = AtomicStructure::new(positions, species).map_err(err)?;
        if let Some(c) = cell {
            s = s.with_cell(c, pbc.unwrap_or([true; 3])).map_err(err)?;
        }
        Ok(PyStructure { inner: s })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Structure(atoms={}, periodic={})", self.inner.len(), self.inner.is_periodic())
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.positions.clone()
    }

    #[getter]
    fn species(&self) -> Vec<u32> {
        self.inner.species.clone()
    }

    #[getter]
    fn cell(&self) -> Option<[[f64; 3]; 3]> {
        self.inner.cell
    }

    #[getter]
    fn pbc(&self) -> [bool; 3] {
        self.inner.pbc
    }

    #[getter]
    fn energy(&self) -> Option<f64> {
        self.inner.energy
    }

    #[setter]
    fn set_energy(&mut self, e: Option<f64>) {
        self.inner.energy = e;
    }

    #[getter]
    fn forces(&self) -> Option<Vec<[f64; 3]>> {
        self.inner.forces.clone()
    }

    #[setter]
    fn set_forces(&mut self, f: Option<Vec<[f64; 3]>>) -> PyResult<()> {
        if let Some(f) = &f {
            if f.len() != self.inner.len() {
                return Err(PyValueError::new_err("one force row per atom"));
            }
        }
        self.inner.forces = f;
        Ok(())
    }

    /// Voigt order xx, yy, zz, yz, xz, xy.
    #[getter]
    fn stress(&self) -> Option<[f64; 6]> {
        self.inner.stress
    }

    #[setter]
    fn set_stress(&mut self, s: Option<[f64; 6]>) {
        self.inner.stress = s;
    }

    #[getter]
    fn total_charge(&self) -> Option<i32> {
        self.inner.total_charge
    }

    #[setter]
    fn set_total_charge(&mut self, q: Option<i32>) {
        self.inner.total_charge = q;
    }

    #[getter]
    fn info(&self) -> BTreeMap<String, String> {
        self.inner.info.clone()
    }

    #[setter]
    fn set_info(&mut self, info: BTreeMap<String, String>) {
        self.inner.info = info;
    }
}

fn unwrap_all(frames: Vec<PyStructure>) -> Vec<AtomicStructure> {
    frames.into_iter().map(|s| s.inner).collect()
}

fn wrap_all(frames: Vec<AtomicStructure>) -> Vec<PyStructure> {
    frames.into_iter().map(|inner| PyStructure { inner }).collect()
}

#[pyclass(name = "Model", module = "pymlanet", from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: MlaNet,
}

#[pymethods]
impl PyModel {
    /// Model from a JSON or TOML architecture description.
    #[new]
    #[pyo3(signature = (config, seed=0))]
    fn new(config: &str, seed: u64) -> PyResult<Self> {
        let cfg: ModelConfig = match serde_json::from_str(config) {
            Ok(c) => c,
            Err(_) => toml::from_str(config).map_err(|e| PyValueError::new_err(format!("model config: {e}")))?,
        };
        Self::build(cfg, seed)
    }

    /// Named hyperparameter preset, e.g. "qm9" or "water".
    #[staticmethod]
    #[pyo3(signature = (name, species, seed=0))]
    fn preset(name: &str, species: Vec<u32>, seed: u64) -> PyResult<Self> {
        Self::build(ModelConfig::preset(name, &species).map_err(err)?, seed)
    }

    /// Compact model with the given hidden irreps, e.g. "16x0e+8x1o".
    #[staticmethod]
    #[pyo3(signature = (species, hidden, seed=0))]
    fn small(species: Vec<u32>, hidden: &str, seed: u64) -> PyResult<Self> {
        Self::build(ModelConfig::small(&species, hidden).map_err(err)?, seed)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: mio::load_model(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        mio::save_model(&self.inner, path).map_err(err)
    }

    /// Architecture as a JSON string, accepted back by the constructor.
    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(self.inner.config()).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().num_scalars()
    }

    #[getter]
    fn has_force_head(&self) -> bool {
        self.inner.has_force_head()
    }

    #[getter]
    fn has_stress_head(&self) -> bool {
        self.inner.has_stress_head()
    }

    /// Energy (eV), forces (eV/Å) and stress (eV/Å³, Voigt) for one structure.
    fn predict<'py>(&self, py: Python<'py>, structure: &PyStructure) -> PyResult<Bound<'py, PyDict>> {
        let model = &self.inner;
        let s = &structure.inner;
        let p = py.detach(|| model.predict(s)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("energy", p.energy)?;
        d.set_item("forces", p.forces)?;
        d.set_item("stress", p.stress)?;
        Ok(d)
    }

    /// Energies of many structures in one batched pass.
    fn predict_energies(&self, py: Python<'_>, structures: Vec<PyStructure>) -> PyResult<Vec<f64>> {
        let model = &self.inner;
        let frames = unwrap_all(structures);
        let preds = py.detach(|| model.predict_batch(&frames)).map_err(err)?;
        Ok(preds.into_iter().map(|p| p.energy).collect())
    }

    /// MD from `structure`; Langevin at `temperature` K when given, else
    /// NVE. Returns the saved frames and the run report.
    #[pyo3(signature = (structure, steps, dt=0.5, temperature=None, friction=0.01, seed=0, write_every=100))]
    #[allow(clippy::too_many_arguments)]
    fn run_md<'py>(
        &self,
        py: Python<'py>,
        structure: &PyStructure,
        steps: usize,
        dt: f64,
        temperature: Option<f64>,
        friction: f64,
        seed: u64,
        write_every: usize,
    ) -> PyResult<(Vec<PyStructure>, Bound<'py, PyAny>)> {
        let cfg = MdConfig {
            steps,
            dt,
            temperature,
            friction,
            seed,
            write_every,
            ..MdConfig::default()
        };
        let model = &self.inner;
        let s = &structure.inner;
        let run = py.detach(|| mlanet::md::run_md(s, model, &cfg)).map_err(err)?;
        Ok((wrap_all(run.frames), to_py(py, &run.report)?))
    }

    fn __repr__(&self) -> String {
        format!("Model(hidden={}, params={})", self.inner.config().hidden_irreps, self.num_params())
    }
}

impl PyModel {
    fn build(cfg: ModelConfig, seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            inner: MlaNet::new(cfg, seed).map_err(err)?,
        })
    }
}

#[pyfunction]
fn read_extxyz(path: PathBuf) -> PyResult<Vec<PyStructure>> {
    Ok(wrap_all(mio::parse_extxyz(path).map_err(err)?))
}

#[pyfunction]
fn parse_extxyz(text: &str) -> PyResult<Vec<PyStructure>> {
    Ok(wrap_all(mio::parse_extxyz_str(text).map_err(err)?))
}

#[pyfunction]
fn format_extxyz(frames: Vec<PyStructure>) -> PyResult<String> {
    mio::format_extxyz(&unwrap_all(frames)).map_err(err)
}

#[pyfunction]
fn write_extxyz(path: PathBuf, frames: Vec<PyStructure>) -> PyResult<()> {
    mio::write_extxyz(path, &unwrap_all(frames)).map_err(err)
}

/// The ten labelled clusters shipped with the library.
#[pyfunction]
fn toy_dataset() -> PyResult<Vec<PyStructure>> {
    Ok(wrap_all(mlanet::datasets::bundled_toy_set().map_err(err)?))
}

/// Trains from a TOML run config; writes into `output_dir` or the directory
/// the config and environment select. Returns the training summary.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None, fold=None, resume=None))]
fn train<'py>(
    py: Python<'py>,
    config: PathBuf,
    output_dir: Option<PathBuf>,
    fold: Option<usize>,
    resume: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::load(&config).map_err(err)?;
    let out = match output_dir {
        Some(d) => mio::resolve_output_dir(Some(d)),
        None => cfg.output_dir(),
    };
    let summary = py
        .detach(|| mlanet::app::train(&cfg, fold, resume.as_deref(), &out))
        .map_err(err)?;
    to_py(py, &summary)
}

/// Quick verification suite; a list of per-check reports.
#[pyfunction]
fn verify<'py>(py: Python<'py>, output_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let reports = py.detach(|| mlanet::app::verify(false, &output_dir)).map_err(err)?;
    to_py(py, &reports)
}

#[pymodule]
fn pymlanet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStructure>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(read_extxyz, m)?)?;
    m.add_function(wrap_pyfunction!(parse_extxyz, m)?)?;
    m.add_function(wrap_pyfunction!(format_extxyz, m)?)?;
    m.add_function(wrap_pyfunction!(write_extxyz, m)?)?;
    m.add_function(wrap_pyfunction!(toy_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
