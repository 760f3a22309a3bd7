use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::integrate::{baoab_step, maxwell_boltzmann, temperature, velocity_verlet_step};
use super::monitor::{StabilityMonitor, Violation};
use super::{ForceProvider, MdState};
use crate::error::{Error, Result};
use crate::graph::AtomicStructure;

fn default_dt() -> f64 {
    0.5
}
fn default_friction() -> f64 {
    0.01
}
fn default_write_every() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdConfig {
    #[serde(default)]
    pub steps: usize,
    /// fs.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Langevin bath temperature, K; NVE when absent.
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Langevin friction, 1/fs.
    #[serde(default = "default_friction")]
    pub friction: f64,
    /// Maxwell–Boltzmann initial velocities at this temperature; defaults to
    /// the bath temperature, else zero velocities.
    #[serde(default)]
    pub initial_temperature: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Trajectory stride in steps.
    #[serde(default = "default_write_every")]
    pub write_every: usize,
    #[serde(default)]
    pub monitor: StabilityMonitor,
}

impl Default for MdConfig {
    fn default() -> Self {
        MdConfig {
            steps: 0,
            dt: default_dt(),
            temperature: None,
            friction: default_friction(),
            initial_temperature: None,
            seed: 0,
            write_every: default_write_every(),
            monitor: StabilityMonitor::default(),
        }
    }
}

/// Outcome of one run; serialized as the JSON stability report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdReport {
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub dt_fs: f64,
    pub stable: bool,
    pub failure_step: Option<usize>,
    pub failure: Option<Violation>,
    /// Simulated time before the first violation, ps.
    pub ps_stable: f64,
    /// MD steps per wall-clock second.
    pub fps: f64,
    pub wall_seconds: f64,
    pub mean_temperature: f64,
    /// Largest `|E_tot(t) − E_tot(0)| / |E_tot(0)|`, when energies are available.
    pub max_relative_energy_drift: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MdRun {
    pub frames: Vec<AtomicStructure>,
    pub report: MdReport,
    pub final_state: MdState,
}

fn frame(state: &MdState) -> AtomicStructure {
    let mut s = state.structure.clone();
    s.energy = state.potential_energy;
    s.forces = Some(state.forces.clone());
    s.stress = None;
    s.info.insert("time_fs".into(), format!("{}", state.time));
    s.info.insert("step".into(), state.step.to_string());
    s
}

fn as_violation(e: &Error) -> Option<Violation> {
    match e {
        Error::Md(m) | Error::Geometry(m) => Some(Violation::NonFinite { message: m.clone() }),
        _ => None,
    }
}

/// Integrates `steps` steps, stopping at the first stability violation.
///
/// Frames are the initial state (when `steps > 0`), every `write_every`-th
/// step and the last completed step.
pub fn run_md(structure: &AtomicStructure, provider: &dyn ForceProvider, cfg: &MdConfig) -> Result<MdRun> {
    if !(cfg.dt > 0.0) || cfg.write_every == 0 || !(cfg.friction >= 0.0) {
        return Err(Error::Config("md needs dt > 0, write_every ≥ 1 and friction ≥ 0".into()));
    }
    let monitor = cfg.monitor.bind(structure)?;
    let mut state = MdState::new(structure.clone(), provider)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if let Some(t0) = cfg.initial_temperature.or(cfg.temperature) {
        state.velocities = maxwell_boltzmann(&state.masses, t0, &mut rng);
    }
    let e0 = state.total_energy();
    let mut drift: Option<f64> = e0.map(|_| 0.0);
    let mut frames = Vec::new();
    if cfg.steps > 0 {
        frames.push(frame(&state));
    }
    let mut failure = monitor.check(&state.structure).map(|v| (0, v));
    let mut t_sum = 0.0;
    let start = Instant::now();
    while failure.is_none() && state.step < cfg.steps {
        let attempted = state.step + 1;
        let res = match cfg.temperature {
            Some(t) => baoab_step(&mut state, provider, cfg.dt, t, cfg.friction, &mut rng),
            None => velocity_verlet_step(&mut state, provider, cfg.dt),
        };
        if let Err(e) = res {
            match as_violation(&e) {
                Some(v) => {
                    failure = Some((attempted, v));
                    break;
                }
                None => return Err(e),
            }
        }
        t_sum += temperature(&state.masses, &state.velocities);
        if let (Some(e0), Some(e)) = (e0, state.total_energy()) {
            let d = (e - e0).abs() / e0.abs().max(1e-12);
            drift = drift.map(|m| m.max(d));
        }
        if let Some(v) = monitor.check(&state.structure) {
            failure = Some((state.step, v));
        }
        if state.step % cfg.write_every == 0 || state.step == cfg.steps || failure.is_some() {
            frames.push(frame(&state));
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let integrated = state.step;
    let stable_steps = match &failure {
        Some((step, _)) => step.saturating_sub(1),
        None => integrated,
    };
    let (failure_step, failure) = match failure {
        Some((s, v)) => (Some(s), Some(v)),
        None => (None, None),
    };
    Ok(MdRun {
        frames,
        report: MdReport {
            steps_requested: cfg.steps,
            steps_completed: integrated,
            dt_fs: cfg.dt,
            stable: failure_step.is_none(),
            failure_step,
            failure,
            ps_stable: stable_steps as f64 * cfg.dt / 1000.0,
            fps: if wall > 0.0 { integrated as f64 / wall } else { 0.0 },
            wall_seconds: wall,
            mean_temperature: if integrated > 0 { t_sum / integrated as f64 } else { 0.0 },
            max_relative_energy_drift: drift,
        },
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::md::potentials::LennardJones;

    #[test]
    fn zero_steps_is_trivially_stable() {
        let s = AtomicStructure::new(vec![[0.0; 3], [3.8, 0.0, 0.0]], vec![18, 18]).unwrap();
        let run = run_md(&s, &LennardJones::argon(), &MdConfig::default()).unwrap();
        assert!(run.frames.is_empty());
        assert!(run.report.stable);
        assert_eq!(run.report.ps_stable, 0.0);
    }

    #[test]
    fn distant_pair_never_moves() {
        let s = AtomicStructure::new(vec![[0.0; 3], [20.0, 0.0, 0.0]], vec![18, 18]).unwrap();
        let cfg = MdConfig {
            steps: 200,
            write_every: 50,
            ..MdConfig::default()
        };
        let run = run_md(&s, &LennardJones::argon(), &cfg).unwrap();
        assert!(run.report.stable);
        assert_eq!(run.frames.len(), 5);
        assert_eq!(run.final_state.positions(), s.positions.as_slice());
        assert_eq!(run.report.ps_stable, 0.1);
    }

    #[test]
    fn close_approach_is_reported_not_raised() {
        // the attracted pair turns around well inside the 3.6 Å threshold
        let s = AtomicStructure::new(vec![[0.0; 3], [5.0, 0.0, 0.0]], vec![18, 18]).unwrap();
        let cfg = MdConfig {
            steps: 20_000,
            dt: 2.0,
            monitor: StabilityMonitor {
                min_distance: 3.6,
                ..StabilityMonitor::default()
            },
            ..MdConfig::default()
        };
        let run = run_md(&s, &LennardJones::argon(), &cfg).unwrap();
        assert!(!run.report.stable);
        assert!(matches!(run.report.failure, Some(Violation::TooClose { .. })));
        let step = run.report.failure_step.unwrap();
        assert_eq!(run.frames.last().unwrap().info["step"], step.to_string());
        assert_eq!(run.report.steps_completed, step);
        assert!(run.report.ps_stable < 40.0);
    }
}
