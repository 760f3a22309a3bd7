use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlanet::io::{resolve_output_dir, RunConfig};
use mlanet::md::MdConfig;
use mlanet::{app, Error, Result};

#[derive(Parser)]
#[command(name = "mlanet", version, about = "Equivariant attention interatomic potential")]
struct Cli {
    /// Output directory; MLANET_OUTPUT_DIR takes precedence.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Test fold of a `split.folds`-fold split.
        #[arg(long)]
        fold: Option<usize>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Metrics of a checkpoint on a labelled extxyz file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Molecular dynamics from the first frame of an extxyz file.
    Md {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        structure: PathBuf,
        /// Run config whose [md] section supplies defaults for the flags below.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Time step, fs [default: 0.5].
        #[arg(long)]
        dt: Option<f64>,
        /// Langevin temperature, K; NVE without it.
        #[arg(long)]
        temp: Option<f64>,
        /// Langevin friction, 1/fs [default: 0.01].
        #[arg(long)]
        friction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Trajectory stride in steps [default: 100].
        #[arg(long)]
        write_every: Option<usize>,
    },
    /// Test error against training-set size, and epoch time against l_max.
    LearningCurve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
    /// Inference latency for each frame of an extxyz file.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long, default_value_t = 20)]
        repeat: usize,
    },
    /// Run the verification suite.
    Verify {
        /// Acceptance scale, including the training and MD checks.
        #[arg(long)]
        full: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    let flag_dir = cli.output_dir.clone();
    let plain_dir = || resolve_output_dir(flag_dir.clone());
    let config_dir = |cfg: &RunConfig| match &flag_dir {
        Some(_) => plain_dir(),
        None => cfg.output_dir(),
    };
    match cli.command {
        Command::Train { config, fold, resume } => {
            let cfg = RunConfig::load(&config)?;
            let out = config_dir(&cfg);
            let s = app::train(&cfg, fold, resume.as_deref(), &out)?;
            for (split, m) in &s.metrics {
                println!(
                    "{split:>5}: n={} energy MAE {:.6} eV ({:.6} eV/atom){}",
                    m.count,
                    m.mae_energy,
                    m.mae_energy_per_atom,
                    m.mae_forces.map(|f| format!(", force MAE {f:.6} eV/Å")).unwrap_or_default()
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { checkpoint, data } => {
            let out = plain_dir();
            let m = app::eval(&checkpoint, &data, &out)?;
            println!("{}", serde_json::to_string_pretty(&m).map_err(|e| Error::Data(e.to_string()))?);
        }
        Command::Md {
            checkpoint,
            structure,
            config,
            steps,
            dt,
            temp,
            friction,
            seed,
            write_every,
        } => {
            let (mut cfg, out) = match &config {
                Some(path) => {
                    let run = RunConfig::load(path)?;
                    (run.md.clone(), config_dir(&run))
                }
                None => (MdConfig::default(), plain_dir()),
            };
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.temperature = temp.or(cfg.temperature);
            cfg.friction = friction.unwrap_or(cfg.friction);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.write_every = write_every.unwrap_or(cfg.write_every);
            let report = app::md(&checkpoint, &structure, &cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?);
        }
        Command::LearningCurve { config, sizes } => {
            let cfg = RunConfig::load(&config)?;
            let out = config_dir(&cfg);
            let (rows, timing) = app::learning_curve_cmd(&cfg, &sizes, &out)?;
            println!("{}", mlanet::train::CurveRow::CSV_HEADER);
            for r in rows.iter().chain(&timing) {
                println!("{}", r.csv_line());
            }
        }
        Command::Bench {
            checkpoint,
            structure,
            repeat,
        } => {
            let rows = app::bench(&checkpoint, &structure, repeat, &plain_dir())?;
            println!("{}", mlanet::bench::BenchRow::CSV_HEADER);
            for r in &rows {
                println!("{}", r.csv_line());
            }
        }
        Command::Verify { full } => {
            let reports = app::verify(full, &plain_dir())?;
            for r in &reports {
                println!("{}", r.line());
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(Error::Oracle(format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": { "category": e.category(), "message": e.to_string() } });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
