use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flatquad::check::{default_drag_settings, flatness_check};
use flatquad::config::{ExperimentConfig, RawConfig};
use flatquad::error::Error;
use flatquad::identify::{identify_drag, load_checkpoint};
use flatquad::sim::{fmt_g9, run_simulation};
use flatquad::trajectory::{nominal_stats, WarpMode};

/// Quadrotor flatness and rotor-drag workbench.
#[derive(Parser)]
#[command(name = "flatquad", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-loop run; writes the run log CSV and prints tracking stats.
    Simulate {
        config: PathBuf,
        /// CSV destination (overrides `[run] output`; stdout if neither).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Drag-coefficient identification with Nelder-Mead.
    Identify {
        config: PathBuf,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Finite-difference oracle suite on the configured trajectory.
    FlatnessCheck { config: PathBuf },
    /// Peak thrust and body-rate norm of the drag-free reference.
    Nominal { config: PathBuf },
    /// E_abs for several values of one config key.
    Sweep {
        config: PathBuf,
        /// `section.key`, e.g. `trajectory.speed`.
        #[arg(long)]
        param: String,
        #[arg(long, num_args = 1.., required = true)]
        values: Vec<String>,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
    Tolerance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalBlowup { .. } | Error::SingularInertia | Error::InvalidStep(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<(RawConfig, ExperimentConfig), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let ctx = |e: Error| match Failure::from(e) {
        Failure::Config(m) => Failure::Config(format!("{}: {m}", path.display())),
        other => other,
    };
    let raw = RawConfig::parse(&text).map_err(ctx)?;
    let cfg = ExperimentConfig::from_raw(&raw).map_err(ctx)?;
    Ok((raw, cfg))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn window(cfg: &ExperimentConfig) -> Result<f64, Failure> {
    let sc = &cfg.scenario;
    match (sc.warp.mode, sc.trajectory.period()) {
        (WarpMode::Constant, Some(p)) => Ok(p),
        _ => Ok(sc.duration_seconds()?),
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Simulate { config, output } => {
            let (_, cfg) = load(&config)?;
            let (log, stats) = run_simulation(&cfg.scenario)?;
            let csv = log.to_csv();
            match output.or(cfg.run.output.clone()) {
                Some(path) => write_file(&path, &csv)?,
                None => print!("{csv}"),
            }
            eprintln!(
                "e_abs_m: {}\nmax_err_m: {}\nstd_err_m: {}\nsamples: {}",
                fmt_g9(stats.e_abs),
                fmt_g9(stats.max_err),
                fmt_g9(stats.std_err),
                stats.n_samples
            );
        }
        Cmd::Identify { config, resume } => {
            let (_, cfg) = load(&config)?;
            let state = match resume {
                Some(path) => {
                    let (state, free) = load_checkpoint(&path)?;
                    if free != cfg.identify.config.free {
                        return Err(Failure::Config("checkpoint free list differs from the config".into()));
                    }
                    Some(state)
                }
                None => None,
            };
            let id = &cfg.identify;
            let report = identify_drag(&cfg.scenario, &id.config, id.checkpoint.as_deref(), state)?;
            if let Some(path) = &id.trace {
                write_file(path, &report.trace_csv())?;
            } else {
                print!("{}", report.trace_csv());
            }
            print!("{}", report.summary());
        }
        Cmd::FlatnessCheck { config } => {
            let (_, cfg) = load(&config)?;
            let sc = &cfg.scenario;
            let res = flatness_check(
                &sc.trajectory,
                &sc.warp,
                &sc.plant,
                &default_drag_settings(),
                window(&cfg)?,
                cfg.run.check_samples,
                cfg.run.seed,
            )?;
            println!("dx,dy,samples,skipped,max_w_res,max_w_dot_res,max_c_dot_res,ok");
            let mut ok = true;
            for r in &res {
                ok &= r.passed();
                println!(
                    "{},{},{},{},{},{},{},{}",
                    fmt_g9(r.drag.dx),
                    fmt_g9(r.drag.dy),
                    r.samples,
                    r.skipped,
                    fmt_g9(r.w),
                    fmt_g9(r.w_dot),
                    fmt_g9(r.c_dot),
                    r.passed()
                );
            }
            if !ok {
                return Err(Failure::Tolerance("residuals above tolerance".into()));
            }
        }
        Cmd::Nominal { config } => {
            let (_, cfg) = load(&config)?;
            let sc = &cfg.scenario;
            let stats = nominal_stats(&sc.trajectory, &sc.warp, window(&cfg)?, sc.plant.g)?;
            println!("{:.2} m/s², {:.1} °/s", stats.max_thrust, stats.max_bodyrate_deg());
        }
        Cmd::Sweep { config, param, values } => {
            let (raw, _) = load(&config)?;
            let mut configs = Vec::with_capacity(values.len());
            for v in &values {
                let mut r = raw.clone();
                r.set(&param, v)?;
                configs.push(ExperimentConfig::from_raw(&r)?);
            }
            // runs share nothing; collect by index so output order is fixed
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> =
                    configs.iter().map(|c| s.spawn(move || run_simulation(&c.scenario))).collect();
                handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
            });
            println!("{param},e_abs_m,max_err_m,std_err_m");
            for (v, r) in values.iter().zip(results) {
                let (_, st) = r?;
                println!("{v},{},{},{}", fmt_g9(st.e_abs), fmt_g9(st.max_err), fmt_g9(st.std_err));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLATQUAD_LOG", "warn")).init();
    // clap exits 2 on usage errors, but 2 is reserved for numerical failures
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Tolerance(m)) => {
            eprintln!("tolerance failure: {m}");
            ExitCode::from(3)
        }
    }
}
