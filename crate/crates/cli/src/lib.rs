//! Command-line harness for staged residual learning experiments.
//!
//! `run` executes an experiment config, `compare` contrasts two run
//! directories, `plot` renders metric logs to SVG and `replay` learns from a
//! recorded stream.

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod plot;
pub mod replay;
pub mod run;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use restune_core::pipeline::StageKind;

use crate::config::{ConfigError, Overrides};

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid configuration or invocation (exit 2).
    Config(ConfigError),
    /// Runtime failure, e.g. an aborted stage (exit 1).
    Stage(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Stage(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "invalid configuration: {e}"),
            Failure::Stage(e) => write!(f, "{e:#}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "restune", version, about = "Learn residual model errors with UKF-tuned networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Override the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory to create.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Force the deterministic interleaved mode.
    #[arg(long)]
    pub single_thread: bool,
    /// Steps between tuner updates, for every stage.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Low-pass coefficient in [0, 1], for every stage.
    #[arg(long)]
    pub filter_alpha: Option<f64>,
    /// Root for default run directories.
    #[arg(long, env = run::OUT_ROOT_ENV, hide_env_values = true)]
    pub out_root: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            stride: self.stride,
            filter_alpha: self.filter_alpha,
            single_thread: self.single_thread,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run every stage of an experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare per-stage H2 statistics of two runs.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Write the CSV report here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render H2 and per-channel error plots of a run.
    Plot {
        dir: PathBuf,
        /// Output directory; defaults to `<dir>/plots`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Largest number of points per series.
        #[arg(long, default_value_t = 1000)]
        max_points: usize,
    },
    /// Learn one stage from a recorded stream CSV.
    Replay {
        csv: PathBuf,
        /// Config supplying robot parameters and stage settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tag of the reference rows.
        #[arg(long, default_value = "real")]
        tag: String,
        /// Tag of simulator rows, for real-to-sim.
        #[arg(long)]
        sim_tag: Option<String>,
        #[arg(long, value_parser = parse_stage)]
        stage: Option<StageKind>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_stage(s: &str) -> Result<StageKind, String> {
    match s {
        "sim-to-kin" => Ok(StageKind::SimToKin),
        "real-to-kin" => Ok(StageKind::RealToKin),
        "real-to-sim" => Ok(StageKind::RealToSim),
        other => Err(format!("unknown stage `{other}` (sim-to-kin, real-to-kin, real-to-sim)")),
    }
}

/// Executes a parsed command line, returning the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Cmd::Run { config, common } => run::cmd_run(&run::RunArgs {
            config,
            out: common.out.clone(),
            env_root: common.out_root.clone(),
            overrides: common.overrides(),
        })
        .map(|dir| println!("{}", dir.display())),
        Cmd::Compare { dir_a, dir_b, csv } => (|| -> anyhow::Result<()> {
            let rows = compare::compare_runs(&dir_a, &dir_b)?;
            let mut stdout = io::stdout().lock();
            write!(stdout, "{}", compare::table(&rows))?;
            match csv {
                Some(p) => compare::write_csv(File::create(&p)?, &rows)?,
                None => {
                    writeln!(stdout)?;
                    compare::write_csv(&mut stdout, &rows)?;
                }
            }
            Ok(())
        })()
        .map_err(Failure::Stage),
        Cmd::Plot { dir, out, max_points } => {
            let out = out.unwrap_or_else(|| dir.join("plots"));
            plot::cmd_plot(&dir, &out, max_points)
                .map(|files| {
                    for f in files {
                        println!("{}", f.display());
                    }
                })
                .map_err(Failure::Stage)
        }
        Cmd::Replay {
            csv,
            config,
            tag,
            sim_tag,
            stage,
            common,
        } => replay::cmd_replay(&replay::ReplayArgs {
            csv,
            config,
            tag,
            sim_tag,
            stage,
            out: common.out.clone(),
            env_root: common.out_root.clone(),
            overrides: common.overrides(),
        })
        .map(|dir| println!("{}", dir.display())),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
