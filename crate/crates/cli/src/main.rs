//! `pdflow`: runs the time-rescaled primal-dual flow on the builtin problems,
//! writes CSV time series and SVG plots, and checks the convergence bounds.
//!
//! Exit codes: 0 ok, 1 a rate or settling check failed, 2 parameter
//! conditions violated, 3 integration did not reach `t_end`, 5 a bound was
//! violated, 64 usage, config or input error.

mod commands;
mod config;
mod svg;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::EXIT_USAGE;
use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "pdflow", version, about = "Time-rescaled primal-dual inertial dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory for CSV, SVG and verdict files; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Number of log-spaced samples.
    #[arg(long)]
    samples: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            t_end: self.t_end,
            samples: self.samples,
            out: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the parameter conditions for every configured scaling.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Integrate and write one CSV per scaling plus six SVG panels.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run even when the parameter conditions fail.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check bounds, rates and settling and write verdict.json.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
        /// CSV written by `run`, one per configured scaling in order;
        /// without it the runs are done afresh.
        #[arg(long = "csv")]
        csv: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// The reference sweep on the quadratic example.
    #[command(name = "reproduce-figure-1")]
    ReproduceFigure1 {
        #[command(flatten)]
        common: Common,
    },
    /// The reference sweep on the logistic example.
    #[command(name = "reproduce-figure-2")]
    ReproduceFigure2 {
        #[command(flatten)]
        common: Common,
    },
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Validate { config } => commands::validate(&Config::load(&config)?),
        Command::Run { config, force, common } => {
            let plan = Config::load(&config)?.resolve(&common.overrides())?;
            commands::run(&plan, force)
        }
        Command::Rates {
            config,
            force,
            csv,
            common,
        } => {
            let plan = Config::load(&config)?.resolve(&common.overrides())?;
            commands::rates(&plan, &csv, force)
        }
        Command::ReproduceFigure1 { common } => {
            let plan = Config::preset("quadratic_example").resolve(&common.overrides())?;
            commands::run(&plan, false)
        }
        Command::ReproduceFigure2 { common } => {
            let plan = Config::preset("logistic_example").resolve(&common.overrides())?;
            commands::run(&plan, false)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
