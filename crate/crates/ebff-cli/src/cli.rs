//! Argument parsing and command dispatch.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::checks::run_checks;
use crate::config::{Format, RunConfig};
use crate::eval::{self, FfRequest, GridSpec};
use crate::output;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "ebff", version, about = "Numerical checks and form-factor evaluation for the Belavin and eight-vertex models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write output here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: jsonl or csv
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one registered check, or `all`
    Check {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate n = 2 form factors at a point or over a grid
    Ff {
        #[arg(long)]
        op: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 0.3)]
        u: f64,
        #[arg(long, default_value_t = 0.05)]
        u0: f64,
        #[arg(long, default_value_t = 0.7)]
        l: f64,
        #[arg(long, default_value_t = 0)]
        sector: usize,
        /// Comma-separated rapidities, 2m of them
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        u_list: Vec<f64>,
        /// Sweep of the first two rapidities, e.g. u1=0.1:0.3:3,u2=0.5:0.7:3
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a single kernel function
    Kernel {
        function: String,
        /// Argument as re or re,im
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(f) = &common.format {
        cfg.format = match f.as_str() {
            "jsonl" | "json-lines" => Format::JsonLines,
            "csv" => Format::Csv,
            _ => return Err(CliError::Usage(format!("--format must be jsonl or csv, got {f:?}"))),
        };
    }
    Ok(cfg)
}

fn sink(common: &Common) -> Result<Box<dyn Write>, CliError> {
    Ok(match &common.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Runs a parsed command and returns the process exit code: 0 when every
/// check passes, 1 when one fails, 3 when a check could not be evaluated.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Check { name, common } => {
            let cfg = load(&common)?;
            let reports = run_checks(&name, &cfg)?;
            let mut out = sink(&common)?;
            output::reports(&reports, cfg.format, &mut out)?;
            out.flush()?;
            let code = if reports.iter().any(|r| r.error.is_some()) {
                3
            } else if reports.iter().all(|r| r.pass) {
                0
            } else {
                1
            };
            Ok(code)
        }
        Command::Ff { op, m, x, r, u, u0, l, sector, u_list, grid, common } => {
            let mut cfg = load(&common)?;
            cfg.x = x.unwrap_or(cfg.x);
            cfg.r = r.unwrap_or(cfg.r);
            let us = if u_list.is_empty() {
                if m == 2 {
                    vec![0.1, 0.3, 0.45, 0.6]
                } else {
                    vec![0.2, 0.5]
                }
            } else {
                u_list
            };
            let req = FfRequest {
                op: eval::parse_op(&op)?,
                m,
                x: cfg.x,
                r: cfg.r,
                u,
                u0,
                l,
                sector,
                us,
                grid: grid.as_deref().map(GridSpec::parse).transpose()?,
            };
            let records = eval::ff_eval(&req, &cfg)?;
            let mut out = sink(&common)?;
            eval::write_ff(&records, cfg.format, &mut out)?;
            out.flush()?;
            Ok(0)
        }
        Command::Kernel { function, at, j, common } => {
            let cfg = load(&common)?;
            let rec = eval::kernel_eval(&function, eval::parse_complex(&at)?, j, &cfg)?;
            let mut out = sink(&common)?;
            output::json_lines(&[rec], &mut out)?;
            out.flush()?;
            Ok(0)
        }
    }
}
