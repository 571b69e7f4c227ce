//! Argument parsing and command dispatch for the `pkm-stiffness` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use crate::config::{load_config, Format, RunConfig, Tolerances};
use crate::error::{CliError, Result};
use crate::output::{write_map_csv, write_map_jsonl, write_table_csv};
use crate::run::{run_point, run_sweep, run_table};

#[derive(Debug, Parser)]
#[command(
    name = "pkm-stiffness",
    version,
    about = "Virtual-joint stiffness of 3-PUU and 3-PRPaR translational manipulators"
)]
pub struct Cli {
    /// Print the fully resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stiffness map over the configured region.
    Sweep {
        config: PathBuf,
        /// Output file (default: `output.path` from the config, else stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// JSON stiffness report at one position.
    Point {
        config: PathBuf,
        /// Position `X,Y,Z` in mm.
        #[arg(long, value_delimiter = ',', num_args = 1..=3, allow_negative_numbers = true, required = true)]
        at: Vec<f64>,
        /// Wrench `Fx,Fy,Fz,Mx,My,Mz` (N, N·mm); overrides `[load]`.
        #[arg(long, value_delimiter = ',', num_args = 1..=6, allow_negative_numbers = true)]
        wrench: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running anything.
    Validate { config: PathBuf },
    /// Both default presets at the diagonal reference points Q0, Q1, Q2.
    Table {
        /// Optional config supplying tolerances.
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the binary with `args` (including the program name) and returns the exit code.
pub fn main_with(args: &[OsString]) -> u8 {
    run_with(args, &mut BufWriter::new(std::io::stdout().lock()))
}

/// As [`main_with`], with primary output going to `stdout` instead of the process stream.
/// Diagnostics still go to stderr.
pub fn run_with(args: &[OsString], stdout: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = dispatch(&cli, stdout).and_then(|()| {
        stdout.flush().map_err(|e| CliError::Io {
            path: "<stdout>".into(),
            source: e,
        })
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn open_out<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Box::new(stdout),
    })
}

fn print_resolved(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    write!(stdout, "{}", cfg.resolved()?.to_toml()?).map_err(|e| CliError::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn parse_at(at: &[f64]) -> Result<Vector3<f64>> {
    match at {
        [x, y, z] if at.iter().all(|v| v.is_finite()) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(CliError::config("--at expects three finite numbers X,Y,Z")),
    }
}

fn parse_wrench(w: &Option<Vec<f64>>) -> Result<Option<[f64; 6]>> {
    match w {
        None => Ok(None),
        Some(v) if v.len() == 6 && v.iter().all(|x| x.is_finite()) => {
            let mut out = [0.0; 6];
            out.copy_from_slice(v);
            Ok(Some(out))
        }
        Some(_) => Err(CliError::config("--wrench expects six finite numbers")),
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Sweep {
            config,
            out,
            format,
            threads,
        } => {
            let cfg = load_config(config)?;
            if cli.print_config {
                return print_resolved(&cfg, stdout);
            }
            let result = run_sweep(&cfg, *threads)?;
            let format = format.map(Format::from).unwrap_or(cfg.output.format);
            let path = out.as_deref().or(cfg.output.path.as_deref());
            let mut w = open_out(path, stdout)?;
            match format {
                Format::Csv => write_map_csv(&result.records, &mut w)?,
                Format::Jsonl => write_map_jsonl(&result.records, &mut w)?,
            }
            drop(w);
            for (p, e) in &result.skipped {
                eprintln!("skipped ({}, {}, {}): {e}", p.x, p.y, p.z);
            }
            eprint!("{}", result.summary());
            Ok(())
        }
        Command::Point {
            config,
            at,
            wrench,
            out,
        } => {
            let cfg = load_config(config)?;
            if cli.print_config {
                return print_resolved(&cfg, stdout);
            }
            let report = run_point(&cfg, parse_at(at)?, parse_wrench(wrench)?)?;
            let mut w = open_out(out.as_deref(), stdout)?;
            let io = |e: std::io::Error| CliError::Io {
                path: out.clone().unwrap_or_else(|| "<stdout>".into()),
                source: e,
            };
            serde_json::to_writer_pretty(&mut w, &report)
                .map_err(|e| CliError::config(format!("json: {e}")))?;
            writeln!(w).map_err(io)?;
            w.flush().map_err(io)
        }
        Command::Validate { config } => {
            let cfg = load_config(config)?;
            if cli.print_config {
                return print_resolved(&cfg, stdout);
            }
            cfg.build_model()?;
            writeln!(stdout, "ok: {}", config.display()).map_err(|e| CliError::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
        Command::Table { config, out } => {
            let cfg = match config {
                Some(p) => load_config(p)?,
                None => crate::config::parse_config("")?,
            };
            if cli.print_config {
                return print_resolved(&cfg, stdout);
            }
            let tol: Tolerances = cfg.tolerances;
            let rows = run_table(&tol)?;
            let mut w = open_out(out.as_deref(), stdout)?;
            write_table_csv(&rows, &mut w)?;
            w.flush().map_err(|e| CliError::Io {
                path: out.clone().unwrap_or_else(|| "<stdout>".into()),
                source: e,
            })
        }
    }
}
