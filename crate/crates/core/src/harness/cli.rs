//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::config::ExperimentConfig;
use super::experiment::{run_evaluation, run_experiment, run_simulation, RunSummary};
use super::oracle::{oracle_table, OracleBlocks};
use crate::error::{Error, Result};
use crate::learn::Method;

#[derive(Debug, Parser)]
#[command(
    name = "flare",
    version,
    about = "Multi-UAV coverage simulator with learned altitude, power and bandwidth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mobility and clustering only; writes trajectory and cluster CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate one method over the seed list.
    Train {
        #[command(flatten)]
        common: Common,
        /// Method to run (defaults to the config's `method`).
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
        /// Served-UE rate threshold in bit/s.
        #[arg(long, value_name = "BPS")]
        rate_threshold: Option<f64>,
    },
    /// Run several methods on the same seeds at one or more thresholds.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Method to include; repeat for several (default: all three).
        #[arg(long, value_parser = parse_method)]
        method: Vec<Method>,
        /// Rate threshold in bit/s; repeat for several (default: 5e6 and 7.5e6).
        #[arg(long, value_name = "BPS")]
        rate_threshold: Vec<f64>,
    },
    /// Print the minimum block count over a grid of horizontal distances.
    Oracle {
        /// Config file, or `default` / `desk`.
        #[arg(long, value_name = "PATH", default_value = "default")]
        config: String,
        /// Transmit power of the link in watts.
        #[arg(long, value_name = "W", default_value_t = 0.1)]
        power: f64,
        /// Rate threshold in bit/s.
        #[arg(long, value_name = "BPS")]
        rate_threshold: Option<f64>,
        /// Largest horizontal distance in meters.
        #[arg(long, value_name = "M", default_value_t = 3000.0)]
        max_distance: f64,
        /// Distance step in meters.
        #[arg(long, value_name = "M", default_value_t = 250.0)]
        step: f64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Config file, or a built-in profile: `default` or `desk`.
    #[arg(long, value_name = "PATH", default_value = "default")]
    config: String,
    /// Master seed; repeat for several seeds.
    #[arg(long, value_name = "N")]
    seed: Vec<u64>,
    /// Number of mobility frames.
    #[arg(long, value_name = "N")]
    frames: Option<u64>,
    /// Episodes per frame.
    #[arg(long, value_name = "N")]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("expected one of flare, maddpg_only, static; got `{s}`"))
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::resolve(&self.config)?;
        if !self.seed.is_empty() {
            c.seeds = self.seed.clone();
        }
        if let Some(f) = self.frames {
            c.set("frames", &f.to_string())?;
        }
        if let Some(e) = self.episodes {
            c.set("episodes", &e.to_string())?;
        }
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        Ok(c)
    }
}

fn set_threshold(c: &mut ExperimentConfig, r_th: Option<f64>) -> Result<()> {
    if let Some(r) = r_th {
        c.set("r_th", &r.to_string())?;
    }
    Ok(())
}

fn report(out: &mut dyn Write, s: &RunSummary, dir: &std::path::Path) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<12} r_th={:<10} seeds={} mean served={:.3} violations={}",
        s.method,
        s.r_th,
        s.seeds.len(),
        s.mean_served,
        s.violations()
    )?;
    for (seed, t) in s.seeds.iter().zip(&s.wall_clock) {
        writeln!(out, "  seed {:<6} {:.1} s", seed.seed, t.as_secs_f64())?;
    }
    writeln!(out, "  outputs in {}", dir.display())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    match cli.command {
        Command::Simulate { common } => {
            let c = common.resolve()?;
            let s = run_simulation(&c)?;
            report(out, &s, &c.out_dir).map_err(io)?;
        }
        Command::Train {
            common,
            method,
            rate_threshold,
        } => {
            let mut c = common.resolve()?;
            set_threshold(&mut c, rate_threshold)?;
            if let Some(m) = method {
                c.method = m;
            }
            let s = run_experiment(&c)?;
            report(out, &s, &c.out_dir).map_err(io)?;
        }
        Command::Evaluate {
            common,
            method,
            rate_threshold,
        } => {
            let c = common.resolve()?;
            let methods = if method.is_empty() {
                Method::ALL.to_vec()
            } else {
                method
            };
            let thresholds = if rate_threshold.is_empty() {
                vec![5e6, 7.5e6]
            } else {
                rate_threshold
            };
            for r in &thresholds {
                let mut probe = c.clone();
                set_threshold(&mut probe, Some(*r))?;
                probe.validate()?;
            }
            for s in run_evaluation(&c, &methods, &thresholds)? {
                report(out, &s, &c.out_dir).map_err(io)?;
            }
        }
        Command::Oracle {
            config,
            power,
            rate_threshold,
            max_distance,
            step,
        } => {
            let mut c = ExperimentConfig::resolve(&config)?;
            set_threshold(&mut c, rate_threshold)?;
            if !(step > 0.0 && max_distance >= 0.0) {
                return Err(Error::config("step", "need step > 0 and max-distance >= 0"));
            }
            let distances: Vec<f64> = (0..)
                .map(|i| i as f64 * step)
                .take_while(|d| *d <= max_distance + 1e-9)
                .collect();
            let rows = oracle_table(&c.scenario.env, &c.scenario.constants, power, &distances)?;
            writeln!(
                out,
                "{:>10} {:>10} {:>8} {:>10} {:>16} {:>10}",
                "altitude_m", "distance_m", "p_los", "sinr_db", "block_rate_bps", "min_blocks"
            )
            .map_err(io)?;
            for r in rows {
                let blocks = match r.min_blocks {
                    OracleBlocks::Blocks(n) => n.to_string(),
                    OracleBlocks::ZeroRate => "none".into(),
                    OracleBlocks::OverBudget(n) => format!(">{} ({n})", c.scenario.env.block_limit),
                };
                writeln!(
                    out,
                    "{:>10.1} {:>10.1} {:>8.4} {:>10.2} {:>16.1} {:>10}",
                    r.altitude_m,
                    r.distance_m,
                    r.p_los,
                    10.0 * r.sinr.log10(),
                    r.per_block_rate,
                    blocks
                )
                .map_err(io)?;
            }
        }
    }
    Ok(())
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, Error::Config { .. }) {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> ExitCode {
    let code = run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
