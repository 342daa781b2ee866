//! Command-line front end: `simulate`, `fit`, `evaluate`, `bounds`,
//! `sweep` and `selfcheck`.
//!
//! Each subcommand reads one JSON config (`--config`, optional where every
//! field has a default), applies flag overrides, computes everything in
//! memory and only then writes its files into `--out-dir`, each through a
//! temporary file renamed into place. Relative paths inside a config are
//! resolved against the config file's directory.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::selfcheck::SelfcheckOptions;
use crate::simlab::SweepConfig;
use commands::Output;
use config::{parse, BoundsConfig, EvaluateConfig, FitConfig, SimulateConfig};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "MSMPOLICY_THREADS";

#[derive(Debug, Parser)]
#[command(name = "msmpolicy", version, about = "Policy learning robust to unobserved confounding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to MSMPOLICY_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reduced workload (sweep: 20 reps; selfcheck: smaller moment sample).
    #[arg(long, global = true)]
    pub smoke: bool,
    /// simulate: also write potential outcomes and the latent confounder.
    #[arg(long, global = true)]
    pub with_truth: bool,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from the simulation design or a stand-in generator.
    Simulate,
    /// Learn an MMW or MMI policy from a dataset.
    Fit,
    /// Estimate worst-case welfare/improvement of a saved policy.
    Evaluate,
    /// Export per-unit bounds on conditional means and effects.
    Bounds,
    /// Repeated simulation over a grid of sensitivity values, with charts.
    Sweep,
    /// Verify closed forms against independent oracles.
    Selfcheck {
        /// Test hook: flips the sign convention of the closed-form bound.
        #[arg(long, hide = true)]
        corrupt_sign: bool,
    },
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            if out.exit_code == 0 {
                println!("{}", out.summary);
            } else {
                eprintln!("{}", out.summary);
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the parsed command and writes its outputs.
pub fn run(cli: &Cli) -> Result<Output> {
    let out = match thread_count(cli.threads)? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::BadConfig(format!("thread pool: {e}")))?
            .install(|| execute(cli))?,
        None => execute(cli)?,
    };
    write_all(&cli.out_dir, &out.files)?;
    Ok(out)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::BadConfig(format!("{THREADS_ENV}={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::BadConfig("thread count must be positive".into()));
    }
    Ok(n)
}

fn execute(cli: &Cli) -> Result<Output> {
    let (text, base) = read_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate => {
            let mut cfg: SimulateConfig = parse(&text, "simulate")?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.dgp.validate()?;
            commands::simulate(&cfg, cli.with_truth)
        }
        Command::Fit => {
            let mut cfg: FitConfig = parse(&text, "fit")?;
            cfg.data = base.join(&cfg.data);
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            commands::fit(&cfg)
        }
        Command::Evaluate => {
            let mut cfg: EvaluateConfig = parse(&text, "evaluate")?;
            cfg.data = base.join(&cfg.data);
            cfg.policy = base.join(&cfg.policy);
            cfg.baseline = cfg.baseline.map(|p| base.join(p));
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            commands::evaluate(&cfg)
        }
        Command::Bounds => {
            let mut cfg: BoundsConfig = parse(&text, "bounds")?;
            cfg.data = base.join(&cfg.data);
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            commands::bounds(&cfg)
        }
        Command::Sweep => {
            let mut cfg: SweepConfig = parse(&text, "sweep")?;
            if cli.smoke {
                cfg = cfg.smoke();
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            commands::sweep(&cfg)
        }
        Command::Selfcheck { corrupt_sign } => {
            if cli.config.is_some() {
                return Err(Error::BadConfig("selfcheck takes no config file".into()));
            }
            let mut opts = SelfcheckOptions::default();
            if let Some(s) = cli.seed {
                opts.seed = s;
            }
            if cli.smoke {
                opts.moment_n = 20_000;
            }
            if *corrupt_sign {
                opts.convention = crate::bounds::SignConvention::Flipped;
            }
            commands::selfcheck(&opts)
        }
    }
}

/// Config text (an empty object when absent) and the directory relative
/// paths resolve against.
fn read_config(path: Option<&Path>) -> Result<(String, PathBuf)> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::BadConfig(format!("cannot read config {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((text, base))
        }
        None => Ok(("{}".into(), PathBuf::new())),
    }
}

/// Stages every file as a temporary in `dir`, then renames them all into
/// place. A failure before the renames leaves no output behind.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| e.error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_exit_one() {
        assert_eq!(main_with_args(["msmpolicy", "frobnicate"]), 1);
        assert_eq!(main_with_args(["msmpolicy", "--help"]), 0);
    }

    #[test]
    fn staged_writes_land_whole() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("nested");
        write_all(&target, &[("a.txt".into(), b"one".to_vec()), ("b.txt".into(), b"two".to_vec())]).unwrap();
        assert_eq!(std::fs::read(target.join("a.txt")).unwrap(), b"one");
        let names: Vec<_> = std::fs::read_dir(&target).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 2, "no temporaries left: {names:?}");
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(thread_count(Some(0)).is_err());
        assert_eq!(thread_count(Some(3)).unwrap(), Some(3));
    }
}
