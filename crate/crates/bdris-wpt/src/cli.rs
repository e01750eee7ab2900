//! Command-line interface: argument parsing, configuration resolution
//! (preset, config file, flag overrides, dBm-to-watts conversion) and
//! dispatch to the experiment runners.
//!
//! Exit codes: `0` on success, `2` on configuration errors, `3` on solver
//! failures.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{dbm_to_watts, BeamformerKind, SystemConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    compare_architectures, dr_table, run_convergence, sweep_m, sweep_n, waveform_report,
    CsvArtifact,
};

/// Multi-carrier wireless power transfer simulator with a reconfigurable
/// reflecting surface.
#[derive(Debug, Parser)]
#[command(name = "bdris-wpt", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; overrides the preset field by field.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Named base configuration.
    #[arg(long, default_value = "desk", value_parser = ["paper-wifi", "desk"])]
    preset: String,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for the CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Beamforming algorithm override.
    #[arg(long)]
    algorithm: Option<String>,

    /// Transmit power budget in dBm (converted to watts here, at the CLI
    /// boundary; the library works in watts throughout).
    #[arg(long = "p-t-dbm")]
    p_t_dbm: Option<f64>,

    /// Monte-Carlo realization count override.
    #[arg(long)]
    realizations: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-iteration DC current traces on one pinned channel realization.
    RunConvergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms to trace (default when --algorithm is
        /// absent).
        #[arg(long, default_value = "sdr,sdp,sca,it")]
        algorithms: String,
    },
    /// Mean DC current versus the number of surface elements.
    SweepM {
        #[command(flatten)]
        common: Common,
        /// Comma-separated element counts.
        #[arg(long, default_value = "2,4,8,16")]
        values: String,
        /// Comma-separated algorithms (default when --algorithm is absent).
        #[arg(long, default_value = "sdr,dris")]
        algorithms: String,
    },
    /// Mean DC current versus the number of subcarriers.
    SweepN {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subcarrier counts.
        #[arg(long, default_value = "1,2,4,8")]
        values: String,
        /// Comma-separated algorithms (default when --algorithm is absent).
        #[arg(long, default_value = "sdr,dris")]
        algorithms: String,
    },
    /// Per-subcarrier spectrum, received time series and PAPR for one
    /// realization.
    WaveformReport {
        #[command(flatten)]
        common: Common,
        /// Time-domain oversampling factor.
        #[arg(long, default_value_t = 4)]
        oversampling: usize,
    },
    /// Fully-connected surface versus the diagonal baseline across channel
    /// regimes.
    CompareRis {
        #[command(flatten)]
        common: Common,
        /// Comma-separated element counts.
        #[arg(long, default_value = "2,4,8,16")]
        values: String,
    },
    /// Relaxation-quality table (DC current and dominant-eigenvalue share).
    DrTable {
        #[command(flatten)]
        common: Common,
        /// Comma-separated MxN setups, e.g. `4x8,8x4`.
        #[arg(long, default_value = "4x8,8x4,8x8,12x8")]
        setups: String,
    },
}

/// Builds the effective configuration: preset, then config file, then the
/// individual flag overrides.
fn resolve_config(common: &Common) -> Result<SystemConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            SystemConfig::from_toml(&text)?
        }
        None => SystemConfig::preset(&common.preset)?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dbm) = common.p_t_dbm {
        cfg.p_t = dbm_to_watts(dbm);
    }
    if let Some(r) = common.realizations {
        cfg.realizations = r;
    }
    if let Some(alg) = &common.algorithm {
        cfg.beamformer.kind = BeamformerKind::parse(alg)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The algorithm list for a subcommand: an explicit `--algorithm` wins over
/// the subcommand's `--algorithms` default list.
fn resolve_algorithms(common: &Common, list: &str) -> Result<Vec<BeamformerKind>> {
    if let Some(alg) = &common.algorithm {
        return Ok(vec![BeamformerKind::parse(alg)?]);
    }
    parse_list(list, "algorithms", BeamformerKind::parse)
}

fn parse_list<T>(text: &str, what: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("empty {what} list")));
    }
    Ok(items)
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Config(format!("'{s}' is not a positive integer")))
}

fn parse_setup(s: &str) -> Result<(usize, usize)> {
    let (m, n) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("setup '{s}' is not of the form MxN")))?;
    Ok((parse_usize(m)?, parse_usize(n)?))
}

fn write_artifacts(out: &Path, artifacts: &[CsvArtifact]) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out.display())))?;
    for artifact in artifacts {
        let path = out.join(&artifact.name);
        std::fs::write(&path, &artifact.text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Parses the given arguments and runs the selected experiment.
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    match &cli.command {
        Command::RunConvergence { common, algorithms } => {
            let cfg = resolve_config(common)?;
            let algs = resolve_algorithms(common, algorithms)?;
            write_artifacts(&common.out, &run_convergence(&cfg, &algs)?)
        }
        Command::SweepM { common, values, algorithms } => {
            let cfg = resolve_config(common)?;
            let algs = resolve_algorithms(common, algorithms)?;
            let vals = parse_list(values, "values", parse_usize)?;
            write_artifacts(&common.out, &sweep_m(&cfg, &vals, &algs)?)
        }
        Command::SweepN { common, values, algorithms } => {
            let cfg = resolve_config(common)?;
            let algs = resolve_algorithms(common, algorithms)?;
            let vals = parse_list(values, "values", parse_usize)?;
            write_artifacts(&common.out, &sweep_n(&cfg, &vals, &algs)?)
        }
        Command::WaveformReport { common, oversampling } => {
            let cfg = resolve_config(common)?;
            write_artifacts(&common.out, &waveform_report(&cfg, *oversampling)?)
        }
        Command::CompareRis { common, values } => {
            let cfg = resolve_config(common)?;
            let vals = parse_list(values, "values", parse_usize)?;
            write_artifacts(&common.out, &compare_architectures(&cfg, &vals)?)
        }
        Command::DrTable { common, setups } => {
            let cfg = resolve_config(common)?;
            let list = parse_list(setups, "setups", parse_setup)?;
            write_artifacts(&common.out, &dr_table(&cfg, &list)?)
        }
    }
}

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Solver(_) | Error::Numerical(_) => 3,
        _ => 2,
    }
}
