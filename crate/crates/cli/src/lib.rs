//! Command-line experiment harness over the waveform/filter design library.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use commands::SweepAxis;
use config::RunConfig;
use error::CliError;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "dfrc",
    about = "Joint constant-modulus waveform and receive-filter design with communication constraints",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; omitted means the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and symbol-error trials (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the joint design and write design.json plus the trace files.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Transmit-receive pattern of a finished design over an angle grid.
    Beampattern {
        #[command(flatten)]
        common: Common,
        /// Design artifact path; defaults to <out>/design.json.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Angle grid as start:step:stop in degrees, strictly inside (-90, 90).
        #[arg(long)]
        grid: Option<String>,
    },
    /// Detection probability columns over a false-alarm grid.
    Pd {
        #[command(flatten)]
        common: Common,
        /// Extra SINR columns in dB, comma separated.
        #[arg(long = "sinr-db")]
        sinr_db: Option<String>,
        /// False-alarm grid: logspace:<first exp>:<last exp>:<points> or a comma list.
        #[arg(long, default_value = "logspace:-8:-1:71")]
        pfa: String,
    },
    /// Monte-Carlo symbol-error curves for a finished design.
    Ser {
        #[command(flatten)]
        common: Common,
        /// Design artifact path; defaults to <out>/design.json.
        #[arg(long)]
        design: Option<PathBuf>,
        /// SNR grid in dB as start:step:stop.
        #[arg(long = "snr-grid", default_value = "0:2:12")]
        snr_grid: String,
        /// Independent noise trials per grid point.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
    /// Design runs over one swept quantity, one row per (value, seed).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated value tokens; colon tuples set per-user or per-side values.
        #[arg(long)]
        values: String,
        /// Comma-separated top seeds; defaults to the configured seed.
        #[arg(long)]
        seeds: Option<String>,
        /// Draw a fresh channel per sweep point instead of fixing it per seed.
        #[arg(long = "redraw-channel")]
        redraw_channel: bool,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    cfg.output.directory = out.clone();
    Ok((cfg, out))
}

fn parse_seed_list(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|e| CliError::Config(format!("seed '{t}': {e}")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Design { common } => {
            commands::init_threads(common.threads);
            let (cfg, out) = load_config(&common)?;
            commands::cmd_design(&cfg, &out)
        }
        Cmd::Beampattern { common, design, grid } => {
            commands::init_threads(common.threads);
            let (_, out) = load_config(&common)?;
            let design_file = design.unwrap_or_else(|| artifacts::design_path(&out));
            commands::cmd_beampattern(&design_file, grid.as_deref(), &out)
        }
        Cmd::Pd { common, sinr_db, pfa } => {
            commands::init_threads(common.threads);
            let (cfg, out) = load_config(&common)?;
            let list = match sinr_db.as_deref() {
                Some(text) => commands::parse_float_list(text)?,
                None => Vec::new(),
            };
            commands::cmd_pd(&cfg, &list, &pfa, &out)
        }
        Cmd::Ser { common, design, snr_grid, trials } => {
            commands::init_threads(common.threads);
            let (_, out) = load_config(&common)?;
            let design_file = design.unwrap_or_else(|| artifacts::design_path(&out));
            commands::cmd_ser(&design_file, &snr_grid, trials, common.seed, &out)
        }
        Cmd::Sweep { common, axis, values, seeds, redraw_channel } => {
            commands::init_threads(common.threads);
            let (cfg, out) = load_config(&common)?;
            let tokens: Vec<String> =
                values.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
            let seed_list = match seeds.as_deref() {
                Some(text) => parse_seed_list(text)?,
                None => vec![cfg.seed],
            };
            commands::cmd_sweep(&cfg, axis, &tokens, &seed_list, redraw_channel, &out)
        }
    }
}

/// Entry point shared by the binary and the tests; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv = std::iter::once("dfrc".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
