//! `twopath`: generate data, train, compare against the Bayes oracle, run
//! sweeps and paths, and emit figure data.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{ModelSpec, RunConfig};

#[derive(Parser)]
#[command(name = "twopath", version, about = "Assess classifier posteriors against an exact Bayes oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline command. They override the config file.
#[derive(Args)]
struct Common {
    /// JSON configuration document
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (sweep only uses more than one)
    #[arg(long)]
    parallelism: Option<usize>,
    /// Preset model name (see `twopath presets`)
    #[arg(long)]
    preset: Option<String>,
    /// Number of samples to draw
    #[arg(long)]
    samples: Option<usize>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = Some(p);
        }
        if let Some(p) = &self.preset {
            cfg.model = Some(ModelSpec::Preset(p.clone()));
        }
        if let Some(n) = self.samples {
            cfg.samples = Some(n);
        }
        if let Some(e) = self.epochs {
            cfg.mlp.get_or_insert_with(Default::default).epochs = Some(e);
        }
        // fail on bad models and parameters before any command writes
        let model = cfg.mixture()?;
        cfg.map_for(&model)?;
        cfg.parallelism()?;
        cfg.bins()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled dataset from the configured model
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier on a dataset CSV
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV written by `generate`
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare a trained classifier with the oracle posterior
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate over a grid of two-cluster models
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Use the full 9000-point grid with 10000 samples per point
        #[arg(long)]
        paper_scale: bool,
        /// Actually run a paper-scale sweep (otherwise only the plan is printed)
        #[arg(long, requires = "paper_scale")]
        confirm: bool,
        /// Bins for the binned overlays
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Evaluate along a straight path across the latent plane
    Path {
        #[command(flatten)]
        common: Common,
        /// Checkpoint of a classifier trained on embedded data
        #[arg(long)]
        checkpoint: PathBuf,
        /// Path start `v0,v1`
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, requires = "end")]
        start: Option<[f64; 2]>,
        /// Path end `v0,v1`
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, requires = "start")]
        end: Option<[f64; 2]>,
        /// Points along the path (default 16)
        #[arg(long)]
        points: Option<usize>,
    },
    /// Write figure data (and optionally SVG plots) from a sweep directory
    Report {
        /// Directory written by `sweep`
        #[arg(long)]
        sweep: PathBuf,
        /// Output directory (default: the sweep directory)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bins for the density and sparsity overlays
        #[arg(long, default_value_t = config::DEFAULT_BINS)]
        bins: usize,
        /// Also render SVG plots
        #[arg(long)]
        svg: bool,
    },
    /// List the built-in models
    Presets {
        /// Print full parameters as JSON
        #[arg(long)]
        json: bool,
    },
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected `v0,v1`, got `{s}`"));
    };
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok([parse(a)?, parse(b)?])
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let path = commands::generate(&common.resolve()?)?;
            println!("{}", path.display());
        }
        Command::Train { common, data } => {
            let path = commands::train_cmd(&common.resolve()?, &data)?;
            println!("{}", path.display());
        }
        Command::Eval { common, checkpoint } => {
            let path = commands::eval(&common.resolve()?, &checkpoint)?;
            println!("{}", path.display());
        }
        Command::Sweep { common, paper_scale, confirm, bins } => {
            let mut cfg = common.resolve()?;
            if bins.is_some() {
                cfg.bins = bins;
            }
            let opts = commands::SweepOptions { paper_scale, confirm };
            if let Some(path) = commands::sweep(&cfg, &opts)? {
                println!("{}", path.display());
            }
        }
        Command::Path { common, checkpoint, start, end, points } => {
            let cfg = common.resolve()?;
            let endpoints = start.zip(end);
            let path = commands::path(&cfg, &checkpoint, endpoints, points)?;
            println!("{}", path.display());
        }
        Command::Report { sweep, out, bins, svg } => {
            let written = report::report(&sweep, out.as_deref(), bins, svg)?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Presets { json } => commands::presets(json)?,
    }
    Ok(())
}
