mod commands;
mod error;
mod render;
mod source;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::exit_code;

#[derive(Debug, Parser)]
#[command(name = "cspscale", version, about = "Cost analysis, CSP rewriting and compound scaling of CNN detectors")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Also count costs by brute force over the unrolled convolutions.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Memory bandwidth (channels) used for PCB partition planning.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub tau: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Backbone,
    Neck,
    All,
}

#[derive(Debug, Args)]
pub struct InputArg {
    /// Square input resolution overriding the network's own (at least 32).
    #[arg(long)]
    pub input: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cost report of one network.
    Analyze {
        /// Preset name or architecture file.
        source: String,
        #[command(flatten)]
        input: InputArg,
    },
    /// Side-by-side costs of two networks.
    Compare {
        a: String,
        b: String,
        #[command(flatten)]
        input: InputArg,
    },
    /// Replace blocks by their CSP counterparts.
    Cspize {
        source: String,
        #[arg(long, value_enum, default_value_t = ScopeArg::All)]
        scope: ScopeArg,
        /// Write the rewritten architecture file here.
        #[arg(long)]
        output: Option<std::path::PathBuf>,
    },
    /// Remove the top pyramid levels (P7, P6, ...).
    Prune {
        source: String,
        /// Level to remove; repeat for several.
        #[arg(long = "remove", required = true)]
        remove: Vec<String>,
        #[arg(long)]
        output: Option<std::path::PathBuf>,
    },
    /// Compound scale-up to a larger input under a FLOP budget.
    Scale {
        source: String,
        /// Target square input resolution.
        #[arg(long)]
        input: u32,
        /// Absolute FLOP budget.
        #[arg(long, conflicts_with = "budget_ratio", required_unless_present = "budget_ratio")]
        budget_flops: Option<u128>,
        /// Budget as a multiple of the base network's FLOPs.
        #[arg(long)]
        budget_ratio: Option<f64>,
        #[arg(long)]
        output: Option<std::path::PathBuf>,
    },
    /// Built-in networks.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
    /// Check a network against the tiny-model design principles.
    CheckTiny { source: String },
}

#[derive(Debug, Subcommand)]
pub enum PresetsAction {
    /// List preset names.
    List,
    /// Print a preset as an architecture file.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
