use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use evreflex::pipeline::{
    self, EvadeArgs, EvalArgs, FlowArgs, SimulateArgs, TtiArgs, TtiVariant, VizArgs, VizKind,
};
use evreflex::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Event + depth collision-avoidance toolkit.
#[derive(Parser)]
#[command(name = "evreflex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Static,
    Dynamic,
    Gt,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Flow,
    Tti,
    Events,
    Depth,
}

#[derive(Subcommand)]
enum Command {
    /// Render a sequence from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate optical flow for every frame pair.
    Flow {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Solver settings; defaults to the sequence's own config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute inverse time-to-impact maps.
    Tti {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "dynamic")]
        variant: Variant,
        /// Estimated flow directory; ground-truth flow when omitted.
        #[arg(long)]
        flow: Option<PathBuf>,
    },
    /// Obstacle motion vectors and evasion directions.
    Evade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tti: PathBuf,
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        /// Average over all valid pixels instead of the danger mask.
        #[arg(long)]
        all_pixels: bool,
        /// Keep flow components in px/frame.
        #[arg(long)]
        pixel_units: bool,
    },
    /// Score estimates against ground truth.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        tti: Option<PathBuf>,
        #[arg(long)]
        events_only: bool,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.5)]
        depth_threshold: f64,
    },
    /// Render a flow, TTI, event or depth file as a PPM image.
    Viz {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> evreflex::Result<()> {
    match command {
        Command::Simulate { config, out, seed } => {
            pipeline::cmd_simulate(&SimulateArgs { config, out, seed })?;
        }
        Command::Flow { input, out, config } => {
            pipeline::cmd_flow(&FlowArgs { input, out, config })?;
        }
        Command::Tti {
            input,
            out,
            variant,
            flow,
        } => {
            let variant = match variant {
                Variant::Static => TtiVariant::Static,
                Variant::Dynamic => TtiVariant::Dynamic,
                Variant::Gt => TtiVariant::GroundTruth,
            };
            pipeline::cmd_tti(&TtiArgs {
                input,
                out,
                variant,
                flow,
            })?;
        }
        Command::Evade {
            input,
            out,
            tti,
            flow,
            horizon,
            all_pixels,
            pixel_units,
        } => {
            pipeline::cmd_evade(&EvadeArgs {
                input,
                out,
                tti,
                flow,
                horizon,
                all_pixels,
                pixel_units,
            })?;
        }
        Command::Eval {
            input,
            out,
            flow,
            tti,
            events_only,
            horizon,
            depth_threshold,
        } => {
            let (report, _) = pipeline::cmd_eval(&EvalArgs {
                input,
                out,
                flow,
                tti,
                events_only,
                horizon,
                depth_threshold,
            })?;
            print!("{}", report.render());
        }
        Command::Viz { input, kind, out } => {
            let kind = match kind {
                Kind::Flow => VizKind::Flow,
                Kind::Tti => VizKind::Tti,
                Kind::Events => VizKind::Events,
                Kind::Depth => VizKind::Depth,
            };
            pipeline::cmd_viz(&VizArgs { input, kind, out })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    // A config that does not exist is a usage error, not a runtime failure.
    if let Command::Simulate { config, .. } = &cli.command {
        if !config.is_file() {
            eprintln!("error: config file {} does not exist", config.display());
            return ExitCode::from(EXIT_USAGE);
        }
    }
    if let Err(e) = pipeline::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::MissingInput(_) = e {
                eprintln!("hint: inputs are produced by `evreflex simulate` and the other stages");
            }
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
