use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xplat3d::cli::{self, AugmentMode, AugmentParams, GlobalOptions};
use xplat3d::metrics::IouMode;
use xplat3d::Error;

#[derive(Parser)]
#[command(name = "xplat3d", version, about = "Cross-platform LiDAR 3D detection adaptation")]
struct Args {
    /// JSON config for the chosen command; unknown keys are rejected
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic sequences for each platform profile
    Synth,
    /// Apply one geometric augmentation to every frame of a directory
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: String,
        /// Jitter bound in degrees (rpj)
        #[arg(long)]
        range: Option<f64>,
        /// Scaling bounds (ros)
        #[arg(long, num_args = 2)]
        scale: Option<Vec<f64>>,
        /// Level-platform sensor height (vpp)
        #[arg(long)]
        height: Option<f64>,
    },
    /// Per-class BEV and 3D AP of detection labels against ground truth
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        #[arg(long)]
        iou: Option<f64>,
        /// bev or 3d
        #[arg(long)]
        mode: Option<String>,
    },
    /// Pre-adapt on a source set, pseudo-label and adapt to a target set
    Adapt {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Fraction of target sequences held out for evaluation
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
    /// Elevation, ego-motion and relative-pitch statistics of a frame directory
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidArgument(format!("unknown {what} '{s}'")))
}

fn run(args: Args) -> Result<(), Error> {
    if args.threads == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()));
    }
    xplat3d::parallel::set_threads(args.threads);
    let g = GlobalOptions {
        config: args.config,
        seed: args.seed,
        out: args.out,
        threads: args.threads,
    };
    match args.command {
        Command::Synth => {
            cli::cmd_synth(&g)?;
        }
        Command::Augment { input, mode, range, scale, height } => {
            let mode: AugmentMode = parse_enum("augment mode", &mode)?;
            let mut p = AugmentParams::default();
            if let Some(r) = range {
                p.rpj_range = r;
            }
            if let Some(s) = scale {
                p.ros_range = [s[0], s[1]];
            }
            if let Some(h) = height {
                p.vehicle_height = h;
            }
            cli::cmd_augment(&g, &input, mode, &p)?;
        }
        Command::Eval { dets, gts, iou, mode } => {
            let mode: Option<IouMode> = mode.map(|m| parse_enum("IoU mode", &m)).transpose()?;
            let report = cli::cmd_eval(&g, &dets, &gts, iou, mode)?;
            for e in &report.entries {
                println!("{e}");
            }
        }
        Command::Adapt { source, target, holdout } => {
            let r = cli::cmd_adapt(&g, &source, &target, holdout)?;
            println!("pre-adapt");
            for e in &r.pre_adapt.entries {
                println!("  {e}");
            }
            println!("adapted");
            for e in &r.adapted.entries {
                println!("  {e}");
            }
        }
        Command::Stats { input } => {
            cli::cmd_stats(&g, &input)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xplat3d: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
