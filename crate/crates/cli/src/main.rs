use std::path::PathBuf;
use std::process::ExitCode;

use bathsim::commands::{
    cmd_bench_seg, cmd_calibrate, cmd_gen_scene, cmd_run, BenchSegArgs, CalibrateArgs,
    GenSceneArgs, RunArgs,
};
use bathsim::{CliError, EXIT_OK, EXIT_USAGE};
use bathsim_core::TaskKind;
use clap::{Parser, Subcommand};

const AFTER_HELP: &str = "\
Exit status: 0 success, 2 runtime fault (controller, numerical, I/O), 3 usage or configuration error.
Environment: RABBIT_SIM_THREADS caps the worker pool (default: all cores). RUST_LOG sets log verbosity.";

/// Closed-loop bed-bathing simulator: trials, segmentation benchmarks,
/// synthetic datasets and sensor calibration.
#[derive(Parser)]
#[command(name = "bathsim", version, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a wash, rinse and dry trial on a scenario.
    #[command(after_help = AFTER_HELP)]
    Run {
        /// Scenario JSON; `{}` selects every default.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for trial.csv, report.json, phases.json and primitive_<phase>.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated phases; always executed as wash, rinse, dry.
        #[arg(long, value_delimiter = ',', default_value = "wash,rinse,dry", value_parser = parse_phase)]
        phases: Vec<TaskKind>,
    },
    /// Score the rule-based segmenter on one split of a scene dataset.
    #[command(after_help = AFTER_HELP)]
    BenchSeg {
        /// Dataset directory holding manifest.csv and the scene images.
        #[arg(long)]
        data: PathBuf,
        /// train, val or test (8:1:1).
        #[arg(long, default_value = "test")]
        split: String,
        /// Shuffle seed of the split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where iou_report.json goes (default: the dataset directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a labeled synthetic RGB-thermal-depth dataset.
    #[command(after_help = AFTER_HELP)]
    GenScene {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tone presets to cycle: a range `1..6` or a list `1,3,5`.
        #[arg(long, default_value = "1..6", value_parser = parse_tones)]
        tones: Tones,
        /// Sensor noise: on or off.
        #[arg(long, default_value = "off", value_parser = ["on", "off"])]
        noise: String,
        /// Scenario JSON supplying limb, camera and noise levels.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit a linear force calibration from `fx1..fxk,Fx,Fy,Fz` samples.
    #[command(after_help = AFTER_HELP)]
    Calibrate {
        /// Sample CSV.
        #[arg(long)]
        samples: PathBuf,
        /// Output JSON.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Debug)]
struct Tones(Vec<usize>);

fn parse_phase(s: &str) -> Result<TaskKind, String> {
    TaskKind::from_name(s.trim())
        .filter(|t| TaskKind::PHASES.contains(t))
        .ok_or_else(|| format!("unknown phase `{s}` (wash, rinse, dry)"))
}

fn parse_tones(s: &str) -> Result<Tones, String> {
    let bad = || format!("bad tone list `{s}`");
    let tones: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if tones.is_empty() || tones.iter().any(|t| !(1..=6).contains(t)) {
        return Err(format!("tones must lie in 1..=6, got `{s}`"));
    }
    Ok(Tones(tones))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            phases,
        } => {
            let report = cmd_run(&RunArgs {
                config,
                out,
                seed,
                phases,
            })?;
            eprintln!(
                "coverage {:.1}%  residual soap {:.2}%  residual water {:.2}%  peak force {:.2} N",
                report.coverage_pct,
                report.residual_soap_pct,
                report.residual_water_pct,
                report.peak_force_n
            );
        }
        Command::BenchSeg {
            data,
            split,
            seed,
            out,
        } => {
            cmd_bench_seg(&BenchSegArgs {
                data,
                split,
                seed,
                out,
            })?;
        }
        Command::GenScene {
            out,
            count,
            seed,
            tones,
            noise,
            config,
        } => {
            cmd_gen_scene(&GenSceneArgs {
                out,
                count,
                seed,
                tones: tones.0,
                noise: noise == "on",
                config,
            })?;
        }
        Command::Calibrate { samples, out } => cmd_calibrate(&CalibrateArgs { samples, out })?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
