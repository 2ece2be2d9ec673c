use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use spikegrad::data::SyntheticParams;
use spikegrad::loss::LossKind;
use spikegrad_cli::config::{merge, RunConfig};
use spikegrad_cli::presets::{preset, PRESET_NAMES};
use spikegrad_cli::{cmd_analyze, cmd_eval, cmd_gen_synthetic, cmd_train, AnalyzeMode, CliError};

#[derive(Parser)]
#[command(
    name = "spikegrad",
    version,
    about = "Train and analyze spiking networks"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPIKEGRAD_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; flags override the config file, which overrides the preset.
    Train(TrainArgs),
    /// Report accuracy of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Accuracy-vs-time curve or per-layer spike counts.
    Analyze {
        #[arg(value_enum)]
        mode: Mode,
        #[command(flatten)]
        common: EvalArgs,
        /// Spacing of the latency evaluation times in ms (default: dt).
        #[arg(long)]
        step_ms: Option<f64>,
        /// Also write a gnuplot script.
        #[arg(long)]
        plot: bool,
    },
    /// Write the synthetic spike-pattern task as event CSVs and manifests.
    GenSynthetic(GenArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    /// Loss kind, with window or target rates taken from the preset.
    #[arg(long, value_enum, requires = "preset")]
    loss: Option<LossArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (default: the checkpoint's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    units: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 2)]
    jitter: usize,
    #[arg(long, default_value_t = 0.05)]
    deletion: f64,
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    /// Bin width in ms used for event timestamps.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Latency,
    Spikes,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    VanRossum,
    SpikeRate,
    Spikemax,
    SpikemaxG,
    SpikemaxS,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::VanRossum => LossKind::VanRossum,
            LossArg::SpikeRate => LossKind::SpikeRate,
            LossArg::Spikemax => LossKind::Spikemax,
            LossArg::SpikemaxG => LossKind::SpikemaxG,
            LossArg::SpikemaxS => LossKind::SpikemaxS,
        }
    }
}

fn resolve_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let base = match &args.preset {
        Some(name) => {
            let p = preset(name)
                .ok_or_else(|| CliError::Config(format!("preset: unknown '{name}'")))?;
            match args.loss {
                Some(kind) => p.with_loss(kind.into()),
                None => p.config(),
            }
        }
        None => RunConfig::default(),
    };
    let mut value = serde_json::to_value(&base).expect("config serializes");
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(spikegrad::Error::io(path, e)))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))?;
        merge(&mut value, file);
    }
    let mut cfg = RunConfig::from_value(value)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = resolve_config(&args)?;
            let summary = cmd_train(&cfg, args.quiet)?;
            println!(
                "wrote {} ({} epochs, {:.1}s)",
                summary.final_checkpoint.display(),
                summary.history.len(),
                summary.elapsed.as_secs_f64()
            );
        }
        Command::Eval(args) => {
            let eval = cmd_eval(&args.checkpoint, &args.manifest, args.out.as_deref())?;
            let correct = eval
                .predictions
                .iter()
                .zip(&eval.labels)
                .filter(|(p, l)| p == l)
                .count();
            println!(
                "accuracy {} ({correct}/{})",
                eval.accuracy,
                eval.labels.len()
            );
        }
        Command::Analyze {
            mode,
            common,
            step_ms,
            plot,
        } => {
            let mode = match mode {
                Mode::Latency => AnalyzeMode::Latency,
                Mode::Spikes => AnalyzeMode::Spikes,
            };
            let path = cmd_analyze(
                &common.checkpoint,
                &common.manifest,
                mode,
                common.out.as_deref(),
                step_ms,
                plot,
            )?;
            println!("wrote {}", path.display());
        }
        Command::GenSynthetic(a) => {
            let params = SyntheticParams {
                classes: a.classes,
                units: a.units,
                steps: a.steps,
                jitter: a.jitter,
                deletion: a.deletion,
                train_samples: a.train,
                test_samples: a.test,
                ..Default::default()
            };
            let (train, test) = cmd_gen_synthetic(&params, a.seed, a.dt, &a.out)?;
            println!("wrote {} and {}", train.display(), test.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
