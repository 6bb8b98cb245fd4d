use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecg_cvae::config::DATA_DIR_ENV;
use ecg_cvae::pipeline::{self, Layout};
use ecg_cvae::{CliResult, Overrides, RunConfig};
use serde_json::json;

/// ECG superclass classification with a small CNN-VAE: data preparation,
/// training, evaluation and plots.
#[derive(Parser, Debug)]
#[command(name = "ecg-cvae", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for data generation, balancing, splitting, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Decision threshold applied to sigmoid outputs.
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Use a generated corpus instead of PTB-XL files.
    #[arg(long, global = true)]
    synthetic: bool,

    /// Output directory for every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Number of synthetic records.
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Maximum training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Network size: `full` or `reduced`.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Directory holding `metadata.csv` and the signal files.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,

    /// Metadata CSV (defaults to `<data-dir>/metadata.csv`).
    #[arg(long, global = true)]
    metadata: Option<PathBuf>,

    /// Base directory for the `signal_file` column (defaults to the data directory).
    #[arg(long, global = true)]
    signal_dir: Option<PathBuf>,

    /// No progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split, balance, fit normalization statistics and class weights.
    Prepare,
    /// Train from prepared artifacts; writes checkpoints, history and stop summary.
    Train,
    /// Score the test fold; writes the report JSON and CSVs.
    Evaluate {
        /// Checkpoint to evaluate (default: the best checkpoint in the output directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render SVG training curves and confusion heatmaps.
    Plot {
        /// History CSV (default: `<out>/history.csv` when present).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Report JSON (default: `<out>/report.json` when present).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// prepare, train, evaluate and plot in sequence.
    RunAll,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            seed: self.seed,
            threshold: self.threshold,
            synthetic: self.synthetic,
            out: self.out.clone(),
            samples: self.samples,
            epochs: self.epochs,
            preset: self.model.clone(),
            data_dir: self.data_dir.clone(),
            metadata: self.metadata.clone(),
            signal_dir: self.signal_dir.clone(),
            quiet: self.quiet,
        }
    }
}

fn plot_command(common: &Common, history: Option<PathBuf>, report: Option<PathBuf>) -> CliResult<serde_json::Value> {
    let out = common.out.clone().or_else(|| {
        common
            .config
            .as_deref()
            .and_then(|p| ecg_cvae::config::read_file_config(p).ok())
            .and_then(|f| f.data.out)
    });
    let out = out.unwrap_or_else(|| ecg_cvae::config::DEFAULT_OUT.into());
    let layout = Layout::new(&out);
    let explicit = history.is_some() || report.is_some();
    let pick = |given: Option<PathBuf>, default: PathBuf| given.or_else(|| (!explicit && default.exists()).then_some(default));
    let history = pick(history, layout.history());
    let report = pick(report, layout.report());
    if history.is_none() && report.is_none() {
        return Err(ecg_cvae::CliError::MissingFile { path: layout.history() });
    }
    let written = pipeline::plot(&out, history.as_deref(), report.as_deref())?;
    Ok(json!({ "command": "plot", "written": written }))
}

fn run(cli: &Cli) -> CliResult<serde_json::Value> {
    if let Command::Plot { history, report } = &cli.command {
        return plot_command(&cli.common, history.clone(), report.clone());
    }
    let cfg = RunConfig::resolve(&cli.common.overrides())?;
    let layout = Layout::new(&cfg.out);
    Ok(match &cli.command {
        Command::Prepare => {
            let summary = pipeline::prepare(&cfg)?;
            json!({ "command": "prepare", "out": cfg.out, "summary": summary })
        }
        Command::Train => {
            let summary = pipeline::train(&cfg)?;
            json!({ "command": "train", "checkpoint": layout.best_checkpoint(), "summary": summary })
        }
        Command::Evaluate { checkpoint } => {
            let report = pipeline::evaluate(&cfg, checkpoint.as_deref())?;
            json!({
                "command": "evaluate",
                "report": layout.report(),
                "binary_accuracy": report.binary_accuracy,
                "subset_accuracy": report.subset_accuracy,
                "macro_auc": report.macro_auc,
            })
        }
        Command::RunAll => {
            let summary = pipeline::run_all(&cfg)?;
            json!({ "command": "run-all", "out": cfg.out, "summary": summary })
        }
        Command::Plot { .. } => unreachable!("handled above"),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
