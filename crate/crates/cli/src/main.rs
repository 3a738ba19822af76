use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trend_cli::commands::{self, EvaluateOptions, EvaluateOutput, Overrides};
use trend_cli::exit_code;
use trend_core::{Backbone, Result, TrendError};

#[derive(Parser)]
#[command(
    name = "trend",
    version,
    about = "Dialogue relation extraction with trigger prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackboneArg {
    Tiny,
    Base,
    Large,
}

impl From<BackboneArg> for Backbone {
    fn from(b: BackboneArg) -> Self {
        match b {
            BackboneArg::Tiny => Backbone::Tiny,
            BackboneArg::Base => Backbone::Base,
            BackboneArg::Large => Backbone::Large,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backbone: Option<BackboneArg>,
    /// Feed the trigger to the relation head regardless of the gate.
    #[arg(long)]
    force_gate_on: bool,
    #[arg(long, default_value = "cpu")]
    device: String,
}

impl RunArgs {
    fn overrides(&self) -> Result<Overrides> {
        check_device(&self.device)?;
        Ok(Overrides {
            seed: self.seed,
            backbone: self.backbone.map(Backbone::from),
            force_gate_on: self.force_gate_on,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a trigger-annotated corpus.
    Train(RunArgs),
    /// Fine-tune a trained checkpoint on a trigger-free corpus.
    Transfer {
        /// Checkpoint directory to start from.
        #[arg(long)]
        source: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a checkpoint on a labeled corpus.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Adapter describing the corpus format.
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// Output directory; defaults to the checkpoint's parent.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write predictions without scoring them.
        #[arg(long)]
        predictions_only: bool,
        /// Score an existing prediction file instead of running the model.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        force_gate_on: bool,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value = "cpu")]
        device: String,
    },
    /// Predict relations and triggers, one JSON line per query pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        adapter: Option<PathBuf>,
        /// Output file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        force_gate_on: bool,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value = "cpu")]
        device: String,
    },
}

fn check_device(device: &str) -> Result<()> {
    if device == "cpu" {
        Ok(())
    } else {
        Err(TrendError::Config(format!(
            "device {device} is not supported; use cpu"
        )))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrendError + '_ {
    move |source| TrendError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let out = commands::train(&args.config, &args.overrides()?)?;
            print!("{}", out.summary);
            println!(
                "checkpoint {} ({})",
                out.checkpoint.display(),
                out.checkpoint_hash
            );
        }
        Command::Transfer { source, run } => {
            let out = commands::transfer(&source, &run.config, &run.overrides()?)?;
            print!("{}", out.summary);
            println!(
                "checkpoint {} ({})",
                out.checkpoint.display(),
                out.checkpoint_hash
            );
        }
        Command::Evaluate {
            checkpoint,
            corpus,
            adapter,
            output,
            predictions_only,
            predictions,
            force_gate_on,
            batch_size,
            device,
        } => {
            check_device(&device)?;
            let out_dir = output.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default()
            });
            let opts = EvaluateOptions {
                adapter,
                predictions,
                predictions_only,
                force_gate_on,
                batch_size,
            };
            match commands::evaluate_corpus(&checkpoint, &corpus, &out_dir, &opts)? {
                EvaluateOutput::Report(report) => print!("{}", report.to_table()),
                EvaluateOutput::Predictions(n) => {
                    println!(
                        "{n} predictions written to {}",
                        out_dir.join(commands::PREDICTIONS_FILE).display()
                    )
                }
            }
        }
        Command::Predict {
            checkpoint,
            input,
            adapter,
            output,
            force_gate_on,
            batch_size,
            device,
        } => {
            check_device(&device)?;
            let records = commands::predict(
                &checkpoint,
                &input,
                adapter.as_ref(),
                force_gate_on,
                batch_size,
            )?;
            let mut text = String::new();
            for r in &records {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            match output {
                Some(p) => std::fs::write(&p, text).map_err(io_err(&p))?,
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(io_err(Path::new("<stdout>")))?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
