//! Thin command-line front end over the `experiment` module.
//!
//! Exit codes: 0 success, 1 usage or setup error, 2 failed check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dunst::config::{parse_config, ExperimentConfig};
use dunst::experiment;
use dunst::metrics::format_metrics_tsv;
use dunst::oracle::{format_table, run_suite, OracleSuiteConfig};

#[derive(Parser)]
#[command(name = "dunst", about = "Dual VAE self-training on synthetic corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus `--key value` overrides for any config key.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, e.g. `--out_dir runs/a --temperature 5`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> dunst::error::Result<ExperimentConfig> {
        parse_config(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw the synthetic corpus into `out_dir`.
    GenCorpus(ConfigArgs),
    /// Train the base dual VAE on the labelled split.
    TrainBase(ConfigArgs),
    /// Self-train the base model with the configured variant.
    Selftrain(ConfigArgs),
    /// Evaluate a checkpoint (default: the base model).
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Enumerate the tabular identities and print a pass/fail table.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        models: usize,
        #[arg(long, default_value_t = 10000)]
        quadruples: usize,
        #[arg(long, default_value_t = 1000)]
        candidates: usize,
    },
    /// Final-epoch comparison table over run directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn run(cli: Cli) -> dunst::error::Result<Outcome> {
    match cli.command {
        Command::GenCorpus(a) => {
            let cfg = a.load()?;
            let prefix = experiment::gen_corpus(&cfg)?;
            println!("wrote {}.{{labeled,unlabeled,dev,test}}", prefix.display());
        }
        Command::TrainBase(a) => {
            let cfg = a.load()?;
            let base = experiment::train_base_to_disk(&cfg)?;
            let (_, dev) = base.history[base.best_epoch - 1];
            println!(
                "best epoch {} of {} (dev loss {dev:.4}); saved {}",
                base.best_epoch,
                base.epochs_trained,
                experiment::Layout::new(&cfg)?.base_dir().join("checkpoint_best").display()
            );
        }
        Command::Selftrain(a) => {
            let cfg = a.load()?;
            let (dir, state) = experiment::selftrain_to_disk(&cfg)?;
            print!("{}", format_metrics_tsv(&state.history));
            println!("wrote {}", dir.display());
        }
        Command::Eval { checkpoint, cfg } => {
            let cfg = cfg.load()?;
            let ckpt = match checkpoint {
                Some(p) => p,
                None => experiment::Layout::new(&cfg)?.base_dir().join("checkpoint_best"),
            };
            let report = experiment::eval_checkpoint(&cfg, &ckpt)?;
            print!("{}", format_metrics_tsv(std::slice::from_ref(&report)));
        }
        Command::OracleCheck {
            seed,
            models,
            quadruples,
            candidates,
        } => {
            let rows = run_suite(&OracleSuiteConfig {
                seed,
                models,
                quadruples,
                candidates,
                ..OracleSuiteConfig::default()
            })?;
            print!("{}", format_table(&rows));
            if rows.iter().any(|r| !r.passed) {
                return Ok(Outcome::CheckFailed);
            }
        }
        Command::Report { dirs } => {
            let rows = experiment::collect_runs(&dirs)?;
            print!("{}", experiment::format_report(&rows));
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
