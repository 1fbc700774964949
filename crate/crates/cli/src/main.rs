//! `vispflow`: render instruction canvases, build and filter datasets,
//! train and sample the flow model, and score benchmark results.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vispflow::exec::{configure_threads, Exec};

use config::{
    keys_help, RunConfig, MODEL_KEYS, RENDER_KEYS, SAMPLE_KEYS, TRAIN_KEYS,
};
use error::CliError;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("VISPFLOW_DESCRIBE"), ")");

#[derive(Parser, Debug)]
#[command(name = "vispflow", version = VERSION, about = "Visual-instruction flow matching toolkit")]
struct Cli {
    /// Worker threads (falls back to VISPFLOW_THREADS; 1 runs sequentially).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.set)?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a canvas from a JSON spec; prints the placement record.
    #[command(after_help = keys_help(&[RENDER_KEYS]))]
    Render(commands::render::RenderArgs),
    /// Build, split and inspect dataset shards.
    #[command(subcommand)]
    Dataset(commands::dataset::DatasetCmd),
    /// Quality-control filters.
    #[command(subcommand)]
    Qc(commands::qc::QcCmd),
    /// Train a model on a shard.
    #[command(after_help = keys_help(&[MODEL_KEYS, TRAIN_KEYS]))]
    Train(commands::train::TrainArgs),
    /// Generate an image from an instruction canvas.
    #[command(after_help = keys_help(&[SAMPLE_KEYS]))]
    Sample(commands::train::SampleArgs),
    /// Similarity metrics and pass-rate reports.
    #[command(subcommand)]
    Eval(commands::eval::EvalCmd),
}

fn exec_for(threads: Option<usize>) -> Result<Exec, CliError> {
    let threads = match threads {
        Some(n) => Some(n),
        None => match std::env::var("VISPFLOW_THREADS") {
            Ok(v) if !v.trim().is_empty() => {
                Some(v.trim().parse().map_err(|_| CliError::Usage(format!("VISPFLOW_THREADS=`{v}` is not a count")))?)
            }
            _ => None,
        },
    };
    match threads {
        Some(0) => Err(CliError::Usage("thread count must be positive".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            configure_threads(n);
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let exec = exec_for(cli.threads)?;
    match cli.command {
        Command::Render(a) => commands::render::run(&a),
        Command::Dataset(c) => commands::dataset::run(&c, exec),
        Command::Qc(c) => commands::qc::run(&c, exec),
        Command::Train(a) => commands::train::run_train(&a, exec),
        Command::Sample(a) => commands::train::run_sample(&a),
        Command::Eval(c) => commands::eval::run(&c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_consumed_keys() {
        let mut cmd = Cli::command();
        let train = cmd.find_subcommand_mut("train").unwrap().render_long_help().to_string();
        for k in MODEL_KEYS.iter().chain(TRAIN_KEYS) {
            assert!(train.contains(&format!("  {k} ")), "train help lacks {k}");
        }
        for (name, keys) in [("sample", SAMPLE_KEYS), ("render", RENDER_KEYS)] {
            let h = cmd.find_subcommand_mut(name).unwrap().render_long_help().to_string();
            assert!(keys.iter().all(|k| h.contains(&format!("  {k} "))), "{name}");
        }
        for (group, subs, keys) in [
            ("dataset", &["build", "split", "stats"][..], config::DATASET_KEYS),
            ("qc", &["cer", "dedup", "score"][..], config::QC_KEYS),
            ("eval", &["metrics", "report"][..], config::EVAL_KEYS),
        ] {
            let g = cmd.find_subcommand_mut(group).unwrap();
            for sub in subs {
                let h = g.find_subcommand_mut(sub).unwrap().render_long_help().to_string();
                assert!(keys.iter().all(|k| h.contains(&format!("  {k} "))), "{group} {sub}");
            }
        }
    }
}
