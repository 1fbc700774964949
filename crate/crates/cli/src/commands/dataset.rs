use std::fs;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use vispflow::dataset::{dataset_stats, split_by_root, synthetic_dataset, toy_color_dataset, write_shard, PairRecord};
use vispflow::exec::Exec;
use vispflow::qc::GridEmbedder;

use super::{print_json, read_records, write_run_info};
use crate::config::{keys_help, DATASET_KEYS};
use crate::error::CliError;
use crate::ConfigArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Colour-word canvases with solid-colour targets (two categories).
    Toy,
    /// Every category, rendered from simple shapes.
    Synthetic,
}

#[derive(Subcommand, Debug)]
pub enum DatasetCmd {
    /// Generate a dataset into `<out>/data.vpk`.
    #[command(after_help = keys_help(&[DATASET_KEYS]))]
    Build(BuildArgs),
    /// Split a shard by root image into `<out>/train.vpk` and `<out>/bench.vpk`.
    #[command(after_help = keys_help(&[DATASET_KEYS]))]
    Split(SplitArgs),
    /// Print record counts per category.
    #[command(after_help = keys_help(&[DATASET_KEYS]))]
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, value_enum, default_value = "toy")]
    pub kind: Kind,
    /// Pairs for `toy`, pairs per category for `synthetic`.
    #[arg(long, default_value_t = 512)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn pick(flag: &Option<PathBuf>, cfg: &crate::config::RunConfig, key: &str) -> Result<PathBuf, CliError> {
    match flag {
        Some(p) => Ok(p.clone()),
        None => cfg.require_path(key),
    }
}

fn subset(records: &[PairRecord], ids: &[String]) -> Vec<PairRecord> {
    let want: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    records.iter().filter(|r| want.contains(r.meta.id.as_str())).cloned().collect()
}

pub fn run(cmd: &DatasetCmd, exec: Exec) -> Result<(), CliError> {
    match cmd {
        DatasetCmd::Build(a) => {
            let mut cfg = a.config.load()?;
            let out = pick(&a.out, &cfg, "out")?;
            cfg.set("out", &out.to_string_lossy())?;
            let (seed, side) = (cfg.u64("seed")?, cfg.u32("image_side")?);
            let records = match a.kind {
                Kind::Toy => toy_color_dataset(a.count, side, seed)?,
                Kind::Synthetic => synthetic_dataset(a.count, side, seed)?,
            };
            fs::create_dir_all(&out)?;
            write_shard(&records, out.join("data.vpk"))?;
            write_run_info(&out, "dataset-build", &cfg)?;
            print_json(&serde_json::json!({ "shard": out.join("data.vpk"), "stats": dataset_stats(&records) }))
        }
        DatasetCmd::Split(a) => {
            let mut cfg = a.config.load()?;
            let data = pick(&a.data, &cfg, "data")?;
            let out = pick(&a.out, &cfg, "out")?;
            cfg.set("data", &data.to_string_lossy())?;
            cfg.set("out", &out.to_string_lossy())?;
            let records = read_records(&data)?;
            let m = split_by_root(
                &records,
                &GridEmbedder::default(),
                cfg.f64("tau_split")?,
                cfg.f64("bench_fraction")?,
                cfg.u64("seed")?,
                exec,
            );
            fs::create_dir_all(&out)?;
            let train = subset(&records, &m.train_ids);
            let bench = subset(&records, &m.bench_ids);
            if !train.is_empty() {
                write_shard(&train, out.join("train.vpk"))?;
            }
            if !bench.is_empty() {
                write_shard(&bench, out.join("bench.vpk"))?;
            }
            fs::write(out.join("split.json"), serde_json::to_string_pretty(&m)? + "\n")?;
            write_run_info(&out, "dataset-split", &cfg)?;
            print_json(&serde_json::json!({
                "train": train.len(),
                "bench": bench.len(),
                "dropped": m.dropped,
                "max_kept_similarity": m.max_kept_similarity,
            }))
        }
        DatasetCmd::Stats(a) => {
            let cfg = a.config.load()?;
            let records = read_records(&pick(&a.data, &cfg, "data")?)?;
            print_json(&dataset_stats(&records))
        }
    }
}
