use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use vispflow::dataset::write_shard;
use vispflow::exec::Exec;
use vispflow::qc::{cer, diversity_filter_canvases, score_pair, GridEmbedder, JudgedPair};
use vispflow::render::Canvas;

use super::{print_json, read_records, write_run_info};
use crate::config::{keys_help, QC_KEYS};
use crate::error::CliError;
use crate::ConfigArgs;

#[derive(Subcommand, Debug)]
pub enum QcCmd {
    /// Character error rate of a transcription against its source text.
    #[command(after_help = keys_help(&[QC_KEYS]))]
    Cer(CerArgs),
    /// Drop near-duplicate targets; writes `<out>/data.vpk` and `<out>/dedup.json`.
    #[command(after_help = keys_help(&[QC_KEYS]))]
    Dedup(DedupArgs),
    /// Score judged candidates from a JSON-lines file of `{id, p_yes, p_no}`.
    #[command(after_help = keys_help(&[QC_KEYS]))]
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
pub struct CerArgs {
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub hyp: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub judged: PathBuf,
    /// Write scored lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(cmd: &QcCmd, exec: Exec) -> Result<(), CliError> {
    match cmd {
        QcCmd::Cer(a) => {
            let cfg = a.config.load()?;
            let rate = cer(&a.source, &a.hyp)?;
            print_json(&serde_json::json!({ "cer": rate, "pass": rate <= cfg.f64("tau_ocr")? }))
        }
        QcCmd::Dedup(a) => {
            let mut cfg = a.config.load()?;
            let data = a.data.clone().map_or_else(|| cfg.require_path("data"), Ok)?;
            let out = a.out.clone().map_or_else(|| cfg.require_path("out"), Ok)?;
            cfg.set("data", &data.to_string_lossy())?;
            cfg.set("out", &out.to_string_lossy())?;
            let records = read_records(&data)?;
            let targets: Vec<Canvas> = records.iter().map(|r| r.target.clone()).collect();
            let kept = diversity_filter_canvases(&targets, &GridEmbedder::default(), cfg.f64("tau_div")?, exec)?;
            let kept_records: Vec<_> = kept.iter().map(|&i| records[i].clone()).collect();
            let dropped: Vec<&str> = {
                let keep: std::collections::BTreeSet<usize> = kept.iter().copied().collect();
                (0..records.len()).filter(|i| !keep.contains(i)).map(|i| records[i].meta.id.as_str()).collect()
            };
            fs::create_dir_all(&out)?;
            write_shard(&kept_records, out.join("data.vpk"))?;
            let summary = serde_json::json!({
                "input": records.len(),
                "kept": kept_records.len(),
                "dropped_ids": dropped,
            });
            fs::write(out.join("dedup.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            write_run_info(&out, "qc-dedup", &cfg)?;
            print_json(&serde_json::json!({ "input": records.len(), "kept": kept_records.len() }))
        }
        QcCmd::Score(a) => {
            let cfg = a.config.load()?;
            let threshold = cfg.f64("score_threshold")?;
            let text = fs::read_to_string(&a.judged)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.judged.display())))?;
            let mut lines = Vec::new();
            let mut retained = 0usize;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let j: JudgedPair = serde_json::from_str(line)
                    .map_err(|e| CliError::Data(format!("{}:{}: {e}", a.judged.display(), n + 1)))?;
                let s = score_pair(&j, threshold)?;
                retained += usize::from(s.retained);
                lines.push(serde_json::to_string(&s)?);
            }
            match &a.out {
                Some(p) => {
                    let mut f = fs::File::create(p)?;
                    for l in &lines {
                        writeln!(f, "{l}")?;
                    }
                    print_json(&serde_json::json!({ "scored": lines.len(), "retained": retained }))
                }
                None => {
                    for l in &lines {
                        println!("{l}");
                    }
                    Ok(())
                }
            }
        }
    }
}
