use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Deserialize;
use vispflow::eval::{
    aggregate, dinov3_dir_sim, dir_clip, parse_score_lines, AggregateMode, AggregateOptions, BenchReport, EvalError,
};
use vispflow::qc::{Embedder, GridEmbedder, PatchEmbedder, TrigramEmbedder};

use super::read_canvas;
use crate::config::{keys_help, EVAL_KEYS};
use crate::error::CliError;
use crate::ConfigArgs;

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Directional similarity for every `<id>.input.ppm` / `<id>.gen.ppm` /
    /// `<id>.gt.ppm` triple in a directory; one JSON line per id.
    #[command(after_help = keys_help(&[EVAL_KEYS]))]
    Metrics(MetricsArgs),
    /// Pass rates per category from a JSON-lines score file.
    #[command(after_help = keys_help(&[EVAL_KEYS]))]
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Directory of image triples; `<id>.captions.json` with `{src, tgt}`
    /// adds the caption-direction score.
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSON lines of `{id, category, fidelity, consistency, realism, spatial}`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Pool passes over all samples instead of averaging category rates.
    #[arg(long)]
    pub weighted: bool,
    /// Leave categories without samples out of the total.
    #[arg(long)]
    pub allow_absent: bool,
    #[arg(long, default_value = "model")]
    pub label: String,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Deserialize)]
struct Captions {
    src: String,
    tgt: String,
}

fn triples(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut ids = Vec::new();
    for e in entries {
        let name = e?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(".input.ppm") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

fn metrics_for(dir: &Path, id: &str) -> Result<BTreeMap<&'static str, f64>, CliError> {
    let input = read_canvas(&dir.join(format!("{id}.input.ppm")))?;
    let generated = read_canvas(&dir.join(format!("{id}.gen.ppm")))?;
    let mut out = BTreeMap::new();
    let gt = dir.join(format!("{id}.gt.ppm"));
    if gt.exists() {
        let truth = read_canvas(&gt)?;
        out.insert("dinov3_dir_sim", dinov3_dir_sim(&input, &generated, &truth, &PatchEmbedder::default())?);
    }
    let cap = dir.join(format!("{id}.captions.json"));
    if cap.exists() {
        let c: Captions = serde_json::from_str(&fs::read_to_string(&cap)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", cap.display())))?;
        let image = GridEmbedder::default();
        let text = TrigramEmbedder { dim: image.dim() };
        let score = dir_clip(&c.src, &c.tgt, &input, &generated, &text, &image)?;
        out.insert("dir_clip", score);
    }
    Ok(out)
}

pub fn run(cmd: &EvalCmd) -> Result<(), CliError> {
    match cmd {
        EvalCmd::Metrics(a) => {
            a.config.load()?;
            let ids = triples(&a.pairs)?;
            if ids.is_empty() {
                return Err(EvalError::NoSamples.into());
            }
            for id in ids {
                let line = match metrics_for(&a.pairs, &id) {
                    Ok(m) => serde_json::json!({
                        "id": id,
                        "dinov3_dir_sim": m.get("dinov3_dir_sim"),
                        "dir_clip": m.get("dir_clip"),
                    }),
                    Err(e) => serde_json::json!({
                        "id": id,
                        "dinov3_dir_sim": null,
                        "dir_clip": null,
                        "error": e.message(),
                    }),
                };
                println!("{line}");
            }
            Ok(())
        }
        EvalCmd::Report(a) => {
            let cfg = a.config.load()?;
            let text = fs::read_to_string(&a.scores)
                .map_err(|e| CliError::Data(format!("{}: {e}", a.scores.display())))?;
            let records = parse_score_lines(&text)?;
            let samples = records
                .iter()
                .map(|r| Ok((r.category, r.card()?.verdict)))
                .collect::<Result<Vec<_>, EvalError>>()?;
            let mode = if a.weighted { AggregateMode::SampleWeighted } else { AggregateMode::CategoryMean };
            let report = aggregate(&a.label, &samples, AggregateOptions { mode, allow_absent: a.allow_absent })?;
            let out = a.out.clone().or_else(|| cfg.path("out").map(|d| d.join("report.json")));
            if let Some(p) = &out {
                if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                fs::write(p, report.to_json() + "\n")?;
            }
            match a.format {
                Format::Text => print!("{}", BenchReport::table(std::slice::from_ref(&report))),
                Format::Json => println!("{}", report.to_json()),
            }
            Ok(())
        }
    }
}
