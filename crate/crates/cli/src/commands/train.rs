use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vispflow::exec::Exec;
use vispflow::flowinone::{train, FlowInOne, ModelConfig, SampleOptions};
use vispflow::numcore::read_checkpoint;

use super::{print_json, read_canvas, read_records, write_canvas, write_run_info};
use crate::error::CliError;
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training shard (overrides the `data` key).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (overrides the `out` key).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Weights file; `model.json` must sit next to it.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Instruction canvas (PPM).
    #[arg(long)]
    pub input: PathBuf,
    /// Output image (PPM).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub cfg: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat the input as an editing instruction (enables the source branch).
    #[arg(long)]
    pub edit: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run_train(a: &TrainArgs, exec: Exec) -> Result<(), CliError> {
    let mut cfg = a.config.load()?;
    if let Some(p) = &a.data {
        cfg.set("data", &p.to_string_lossy())?;
    }
    if let Some(p) = &a.out {
        cfg.set("out", &p.to_string_lossy())?;
    }
    let data = cfg.require_path("data")?;
    let out = cfg.require_path("out")?;
    let model_cfg = cfg.model_config()?;
    let train_cfg = cfg.train_config()?;
    let records = read_records(&data)?;
    let model = FlowInOne::new(model_cfg)?;
    write_run_info(&out, "train", &cfg)?;
    let outcome = train(model, &records, &train_cfg, Some(&out), exec)?;
    let first = outcome.losses.first().map(|r| r.total);
    let last = outcome.losses.last().map(|r| r.total);
    print_json(&serde_json::json!({
        "steps": outcome.losses.len(),
        "first_total": first,
        "last_total": last,
        "weights": out.join("model.vpw"),
    }))
}

fn load_model(ckpt: &std::path::Path) -> Result<FlowInOne, CliError> {
    let dir = ckpt.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    let json_path = dir.join("model.json");
    let json = fs::read_to_string(&json_path).map_err(|e| CliError::Data(format!("{}: {e}", json_path.display())))?;
    let config: ModelConfig =
        serde_json::from_str(&json).map_err(|e| CliError::Data(format!("{}: {e}", json_path.display())))?;
    let file = fs::File::open(ckpt).map_err(|e| CliError::Data(format!("{}: {e}", ckpt.display())))?;
    let params = read_checkpoint(BufReader::new(file))?;
    Ok(FlowInOne::with_params(config, params)?)
}

pub fn run_sample(a: &SampleArgs) -> Result<(), CliError> {
    let mut cfg = a.config.load()?;
    let model = load_model(&a.ckpt)?;
    let mut opts = SampleOptions::from_config(&model.config);
    if cfg.is_set("sample_steps") {
        opts.steps = cfg.usize("sample_steps")?;
    }
    if cfg.is_set("cfg_scale") {
        opts.cfg_scale = cfg.f64("cfg_scale")?;
    }
    if let Some(s) = a.steps {
        opts.steps = s;
        cfg.set("sample_steps", &s.to_string())?;
    }
    if let Some(c) = a.cfg {
        opts.cfg_scale = c;
        cfg.set("cfg_scale", &c.to_string())?;
    }
    if let Some(s) = a.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if opts.steps == 0 {
        return Err(CliError::Usage("sampling needs at least one step".into()));
    }
    let input = read_canvas(&a.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.u64("seed")?);
    let image = model.sample(&input, a.edit, &opts, &mut rng)?;
    write_canvas(&a.out, &image)?;
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    write_run_info(dir, "sample", &cfg)?;
    print_json(&serde_json::json!({
        "out": a.out,
        "steps": opts.steps,
        "cfg_scale": opts.cfg_scale,
        "edit": a.edit,
    }))
}
