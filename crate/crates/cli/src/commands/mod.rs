pub mod dataset;
pub mod eval;
pub mod qc;
pub mod render;
pub mod train;

use std::fs;
use std::path::Path;

use serde::Serialize;
use vispflow::dataset::{read_shard, PairRecord};
use vispflow::render::Canvas;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::VERSION;

/// Writes `<command>.cfg` (reloadable with `--config`) and
/// `run-<command>.json` (version and seed) into `dir`.
pub fn write_run_info(dir: &Path, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{command}.cfg")), cfg.snapshot())?;
    let info = serde_json::json!({
        "command": command,
        "version": VERSION,
        "seed": cfg.raw("seed"),
    });
    fs::write(dir.join(format!("run-{command}.json")), serde_json::to_string_pretty(&info)? + "\n")?;
    Ok(())
}

pub fn read_canvas(path: &Path) -> Result<Canvas, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Canvas::from_ppm(&bytes)?)
}

pub fn write_canvas(path: &Path, canvas: &Canvas) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, canvas.to_ppm())?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<PairRecord>, CliError> {
    let reader = read_shard(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(reader.collect::<Result<_, _>>()?)
}

pub fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}
