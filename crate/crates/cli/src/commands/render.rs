use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vispflow::render::{
    render_marker, render_text_instruction, Canvas, MarkerConfig, MarkerRecord, MarkerSpec, Rgba, TextPlacement,
    TextRenderConfig,
};

use super::{print_json, read_canvas, write_canvas};
use crate::error::CliError;
use crate::ConfigArgs;

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// JSON canvas specification.
    #[arg(long)]
    pub spec: PathBuf,

    /// Output PPM path.
    #[arg(long)]
    pub out: PathBuf,

    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,

    #[command(flatten)]
    pub config: ConfigArgs,
}

fn default_side() -> u32 {
    256
}

fn default_background() -> [u8; 3] {
    [255, 255, 255]
}

/// Text is drawn first, then markers in order, all from one seeded stream.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    #[serde(default = "default_side")]
    pub width: u32,
    #[serde(default = "default_side")]
    pub height: u32,
    #[serde(default = "default_background")]
    pub background: [u8; 3],
    /// Existing PPM to draw on instead of a flat background.
    #[serde(default)]
    pub base: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub markers: Vec<MarkerSpec>,
    #[serde(default)]
    pub text_config: Option<TextRenderConfig>,
    #[serde(default)]
    pub marker_config: Option<MarkerConfig>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RenderRecord {
    pub seed: u64,
    pub text: Option<TextPlacement>,
    pub markers: Vec<MarkerRecord>,
}

pub fn render_spec(spec: &RenderSpec, seed: u64) -> Result<(Canvas, RenderRecord), CliError> {
    let mut canvas = match &spec.base {
        Some(p) => read_canvas(p)?,
        None => {
            let [r, g, b] = spec.background;
            Canvas::new(spec.width, spec.height, Rgba::rgb(r, g, b))?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = None;
    if let Some(t) = spec.text.as_deref().filter(|t| !t.trim().is_empty()) {
        let cfg = spec.text_config.clone().unwrap_or_default();
        let (c, placement) = render_text_instruction(&canvas, t, &mut rng, &cfg)?;
        canvas = c;
        text = Some(placement);
    }
    let mcfg = spec.marker_config.clone().unwrap_or_default();
    let mut markers = Vec::with_capacity(spec.markers.len());
    for m in &spec.markers {
        let (c, rec) = render_marker(&canvas, m, &mut rng, &mcfg)?;
        canvas = c;
        markers.push(rec);
    }
    Ok((canvas, RenderRecord { seed, text, markers }))
}

pub fn run(args: &RenderArgs) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let text = std::fs::read_to_string(&args.spec).map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;
    let spec: RenderSpec = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("render spec: {e}")))?;
    let seed = match (args.seed, spec.seed) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => cfg.u64("seed")?,
    };
    let (canvas, record) = render_spec(&spec, seed)?;
    write_canvas(&args.out, &canvas)?;
    print_json(&record)
}
