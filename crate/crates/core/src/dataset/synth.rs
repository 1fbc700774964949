//! Procedural pair generators: the two-category colour-word task and a small
//! all-category set built from one shared pool of root images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Category, DatasetError, PairMeta, PairRecord};
use crate::render::{
    layout_mask, layout_with_fallback, render_marker, render_text_instruction, tokenize, BuiltinFont, Canvas,
    MarkerConfig, MarkerSpec, Rect, Rgba, TextRenderConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToyColor {
    pub name: &'static str,
    pub rgb: Rgba,
}

pub const TOY_PALETTE: [ToyColor; 6] = [
    ToyColor { name: "red", rgb: Rgba::rgb(220, 30, 30) },
    ToyColor { name: "green", rgb: Rgba::rgb(30, 180, 60) },
    ToyColor { name: "blue", rgb: Rgba::rgb(30, 60, 220) },
    ToyColor { name: "yellow", rgb: Rgba::rgb(240, 210, 30) },
    ToyColor { name: "cyan", rgb: Rgba::rgb(30, 200, 210) },
    ToyColor { name: "magenta", rgb: Rgba::rgb(210, 40, 190) },
];

pub fn color_name(c: Rgba) -> Option<&'static str> {
    TOY_PALETTE.iter().find(|t| t.rgb == c).map(|t| t.name)
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn text_config(side: u32) -> TextRenderConfig {
    TextRenderConfig {
        min_size: ((side / 32).max(1), (side / 16).max(2)),
        max_size: ((side / 8).max(3), (side / 3).max(4)),
        margin: (side / 32).max(1),
        ..TextRenderConfig::default()
    }
}

/// Writes `word` in `ink` inside a random box, without stroke.
fn draw_word<R: Rng>(canvas: &mut Canvas, word: &str, ink: Rgba, rng: &mut R) -> Result<(), DatasetError> {
    let side = canvas.width().min(canvas.height());
    let margin = (side / 16).max(1);
    let safe = side - 2 * margin;
    let bw = rng.random_range(safe * 2 / 3..=safe);
    let bh = rng.random_range(safe / 3..=safe / 2);
    let x = margin + rng.random_range(0..=safe - bw);
    let y = margin + rng.random_range(0..=safe - bh);
    let font = BuiltinFont::mono();
    let placed = layout_with_fallback(
        &tokenize(word).tokens,
        Rect::new(x as i32, y as i32, bw, bh),
        (canvas.width(), canvas.height()),
        margin,
        ((side / 8).max(2), (side / 3).max(3)),
        &font,
    )?;
    layout_mask(canvas.width(), canvas.height(), &placed, &font).paint(canvas, ink);
    Ok(())
}

/// `n` pairs alternating between class-word (light background) and
/// text-prompt (dark background) canvases; every target is a solid fill of
/// the named colour, and the word is inked in that colour.
pub fn toy_color_dataset(n: usize, side: u32, seed: u64) -> Result<Vec<PairRecord>, DatasetError> {
    (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let color = TOY_PALETTE[(i / 2) % TOY_PALETTE.len()];
            let (category, bg, text) = if i % 2 == 0 {
                (Category::C2I, Rgba::rgb(235, 235, 235), color.name.to_string())
            } else {
                (Category::T2I, Rgba::rgb(40, 40, 40), format!("{} image", color.name))
            };
            let mut input = Canvas::new(side, side, bg)?;
            draw_word(&mut input, &text, color.rgb, &mut rng)?;
            let target = Canvas::new(side, side, color.rgb)?;
            let meta = PairMeta {
                id: format!("toy-{i:05}"),
                category,
                root_id: format!("toy-{i:05}"),
                instruction: text,
                markers: vec![],
                boxes: vec![],
            };
            PairRecord::new(meta, input, target)
        })
        .collect()
}

struct Root {
    canvas: Canvas,
    bg: Rgba,
    object: Rect,
    color: Rgba,
}

fn muted<R: Rng>(rng: &mut R) -> Rgba {
    Rgba::rgb(rng.random_range(60..200), rng.random_range(60..200), rng.random_range(60..200))
}

fn pick<R: Rng>(rng: &mut R, avoid: Rgba) -> ToyColor {
    loop {
        let c = TOY_PALETTE[rng.random_range(0..TOY_PALETTE.len())];
        if c.rgb != avoid {
            return c;
        }
    }
}

fn random_rect<R: Rng>(rng: &mut R, side: u32) -> Rect {
    let w = rng.random_range(side / 4..=side / 2);
    let h = rng.random_range(side / 4..=side / 2);
    let x = rng.random_range(1..side - w);
    let y = rng.random_range(1..side - h);
    Rect::new(x as i32, y as i32, w, h)
}

fn make_root<R: Rng>(rng: &mut R, side: u32) -> Result<Root, DatasetError> {
    let bg = muted(rng);
    let object = random_rect(rng, side);
    let color = pick(rng, bg).rgb;
    let mut canvas = Canvas::new(side, side, bg)?;
    canvas.fill_rect(object, color);
    Ok(Root { canvas, bg, object, color })
}

fn center(r: Rect) -> (i64, i64) {
    (r.x as i64 + r.w as i64 / 2, r.y as i64 + r.h as i64 / 2)
}

fn moved(r: Rect, to: (i64, i64), side: u32) -> Rect {
    let x = (to.0 - r.w as i64 / 2).clamp(0, (side - r.w) as i64);
    let y = (to.1 - r.h as i64 / 2).clamp(0, (side - r.h) as i64);
    Rect::new(x as i32, y as i32, r.w, r.h)
}

/// `per_category` pairs for each of the eight categories. Editing pairs share
/// root images: the k-th pair of every editing category edits root k.
pub fn synthetic_dataset(per_category: usize, side: u32, seed: u64) -> Result<Vec<PairRecord>, DatasetError> {
    if side < 16 {
        return Err(DatasetError::Sampler("synthetic canvases need a side of at least 16".into()));
    }
    let tcfg = text_config(side);
    let mcfg = MarkerConfig { width: (1, (side / 32).max(1)), ..MarkerConfig::default() };
    let mut out = Vec::with_capacity(8 * per_category);
    for k in 0..per_category {
        let root = make_root(&mut rng_for(seed ^ 0x5eed, k), side)?;
        for (ci, category) in Category::ALL.into_iter().enumerate() {
            let mut rng = rng_for(seed, k * 8 + ci);
            let id = format!("{}-{k:04}", category.as_str().to_lowercase());
            let root_id = if category.is_editing() { format!("root-{k:04}") } else { id.clone() };
            let c = pick(&mut rng, root.color);
            let mut markers = Vec::new();
            let mut boxes = Vec::new();
            let mut instruction = String::new();
            let (input, target) = match category {
                Category::C2I => {
                    instruction = c.name.to_string();
                    let base = Canvas::new(side, side, Rgba::WHITE)?;
                    let (input, _) = render_text_instruction(&base, &instruction, &mut rng, &tcfg)?;
                    (input, Canvas::new(side, side, c.rgb)?)
                }
                Category::T2I => {
                    let bg = pick(&mut rng, c.rgb);
                    instruction = format!("a {} square on {}", c.name, bg.name);
                    let base = Canvas::new(side, side, Rgba::WHITE)?;
                    let (input, _) = render_text_instruction(&base, &instruction, &mut rng, &tcfg)?;
                    let mut target = Canvas::new(side, side, bg.rgb)?;
                    target.fill_rect(Rect::new(side as i32 / 4, side as i32 / 4, side / 2, side / 2), c.rgb);
                    (input, target)
                }
                Category::TIE => {
                    instruction = format!("make it {}", c.name);
                    let (input, _) = render_text_instruction(&root.canvas, &instruction, &mut rng, &tcfg)?;
                    let mut target = root.canvas.clone();
                    target.fill_rect(root.object, c.rgb);
                    boxes.push(root.object);
                    (input, target)
                }
                Category::TBE => {
                    let region = random_rect(&mut rng, side);
                    instruction = c.name.to_string();
                    let spec =
                        MarkerSpec::Bbox { rect: region, color: Some(Rgba::rgb(255, 0, 0)), label: Some(instruction.clone()), width: Some(1) };
                    let (input, _) = render_marker(&root.canvas, &spec, &mut rng, &mcfg)?;
                    let mut target = root.canvas.clone();
                    target.fill_rect(region, c.rgb);
                    markers.push(spec);
                    boxes.push(region);
                    (input, target)
                }
                Category::VME => {
                    let spec = MarkerSpec::Bbox { rect: root.object, color: Some(c.rgb), label: None, width: None };
                    let (input, _) = render_marker(&root.canvas, &spec, &mut rng, &mcfg)?;
                    let mut target = root.canvas.clone();
                    target.fill_rect(root.object, c.rgb);
                    markers.push(spec);
                    boxes.push(root.object);
                    (input, target)
                }
                Category::DE => {
                    let region = random_rect(&mut rng, side);
                    let (x0, y0) = (region.x as i64, region.y as i64);
                    let (x1, y1) = (region.right() - 1, region.bottom() - 1);
                    let stroke = vec![(x0, y0), (x1, (y0 + y1) / 2), (x0, y1), (x1, y1)];
                    let spec = MarkerSpec::Doodle { strokes: vec![stroke], color: Some(c.rgb), width: None };
                    let (input, _) = render_marker(&root.canvas, &spec, &mut rng, &mcfg)?;
                    let mut target = root.canvas.clone();
                    target.fill_rect(region, c.rgb);
                    markers.push(spec);
                    boxes.push(region);
                    (input, target)
                }
                Category::FU => {
                    let angle = rng.random_range(0..8) as f64 * std::f64::consts::FRAC_PI_4;
                    let magnitude = rng.random_range(0..=4) as f64 / 4.0;
                    let spec = MarkerSpec::Arrow { origin: center(root.object), angle, magnitude, color: Some(Rgba::WHITE), width: None };
                    let (input, rec) = render_marker(&root.canvas, &spec, &mut rng, &mcfg)?;
                    let tip = rec.arrow.expect("arrow geometry").tip;
                    let mut target = Canvas::new(side, side, root.bg)?;
                    let dest = moved(root.object, tip, side);
                    target.fill_rect(dest, root.color);
                    markers.push(spec);
                    boxes.push(dest);
                    (input, target)
                }
                Category::TU => {
                    let (cx, cy) = center(root.object);
                    let end = (rng.random_range(0..side as i64), rng.random_range(0..side as i64));
                    let mid = ((cx + end.0) / 2, cy.min(end.1) - (side as i64 / 8));
                    let spec = MarkerSpec::Trajectory { points: vec![(cx, cy), mid, end], thickness: None, color: Some(Rgba::WHITE) };
                    let (input, _) = render_marker(&root.canvas, &spec, &mut rng, &mcfg)?;
                    let mut target = Canvas::new(side, side, root.bg)?;
                    let dest = moved(root.object, end, side);
                    target.fill_rect(dest, root.color);
                    markers.push(spec);
                    boxes.push(dest);
                    (input, target)
                }
            };
            out.push(PairRecord::new(PairMeta { id, category, root_id, instruction, markers, boxes }, input, target)?);
        }
    }
    Ok(out)
}
