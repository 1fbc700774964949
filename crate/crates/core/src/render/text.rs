use rand::Rng;
use serde::{Deserialize, Serialize};

use super::font::{first_uncovered, validate_font, BuiltinFont, GlyphSource};
use super::layout::{layout_with_fallback, safe_margin_box, PlacedLayout};
use super::raster::{draw_glyph_run, Mask};
use super::style::{choose_style, composite_over, luminance, ColorFamily, TextStyle};
use super::tokenize::tokenize;
use super::{Canvas, Rect, RenderError};

/// Ranges the text renderer samples from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextRenderConfig {
    /// Inclusive range for the layout's lower size bound.
    pub min_size: (u32, u32),
    /// Inclusive range for the layout's upper size bound.
    pub max_size: (u32, u32),
    /// Pixels kept clear at every canvas edge.
    pub margin: u32,
    /// Smallest box side as a fraction of the safe area.
    pub min_box_frac: f64,
    pub families: Vec<ColorFamily>,
    pub area_threshold: f64,
}

impl Default for TextRenderConfig {
    fn default() -> Self {
        Self {
            min_size: (6, 10),
            max_size: (24, 48),
            margin: 4,
            min_box_frac: 0.35,
            families: ColorFamily::ALL.to_vec(),
            area_threshold: 0.05,
        }
    }
}

/// Where and how the text ended up on the canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextPlacement {
    pub font: String,
    pub size_range: (u32, u32),
    pub size: u32,
    pub requested: Rect,
    pub rect: Rect,
    pub fallback: bool,
    pub lines: Vec<String>,
    pub family: ColorFamily,
    pub luminance: f64,
    pub style: TextStyle,
    /// Bounding box of every pixel the layer touched, if any.
    pub ink: Option<Rect>,
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (u32, u32)) -> u32 {
    if lo >= hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn ink_box(mask: &Mask) -> Option<Rect> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    (x0 != u32::MAX).then(|| Rect::new(x0 as i32, y0 as i32, x1 - x0 + 1, y1 - y0 + 1))
}

/// Glyph coverage of a placed layout, with lines centred in the box.
pub fn layout_mask(width: u32, height: u32, placed: &PlacedLayout, glyphs: &dyn GlyphSource) -> Mask {
    let mut mask = Mask::new(width, height);
    let lay = &placed.layout;
    let size = lay.size;
    let y_pad = (placed.rect.h as u64 * 1000 - lay.height_milli()) / 2 / 1000;
    let lead = (lay.line_height_milli / 1000).saturating_sub(size as u64) / 2;
    for line in &lay.lines {
        let x = placed.rect.x as i64 + line.origin.0 as i64;
        let y = placed.rect.y as i64 + line.origin.1 as i64 + (y_pad + lead) as i64;
        draw_glyph_run(&mut mask, glyphs, &line.text, x, y, size);
    }
    mask
}

/// Renders `text` with the built-in faces.
pub fn render_text_instruction<R: Rng + ?Sized>(
    canvas: &Canvas,
    text: &str,
    rng: &mut R,
    config: &TextRenderConfig,
) -> Result<(Canvas, TextPlacement), RenderError> {
    let fonts = BuiltinFont::defaults();
    let refs: Vec<&dyn GlyphSource> = fonts.iter().map(|f| f as &dyn GlyphSource).collect();
    render_text_with_fonts(canvas, text, rng, config, &refs)
}

/// Samples a valid font, size range, colour family and box, lays the text
/// out (falling back to the whole safe area), styles it against the
/// background and composites the glyph layer.
pub fn render_text_with_fonts<R: Rng + ?Sized>(
    canvas: &Canvas,
    text: &str,
    rng: &mut R,
    config: &TextRenderConfig,
    fonts: &[&dyn GlyphSource],
) -> Result<(Canvas, TextPlacement), RenderError> {
    if config.families.is_empty() || fonts.is_empty() {
        return Err(RenderError::InvalidArgument("no fonts or colour families configured".into()));
    }
    let (cw, ch) = (canvas.width(), canvas.height());
    let valid: Vec<&dyn GlyphSource> = fonts
        .iter()
        .copied()
        .filter(|f| validate_font(*f, text, config.min_size.0.max(1), config.area_threshold))
        .collect();
    if valid.is_empty() {
        let missing = first_uncovered(fonts[0], text).unwrap_or('\u{fffd}');
        return Err(RenderError::NoValidFont(missing));
    }
    let font = valid[rng.random_range(0..valid.len())];
    let s_min = sample_range(rng, config.min_size).max(1);
    let s_max = sample_range(rng, (config.max_size.0.max(s_min), config.max_size.1.max(s_min)));
    let family = config.families[rng.random_range(0..config.families.len())];

    let safe = safe_margin_box(cw, ch, config.margin)?;
    let frac = config.min_box_frac.clamp(0.0, 1.0);
    let bw = sample_range(rng, (((safe.w as f64 * frac) as u32).max(1), safe.w));
    let bh = sample_range(rng, (((safe.h as f64 * frac) as u32).max(1), safe.h));
    let bx = safe.x + sample_range(rng, (0, safe.w - bw)) as i32;
    let by = safe.y + sample_range(rng, (0, safe.h - bh)) as i32;
    let requested = Rect::new(bx, by, bw, bh);

    let tokens = tokenize(text).tokens;
    let placed = layout_with_fallback(&tokens, requested, (cw, ch), config.margin, (s_min, s_max), font)?;
    let l = luminance(canvas, placed.rect)?;
    let style = choose_style(l, family, placed.layout.line_height_milli);

    let fill = layout_mask(cw, ch, &placed, font);
    let outline = fill.dilate(style.stroke_width);
    let mut layer = Canvas::transparent(cw, ch)?;
    outline.paint(&mut layer, style.stroke);
    fill.paint(&mut layer, style.fill);
    let out = composite_over(canvas, &layer)?;

    let placement = TextPlacement {
        font: font.name().to_string(),
        size_range: (s_min, s_max),
        size: placed.layout.size,
        requested,
        rect: placed.rect,
        fallback: placed.fallback,
        lines: placed.layout.lines.iter().map(|l| l.text.clone()).collect(),
        family,
        luminance: l,
        style,
        ink: ink_box(&outline),
    };
    Ok((out, placement))
}
