//! Greedy word wrap and the binary search for the largest font size that
//! fits a box.

use serde::{Deserialize, Serialize};

use super::font::GlyphSource;
use super::tokenize::Token;
use super::{Rect, RenderError};

/// One wrapped line. Widths are in thousandths of a pixel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutLine {
    /// Indices into the token slice.
    pub tokens: Vec<usize>,
    pub text: String,
    pub width_milli: u64,
    /// Offset of the line's top-left corner from the box origin.
    pub origin: (i32, i32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub size: u32,
    pub lines: Vec<LayoutLine>,
    pub box_width: u32,
    pub box_height: u32,
    pub line_height_milli: u64,
}

impl LayoutResult {
    pub fn height_milli(&self) -> u64 {
        self.lines.len() as u64 * self.line_height_milli
    }

    pub fn max_width_milli(&self) -> u64 {
        self.lines.iter().map(|l| l.width_milli).max().unwrap_or(0)
    }
}

/// Outcome of [`layout_bbox`]: the best layout, if any, and how many wrap
/// attempts the search made.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutSearch {
    pub best: Option<LayoutResult>,
    pub wrap_evaluations: usize,
}

fn run_width(glyphs: &dyn GlyphSource, s: &str, size: u32) -> Option<u64> {
    let mut units = 0u64;
    for c in s.chars() {
        let adv = if c == '\n' { 0 } else { glyphs.advance_units(if c.is_whitespace() { ' ' } else { c })? };
        units += adv as u64;
    }
    Some(units * size as u64)
}

/// Width of one token in thousandths of a pixel.
pub fn token_width(glyphs: &dyn GlyphSource, token: &Token, size: u32) -> Option<u64> {
    run_width(glyphs, &token.text, size)
}

/// Greedy wrap within `width` pixels. `None` when some token alone is wider
/// than the box or uses an uncovered code point. Whitespace at a line break
/// is dropped and a newline in a separator forces a break.
pub fn try_word_wrap(tokens: &[Token], width: u32, size: u32, glyphs: &dyn GlyphSource) -> Option<Vec<LayoutLine>> {
    let wmax = width as u64 * 1000;
    let mut lines: Vec<LayoutLine> = Vec::new();
    let mut cur: Option<LayoutLine> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let tw = token_width(glyphs, tok, size)?;
        if tw > wmax {
            return None;
        }
        let forced = tok.space_before.contains('\n');
        let sw = run_width(glyphs, &tok.space_before, size)?;
        match cur.as_mut() {
            Some(line) if !forced && line.width_milli + sw + tw <= wmax => {
                line.tokens.push(i);
                line.text.push_str(&tok.space_before.replace('\n', ""));
                line.text.push_str(&tok.text);
                line.width_milli += sw + tw;
            }
            _ => {
                if let Some(done) = cur.take() {
                    lines.push(done);
                }
                cur = Some(LayoutLine { tokens: vec![i], text: tok.text.clone(), width_milli: tw, origin: (0, 0) });
            }
        }
    }
    lines.extend(cur);
    Some(lines)
}

fn finish(mut lines: Vec<LayoutLine>, size: u32, width: u32, height: u32, glyphs: &dyn GlyphSource) -> LayoutResult {
    let lh = glyphs.line_height_units() as u64 * size as u64;
    for (k, line) in lines.iter_mut().enumerate() {
        let x = (width as u64 * 1000 - line.width_milli) / 2 / 1000;
        let y = k as u64 * lh / 1000;
        line.origin = (x as i32, y as i32);
    }
    LayoutResult { size, lines, box_width: width, box_height: height, line_height_milli: lh }
}

/// Wraps at a fixed size and checks the height bound.
pub fn fits_at(tokens: &[Token], width: u32, height: u32, size: u32, glyphs: &dyn GlyphSource) -> Option<LayoutResult> {
    let lines = try_word_wrap(tokens, width, size, glyphs)?;
    let total = lines.len() as u64 * glyphs.line_height_units() as u64 * size as u64;
    (total <= height as u64 * 1000).then(|| finish(lines, size, width, height, glyphs))
}

/// Binary search over integer sizes in `[min_size, max_size]` for the largest
/// size whose wrap fits `width` x `height`.
pub fn layout_bbox(
    tokens: &[Token],
    width: u32,
    height: u32,
    min_size: u32,
    max_size: u32,
    glyphs: &dyn GlyphSource,
) -> Result<LayoutSearch, RenderError> {
    if width == 0 || height == 0 {
        return Err(RenderError::InvalidArgument(format!("layout box {width}x{height} is empty")));
    }
    if min_size == 0 || min_size > max_size {
        return Err(RenderError::InvalidArgument(format!("size range [{min_size}, {max_size}]")));
    }
    let (mut low, mut high) = (min_size as i64, max_size as i64);
    let mut best = None;
    let mut evaluations = 0;
    while low <= high {
        let mid = (low + high) / 2;
        evaluations += 1;
        match try_word_wrap(tokens, width, mid as u32, glyphs) {
            Some(lines) => {
                let total = lines.len() as u64 * glyphs.line_height_units() as u64 * mid as u64;
                if total <= height as u64 * 1000 {
                    best = Some(finish(lines, mid as u32, width, height, glyphs));
                    low = mid + 1;
                } else {
                    high = mid - 1;
                }
            }
            None => high = mid - 1,
        }
    }
    Ok(LayoutSearch { best, wrap_evaluations: evaluations })
}

/// A layout anchored on the canvas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedLayout {
    pub rect: Rect,
    pub layout: LayoutResult,
    pub fallback: bool,
}

/// The largest box keeping `margin` pixels clear on every side.
pub fn safe_margin_box(canvas_width: u32, canvas_height: u32, margin: u32) -> Result<Rect, RenderError> {
    if 2 * margin >= canvas_width || 2 * margin >= canvas_height {
        return Err(RenderError::InvalidArgument(format!(
            "margin {margin} leaves no room on a {canvas_width}x{canvas_height} canvas"
        )));
    }
    Ok(Rect::new(margin as i32, margin as i32, canvas_width - 2 * margin, canvas_height - 2 * margin))
}

/// Lays out in `requested`; if nothing fits, retries in the full safe-margin
/// box and flags the result as a fallback.
pub fn layout_with_fallback(
    tokens: &[Token],
    requested: Rect,
    canvas_size: (u32, u32),
    margin: u32,
    sizes: (u32, u32),
    glyphs: &dyn GlyphSource,
) -> Result<PlacedLayout, RenderError> {
    let full = safe_margin_box(canvas_size.0, canvas_size.1, margin)?;
    if !requested.within(canvas_size.0, canvas_size.1) {
        return Err(RenderError::RegionOutside(requested));
    }
    let first = layout_bbox(tokens, requested.w, requested.h, sizes.0, sizes.1, glyphs)?;
    if let Some(layout) = first.best {
        return Ok(PlacedLayout { rect: requested, layout, fallback: false });
    }
    let second = layout_bbox(tokens, full.w, full.h, sizes.0, sizes.1, glyphs)?;
    if let Some(layout) = second.best {
        return Ok(PlacedLayout { rect: full, layout, fallback: true });
    }
    let wmax = full.w as u64 * 1000;
    let culprit = tokens.iter().find(|t| token_width(glyphs, t, sizes.0).is_none_or(|w| w > wmax));
    Err(RenderError::Unlayoutable {
        token: culprit.map(|t| t.text.clone()),
        reason: if culprit.is_some() {
            "token wider than the canvas at the minimum size".into()
        } else {
            "text taller than the canvas at the minimum size".into()
        },
    })
}
