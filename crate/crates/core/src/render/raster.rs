//! Integer rasterisation: thick segments, triangles and bitmap glyph runs.
//! Everything is clipped to the canvas; callers learn whether clipping
//! happened from the return value.

use super::font::GlyphSource;
use super::{Canvas, Rgba};

/// Boolean coverage grid the size of a canvas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    /// Sets a bit if on the grid; returns whether it was.
    pub fn mark(&mut self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.bits[y as usize * self.width as usize + x as usize] = true;
        true
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Chebyshev dilation by `r` pixels, separable row then column pass.
    pub fn dilate(&self, r: u32) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let (w, h, r) = (self.width as usize, self.height as usize, r as usize);
        let mut rows = vec![false; w * h];
        for y in 0..h {
            let line = &self.bits[y * w..(y + 1) * w];
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                rows[y * w + x] = line[lo..=hi].iter().any(|&b| b);
            }
        }
        let mut out = vec![false; w * h];
        for x in 0..w {
            for y in 0..h {
                let lo = y.saturating_sub(r);
                let hi = (y + r).min(h - 1);
                out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
            }
        }
        Mask { width: self.width, height: self.height, bits: out }
    }

    pub fn paint(&self, canvas: &mut Canvas, color: Rgba) {
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    canvas.set(x, y, color);
                }
            }
        }
    }
}

fn stamp(canvas: &mut Canvas, x: i64, y: i64, width: u32, color: Rgba) -> bool {
    let lo = -((width as i64 - 1) / 2);
    let hi = lo + width as i64;
    let mut clipped = false;
    for dy in lo..hi {
        for dx in lo..hi {
            clipped |= !canvas.put(x + dx, y + dy, color);
        }
    }
    clipped
}

/// Bresenham segment with a square brush of side `width`. Returns true when
/// any brush pixel fell off the canvas.
pub fn draw_segment(canvas: &mut Canvas, a: (i64, i64), b: (i64, i64), width: u32, color: Rgba) -> bool {
    let width = width.max(1);
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut clipped = false;
    loop {
        clipped |= stamp(canvas, x, y, width, color);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    clipped
}

pub fn draw_polyline(canvas: &mut Canvas, points: &[(i64, i64)], width: u32, color: Rgba) -> bool {
    match points {
        [] => false,
        [p] => draw_segment(canvas, *p, *p, width, color),
        _ => points.windows(2).fold(false, |c, w| draw_segment(canvas, w[0], w[1], width, color) | c),
    }
}

fn edge(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> i64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Fills the closed triangle using edge functions over its bounding box.
pub fn fill_triangle(canvas: &mut Canvas, v: [(i64, i64); 3], color: Rgba) -> bool {
    let area = edge(v[0], v[1], v[2]);
    if area == 0 {
        return draw_polyline(canvas, &[v[0], v[1], v[2]], 1, color);
    }
    let x0 = v.iter().map(|p| p.0).min().unwrap();
    let x1 = v.iter().map(|p| p.0).max().unwrap();
    let y0 = v.iter().map(|p| p.1).min().unwrap();
    let y1 = v.iter().map(|p| p.1).max().unwrap();
    let mut clipped = false;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = (x, y);
            let (e0, e1, e2) = (edge(v[1], v[2], p), edge(v[2], v[0], p), edge(v[0], v[1], p));
            let inside = if area > 0 { e0 >= 0 && e1 >= 0 && e2 >= 0 } else { e0 <= 0 && e1 <= 0 && e2 <= 0 };
            if inside {
                clipped |= !canvas.put(x, y, color);
            }
        }
    }
    clipped
}

/// Marks the glyph pixels of one text line whose top-left corner is
/// `(x, y)`. Each glyph's 8x8 bitmap is scaled nearest-neighbour into a cell
/// of its advance width by `size` pixels. Returns true when anything was
/// clipped.
pub fn draw_glyph_run(mask: &mut Mask, glyphs: &dyn GlyphSource, text: &str, x: i64, y: i64, size: u32) -> bool {
    let mut pen_milli = 0u64;
    let mut clipped = false;
    for c in text.chars() {
        let adv = glyphs.advance_units(if c.is_whitespace() { ' ' } else { c }).unwrap_or(0) as u64 * size as u64;
        let cx0 = x + (pen_milli / 1000) as i64;
        pen_milli += adv;
        let cx1 = x + (pen_milli / 1000) as i64;
        let cw = (cx1 - cx0).max(1) as u64;
        let Some(bm) = (!c.is_whitespace()).then(|| glyphs.bitmap(c)).flatten() else {
            continue;
        };
        for py in 0..size as u64 {
            let row = bm[(py * 8 / size as u64) as usize];
            if row == 0 {
                continue;
            }
            for px in 0..cw {
                if row >> (px * 8 / cw) & 1 == 1 {
                    clipped |= !mask.mark(cx0 + px as i64, y + py as i64);
                }
            }
        }
    }
    clipped
}
