use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::RenderError;

/// Straight-alpha RGBA colour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgba(pub [u8; 4]);

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba([0, 0, 0, 0]);
    pub const WHITE: Rgba = Rgba([255, 255, 255, 255]);
    pub const BLACK: Rgba = Rgba([0, 0, 0, 255]);

    pub const fn rgb(r: u8, g: u8, b: u8) -> Self {
        Rgba([r, g, b, 255])
    }

    pub fn with_alpha(self, a: u8) -> Self {
        let [r, g, b, _] = self.0;
        Rgba([r, g, b, a])
    }
}

/// Axis-aligned pixel rectangle, `x..x + w` by `y..y + h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: i32, y: i32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> i64 {
        self.x as i64 + self.w as i64
    }

    pub fn bottom(&self) -> i64 {
        self.y as i64 + self.h as i64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x >= 0 && self.y >= 0 && self.right() <= width as i64 && self.bottom() <= height as i64
    }
}

/// RGBA8 raster, row-major. Length is always `4 * width * height`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Canvas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Canvas({}x{})", self.width, self.height)
    }
}

impl Canvas {
    pub fn new(width: u32, height: u32, fill: Rgba) -> Result<Self, RenderError> {
        if width == 0 || height == 0 {
            return Err(RenderError::EmptyCanvas);
        }
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(4 * n);
        for _ in 0..n {
            pixels.extend_from_slice(&fill.0);
        }
        Ok(Self { width, height, pixels })
    }

    pub fn transparent(width: u32, height: u32) -> Result<Self, RenderError> {
        Self::new(width, height, Rgba::TRANSPARENT)
    }

    pub fn from_rgba(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RenderError> {
        if width == 0 || height == 0 {
            return Err(RenderError::EmptyCanvas);
        }
        if pixels.len() != 4 * width as usize * height as usize {
            return Err(RenderError::BufferSize { expected: 4 * width as usize * height as usize, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> Rgba {
        let i = 4 * (y as usize * self.width as usize + x as usize);
        Rgba(self.pixels[i..i + 4].try_into().expect("4 bytes"))
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgba) {
        let i = 4 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 4].copy_from_slice(&c.0);
    }

    /// Writes a pixel if it lies on the canvas; returns whether it did.
    pub fn put(&mut self, x: i64, y: i64, c: Rgba) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.set(x as u32, y as u32, c);
        true
    }

    pub fn fill_rect(&mut self, r: Rect, c: Rgba) {
        let x0 = r.x.max(0) as i64;
        let y0 = r.y.max(0) as i64;
        let x1 = r.right().min(self.width as i64);
        let y1 = r.bottom().min(self.height as i64);
        for y in y0..y1 {
            for x in x0..x1 {
                self.set(x as u32, y as u32, c);
            }
        }
    }

    /// Mean R, G, B over a rectangle that must lie inside the canvas.
    pub fn mean_rgb(&self, r: Rect) -> Result<[f64; 3], RenderError> {
        if r.is_empty() {
            return Err(RenderError::EmptyRegion);
        }
        if !r.within(self.width, self.height) {
            return Err(RenderError::RegionOutside(r));
        }
        let mut sums = [0u64; 3];
        for y in r.y as u32..r.bottom() as u32 {
            for x in r.x as u32..r.right() as u32 {
                let p = self.get(x, y).0;
                for c in 0..3 {
                    sums[c] += p[c] as u64;
                }
            }
        }
        let n = r.w as f64 * r.h as f64;
        Ok(sums.map(|s| s as f64 / n))
    }

    /// RGB bytes, alpha dropped.
    pub fn rgb_bytes(&self) -> Vec<u8> {
        self.pixels.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()
    }

    pub fn from_rgb(width: u32, height: u32, rgb: &[u8]) -> Result<Self, RenderError> {
        if rgb.len() != 3 * width as usize * height as usize {
            return Err(RenderError::BufferSize { expected: 3 * width as usize * height as usize, got: rgb.len() });
        }
        let pixels = rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect();
        Self::from_rgba(width, height, pixels)
    }

    /// Binary PPM (P6, maxval 255). Alpha is dropped.
    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.rgb_bytes())
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(15 + 3 * self.pixels.len() / 4);
        self.write_ppm(&mut out).expect("in-memory write");
        out
    }

    /// Parses a binary PPM; alpha is set to 255.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self, RenderError> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(RenderError::Ppm("truncated header".into()));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| RenderError::Ppm("non-ASCII header".into()))?);
        }
        if fields[0] != "P6" {
            return Err(RenderError::Ppm(format!("unsupported magic {}", fields[0])));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| RenderError::Ppm(format!("bad header number `{s}`")));
        let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(RenderError::Ppm(format!("maxval {maxval} unsupported")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = 3 * w as usize * h as usize;
        if bytes.len() < pos + need {
            return Err(RenderError::Ppm(format!("raster truncated: need {need} bytes")));
        }
        Self::from_rgb(w, h, &bytes[pos..pos + need])
    }

    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self, RenderError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| RenderError::Ppm(e.to_string()))?;
        Self::from_ppm(&buf)
    }
}
