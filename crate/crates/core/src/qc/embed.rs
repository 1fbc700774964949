use crate::render::{Canvas, Rect};

/// Deterministic global image embedding with unit L2 norm.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, canvas: &Canvas) -> Vec<f64>;
}

/// Deterministic per-patch image features on a fixed grid.
pub trait DenseEmbedder: Sync {
    /// Patch grid as (columns, rows).
    fn grid(&self) -> (u32, u32);
    fn patch_dim(&self) -> usize;
    /// Row-major patch features, `grid.0 * grid.1` vectors of `patch_dim`.
    fn embed_dense(&self, canvas: &Canvas) -> Vec<Vec<f64>>;
}

pub trait TextEmbedder: Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Vec<f64>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        let u = 1.0 / (v.len() as f64).sqrt();
        v.iter_mut().for_each(|x| *x = u);
    } else {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Cell `i` of `n` equal slices of `len`, never empty.
fn cell(i: u32, n: u32, len: u32) -> (u32, u32) {
    let lo = (i as u64 * len as u64 / n as u64) as u32;
    let hi = ((i as u64 + 1) * len as u64 / n as u64) as u32;
    let lo = lo.min(len - 1);
    (lo, hi.max(lo + 1))
}

fn cell_rect(cx: u32, cy: u32, grid: (u32, u32), outer: Rect) -> Rect {
    let (x0, x1) = cell(cx, grid.0, outer.w);
    let (y0, y1) = cell(cy, grid.1, outer.h);
    Rect::new(outer.x + x0 as i32, outer.y + y0 as i32, x1 - x0, y1 - y0)
}

/// Mean RGB over a `grid` x `grid` layout of cells, centred on mid-grey
/// (`[-0.5, 0.5]`) and L2-normalised. A uniform mid-grey image maps to the
/// uniform unit vector.
#[derive(Clone, Copy, Debug)]
pub struct GridEmbedder {
    pub grid: u32,
}

impl Default for GridEmbedder {
    fn default() -> Self {
        Self { grid: 4 }
    }
}

impl Embedder for GridEmbedder {
    fn dim(&self) -> usize {
        3 * (self.grid * self.grid) as usize
    }

    fn embed(&self, canvas: &Canvas) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for cy in 0..self.grid {
            for cx in 0..self.grid {
                let r = cell_rect(cx, cy, (self.grid, self.grid), canvas.bounds());
                let m = canvas.mean_rgb(r).expect("cell lies inside the canvas");
                v.extend(m.iter().map(|c| c / 255.0 - 0.5));
            }
        }
        normalize(v)
    }
}

/// Per patch of an 8x8 grid: mean RGB plus a 3x3 grid of mean grey, all in
/// `[0, 1]`, giving 12 values.
#[derive(Clone, Copy, Debug)]
pub struct PatchEmbedder {
    pub grid: u32,
}

impl Default for PatchEmbedder {
    fn default() -> Self {
        Self { grid: 8 }
    }
}

impl PatchEmbedder {
    /// All patch vectors concatenated.
    pub fn flat(&self, canvas: &Canvas) -> Vec<f64> {
        self.embed_dense(canvas).concat()
    }
}

impl DenseEmbedder for PatchEmbedder {
    fn grid(&self) -> (u32, u32) {
        (self.grid, self.grid)
    }

    fn patch_dim(&self) -> usize {
        12
    }

    fn embed_dense(&self, canvas: &Canvas) -> Vec<Vec<f64>> {
        let g = (self.grid, self.grid);
        let mut out = Vec::with_capacity((self.grid * self.grid) as usize);
        for cy in 0..self.grid {
            for cx in 0..self.grid {
                let patch = cell_rect(cx, cy, g, canvas.bounds());
                let m = canvas.mean_rgb(patch).expect("patch lies inside the canvas");
                let mut f: Vec<f64> = m.iter().map(|c| c / 255.0).collect();
                for sy in 0..3 {
                    for sx in 0..3 {
                        let sub = cell_rect(sx, sy, (3, 3), patch);
                        let [r, gg, b] = canvas.mean_rgb(sub).expect("sub-cell lies inside the patch");
                        f.push((r + gg + b) / (3.0 * 255.0));
                    }
                }
                out.push(f);
            }
        }
        out
    }
}

/// Hashed character trigrams (with boundary padding), L2-normalised.
#[derive(Clone, Copy, Debug)]
pub struct TrigramEmbedder {
    pub dim: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

fn fnv1a(chars: &[char]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in chars {
        for b in (*c as u32).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl TextEmbedder for TrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut padded = vec!['\u{2}'];
        padded.extend(text.to_lowercase().chars());
        padded.push('\u{3}');
        let mut v = vec![0.0; self.dim];
        for w in padded.windows(3) {
            let h = fnv1a(w);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        normalize(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Rgba;

    #[test]
    fn grid_embedding_is_unit() {
        let e = GridEmbedder::default();
        for c in [Rgba::WHITE, Rgba::BLACK, Rgba::rgb(3, 200, 40)] {
            let v = e.embed(&Canvas::new(13, 7, c).unwrap());
            assert_eq!(v.len(), 48);
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_shape_is_fixed() {
        let e = PatchEmbedder::default();
        for (w, h) in [(64, 64), (5, 3), (100, 37)] {
            let d = e.embed_dense(&Canvas::new(w, h, Rgba::rgb(10, 20, 30)).unwrap());
            assert_eq!(d.len(), 64);
            assert!(d.iter().all(|p| p.len() == 12));
        }
    }

    #[test]
    fn text_embedding_distinguishes() {
        let e = TrigramEmbedder::default();
        let a = e.embed_text("a red cat");
        assert!((cosine(&a, &e.embed_text("a red cat")) - 1.0).abs() < 1e-12);
        assert!(cosine(&a, &e.embed_text("a blue dog")) < 0.9);
    }
}
