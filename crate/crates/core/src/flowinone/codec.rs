use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FlowError, ModelConfig};
use crate::numcore::Tensor;
use crate::render::{Canvas, Rgba};

/// Pixel value mapped to zero.
const MID: f64 = 128.0;
const HALF_RANGE: f64 = 127.0;

/// Cuts an RGB canvas into `patch`-sided squares, row-major, each flattened
/// channel-major (all R, then G, then B) and scaled so that 128 maps to 0 and
/// 255 to 1. Shape `[tokens, 3 * patch²]`.
pub fn patchify(canvas: &Canvas, patch: u32) -> Result<Tensor, FlowError> {
    let (w, h) = (canvas.width(), canvas.height());
    if patch == 0 || w % patch != 0 || h % patch != 0 {
        return Err(FlowError::Config(format!("patch {patch} does not tile a {w}x{h} canvas")));
    }
    let (gx, gy) = (w / patch, h / patch);
    let pp = (patch * patch) as usize;
    let mut data = Vec::with_capacity((gx * gy) as usize * 3 * pp);
    for ty in 0..gy {
        for tx in 0..gx {
            for c in 0..3 {
                for py in 0..patch {
                    for px in 0..patch {
                        let v = canvas.get(tx * patch + px, ty * patch + py).0[c];
                        data.push((v as f64 - MID) / HALF_RANGE);
                    }
                }
            }
        }
    }
    Ok(Tensor::new(&[(gx * gy) as usize, 3 * pp], data)?)
}

/// Inverse of [`patchify`] for a square canvas, clamping to `[-1, 1]` and
/// rounding to the nearest byte.
pub fn unpatchify(tokens: &Tensor, side: u32, patch: u32) -> Result<Canvas, FlowError> {
    let g = side / patch;
    let pp = (patch * patch) as usize;
    if tokens.shape() != [(g * g) as usize, 3 * pp] {
        return Err(FlowError::Contract(format!("token grid {:?} does not match a {side}px canvas", tokens.shape())));
    }
    let mut canvas = Canvas::new(side, side, Rgba::BLACK)?;
    let d = tokens.data();
    for ty in 0..g {
        for tx in 0..g {
            let base = ((ty * g + tx) as usize) * 3 * pp;
            for py in 0..patch {
                for px in 0..patch {
                    let o = (py * patch + px) as usize;
                    let ch = |c: usize| {
                        let x = d[base + c * pp + o].clamp(-1.0, 1.0);
                        (x * HALF_RANGE + MID).round().clamp(0.0, 255.0) as u8
                    };
                    canvas.set(tx * patch + px, ty * patch + py, Rgba::rgb(ch(0), ch(1), ch(2)));
                }
            }
        }
    }
    Ok(canvas)
}

/// Frozen linear stand-in for an image autoencoder: `z = patchify(I) · P`.
///
/// `P` is `3·patch² x D`, cut from a seeded orthogonal matrix whose leading
/// columns are the per-channel mean directions, so flat colours survive any
/// width. With `D ≥ 3·patch²` the rows of `P` are orthonormal and the codec is
/// an exact isometry; otherwise its columns are and it projects.
#[derive(Clone, Debug, PartialEq)]
pub struct Codec {
    pub side: u32,
    pub patch: u32,
    p: Tensor,
}

fn gram_schmidt(mut cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for v in cols.iter_mut() {
        // two passes keep the basis orthonormal to round-off
        for _ in 0..2 {
            for q in &out {
                let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        out.push(std::mem::take(v));
    }
    out
}

impl Codec {
    pub fn new(config: &ModelConfig) -> Self {
        let dp = config.patch_dim();
        let d = config.width;
        let m = dp.max(d);
        let pp = dp / 3;
        let mut rng = ChaCha8Rng::seed_from_u64(config.codec_seed);
        let mut cols: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..m).map(|i| if i < dp && i / pp == c { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 3..m {
            cols.push((0..m).map(|_| StandardNormal.sample(&mut rng)).collect());
        }
        let q = gram_schmidt(cols);
        let data = (0..dp).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| q[j][i]).collect();
        let p = Tensor::new(&[dp, d], data).expect("codec shape");
        Self { side: config.image_side, patch: config.patch, p }
    }

    pub fn projection(&self) -> &Tensor {
        &self.p
    }

    /// True when decoding inverts encoding exactly.
    pub fn is_lossless(&self) -> bool {
        self.p.shape()[1] >= self.p.shape()[0]
    }

    fn check(&self, canvas: &Canvas) -> Result<(), FlowError> {
        if (canvas.width(), canvas.height()) != (self.side, self.side) {
            return Err(FlowError::Contract(format!(
                "canvas is {}x{}, model expects {}x{}",
                canvas.width(),
                canvas.height(),
                self.side,
                self.side
            )));
        }
        Ok(())
    }

    pub fn encode(&self, canvas: &Canvas) -> Result<Tensor, FlowError> {
        self.check(canvas)?;
        Ok(patchify(canvas, self.patch)?.matmul(&self.p)?)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Canvas, FlowError> {
        unpatchify(&z.matmul_nt(&self.p)?, self.side, self.patch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn lift() -> ModelConfig {
        ModelConfig { image_side: 16, patch: 4, width: 64, ..ModelConfig::default() }
    }

    fn noise(side: u32, seed: u64) -> Canvas {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px: Vec<u8> = (0..3 * side * side).map(|_| rng.random()).collect();
        Canvas::from_rgb(side, side, &px).unwrap()
    }

    #[test]
    fn lift_round_trip_and_isometry() {
        let codec = Codec::new(&lift());
        assert!(codec.is_lossless());
        for seed in 0..5 {
            let img = noise(16, seed);
            let z = codec.encode(&img).unwrap();
            let back = codec.decode(&z).unwrap();
            let max = img.pixels().iter().zip(back.pixels()).map(|(a, b)| (*a as i32 - *b as i32).abs()).max().unwrap();
            assert!(max <= 1, "max channel error {max}");
            let x = patchify(&img, 4).unwrap();
            assert!((z.norm() - x.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn mid_gray_is_zero() {
        let codec = Codec::new(&ModelConfig::default());
        let z = codec.encode(&Canvas::new(64, 64, Rgba::rgb(128, 128, 128)).unwrap()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_colours_survive_a_narrow_codec() {
        let codec = Codec::new(&ModelConfig { width: 16, ..ModelConfig::default() });
        assert!(!codec.is_lossless());
        let img = Canvas::new(64, 64, Rgba::rgb(200, 30, 90)).unwrap();
        assert_eq!(codec.decode(&codec.encode(&img).unwrap()).unwrap(), img);
        let ptp = codec.projection().matmul_tn(codec.projection()).unwrap();
        assert!(ptp.max_abs_diff(&Tensor::eye(16)) < 1e-12);
    }

    #[test]
    fn size_is_checked() {
        let codec = Codec::new(&ModelConfig::default());
        assert!(codec.encode(&Canvas::new(32, 32, Rgba::WHITE).unwrap()).is_err());
    }
}
