//! Benchmark scoring: directional similarities in embedding space, the
//! four-score pass rule, and per-category aggregation.

mod report;

use thiserror::Error;

use crate::dataset::Category;
use crate::qc::{DenseEmbedder, Embedder, TextEmbedder};
use crate::render::Canvas;

pub use report::{
    aggregate, parse_score_lines, round3, verdict, AggregateMode, AggregateOptions, BenchReport, CategoryResult,
    ScoreCard, ScoreRecord, Verdict, TABLE_ORDER,
};

/// Displacements shorter than this are treated as "no edit".
pub const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("vectors have dimensions {0} and {1}")]
    Dimension(usize, usize),
    #[error("degenerate edit: {which} displacement has norm {norm:e}")]
    DegenerateEdit { which: &'static str, norm: f64 },
    #[error("{field} score {value} outside [1, 5]")]
    ScoreRange { field: &'static str, value: f64 },
    #[error("category {0} has no samples")]
    EmptyCategory(Category),
    #[error("no samples to aggregate")]
    NoSamples,
    #[error("images differ in size: {0:?} vs {1:?}")]
    SizeMismatch((u32, u32), (u32, u32)),
    #[error("caption must not be empty")]
    EmptyCaption,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn displacement(from: &[f64], to: &[f64]) -> Result<(Vec<f64>, f64), EvalError> {
    if from.len() != to.len() {
        return Err(EvalError::Dimension(from.len(), to.len()));
    }
    let d: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((d, n))
}

/// Cosine between `a1 − a0` and `b1 − b0`.
pub fn directional_similarity(a0: &[f64], a1: &[f64], b0: &[f64], b1: &[f64]) -> Result<f64, EvalError> {
    let (da, na) = displacement(a0, a1)?;
    let (db, nb) = displacement(b0, b1)?;
    if da.len() != db.len() {
        return Err(EvalError::Dimension(da.len(), db.len()));
    }
    if na <= DEGENERATE_EPS {
        return Err(EvalError::DegenerateEdit { which: "first", norm: na });
    }
    if nb <= DEGENERATE_EPS {
        return Err(EvalError::DegenerateEdit { which: "second", norm: nb });
    }
    let dot: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Agreement between the caption change and the image change.
pub fn dir_clip(
    src_caption: &str,
    tgt_caption: &str,
    input: &Canvas,
    generated: &Canvas,
    text: &dyn TextEmbedder,
    image: &dyn Embedder,
) -> Result<f64, EvalError> {
    if src_caption.trim().is_empty() || tgt_caption.trim().is_empty() {
        return Err(EvalError::EmptyCaption);
    }
    directional_similarity(
        &text.embed_text(src_caption),
        &text.embed_text(tgt_caption),
        &image.embed(input),
        &image.embed(generated),
    )
}

fn size(c: &Canvas) -> (u32, u32) {
    (c.width(), c.height())
}

/// Agreement between the generated edit and the reference edit over
/// flattened dense features.
pub fn dinov3_dir_sim(input: &Canvas, generated: &Canvas, truth: &Canvas, dense: &dyn DenseEmbedder) -> Result<f64, EvalError> {
    for other in [generated, truth] {
        if size(other) != size(input) {
            return Err(EvalError::SizeMismatch(size(input), size(other)));
        }
    }
    let f = |c: &Canvas| dense.embed_dense(c).concat();
    let base = f(input);
    directional_similarity(&base, &f(generated), &base, &f(truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Rgba;

    #[test]
    fn basic_directions() {
        let o = [0.0, 0.0];
        assert!((directional_similarity(&o, &[2.0, 1.0], &o, &[4.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((directional_similarity(&o, &[2.0, 1.0], &o, &[-2.0, -1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(directional_similarity(&o, &[1.0, 0.0], &o, &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            directional_similarity(&o, &o, &o, &[1.0, 0.0]),
            Err(EvalError::DegenerateEdit { which: "first", .. })
        ));
        assert_eq!(directional_similarity(&o, &[1.0, 0.0], &[0.0], &[1.0]), Err(EvalError::Dimension(2, 1)));
    }

    struct Angle;

    impl TextEmbedder for Angle {
        fn dim(&self) -> usize {
            2
        }
        fn embed_text(&self, text: &str) -> Vec<f64> {
            if text == "before" { vec![0.0, 0.0] } else { vec![1.0, 0.0] }
        }
    }

    impl Embedder for Angle {
        fn dim(&self) -> usize {
            2
        }
        fn embed(&self, canvas: &Canvas) -> Vec<f64> {
            // a red pixel marks the edited image: displacement at 60 degrees
            if canvas.get(0, 0) == Rgba::rgb(255, 0, 0) { vec![0.5, 3f64.sqrt() / 2.0] } else { vec![0.0, 0.0] }
        }
    }

    #[test]
    fn clip_direction_with_stub_embedders() {
        let a = Canvas::new(2, 2, Rgba::WHITE).unwrap();
        let b = Canvas::new(2, 2, Rgba::rgb(255, 0, 0)).unwrap();
        assert!((dir_clip("before", "after", &a, &b, &Angle, &Angle).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(dir_clip("before", "before", &a, &a, &Angle, &Angle), Err(EvalError::DegenerateEdit { .. })));
        assert_eq!(dir_clip("", "after", &a, &b, &Angle, &Angle), Err(EvalError::EmptyCaption));
    }

    /// 2x2 grid, one value per patch: the red channel of its top-left pixel.
    struct Corners;

    impl DenseEmbedder for Corners {
        fn grid(&self) -> (u32, u32) {
            (2, 2)
        }
        fn patch_dim(&self) -> usize {
            1
        }
        fn embed_dense(&self, c: &Canvas) -> Vec<Vec<f64>> {
            let (hw, hh) = (c.width() / 2, c.height() / 2);
            [(0, 0), (hw, 0), (0, hh), (hw, hh)].iter().map(|&(x, y)| vec![c.get(x, y).0[0] as f64]).collect()
        }
    }

    fn quad(v: [u8; 4]) -> Canvas {
        let mut c = Canvas::new(4, 4, Rgba::BLACK).unwrap();
        for (k, &r) in v.iter().enumerate() {
            for dy in 0..2 {
                for dx in 0..2 {
                    c.set((k as u32 % 2) * 2 + dx, (k as u32 / 2) * 2 + dy, Rgba::rgb(r, 0, 0));
                }
            }
        }
        c
    }

    #[test]
    fn dense_direction_with_stub_features() {
        let input = quad([10, 10, 10, 10]);
        let gen = quad([20, 10, 30, 10]);
        let gt = quad([20, 20, 10, 10]);
        // displacements (10, 0, 20, 0) and (10, 10, 0, 0)
        let want = 100.0 / (500f64.sqrt() * 200f64.sqrt());
        assert!((dinov3_dir_sim(&input, &gen, &gt, &Corners).unwrap() - want).abs() < 1e-12);
        assert!((dinov3_dir_sim(&input, &gt, &gt, &Corners).unwrap() - 1.0).abs() < 1e-15);
        assert!(dinov3_dir_sim(&input, &input, &gt, &Corners).is_err());
        assert!(dinov3_dir_sim(&input, &gen, &Canvas::new(2, 2, Rgba::BLACK).unwrap(), &Corners).is_err());
    }
}
