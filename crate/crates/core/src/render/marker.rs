use rand::Rng;
use serde::{Deserialize, Serialize};

use super::font::BuiltinFont;
use super::raster::{draw_glyph_run, draw_polyline, fill_triangle, Mask};
use super::{Canvas, Rect, RenderError, Rgba};

/// Geometric instruction drawn onto a canvas. Unset colours and widths are
/// sampled from the renderer's configured ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarkerSpec {
    Arrow {
        origin: (i64, i64),
        /// Radians, measured clockwise from +x in image coordinates.
        angle: f64,
        /// Force magnitude in `[0, 1]`; shaft length is linear in it.
        magnitude: f64,
        #[serde(default)]
        color: Option<Rgba>,
        #[serde(default)]
        width: Option<u32>,
    },
    Bbox {
        rect: Rect,
        #[serde(default)]
        color: Option<Rgba>,
        #[serde(default)]
        label: Option<String>,
        #[serde(default)]
        width: Option<u32>,
    },
    Trajectory {
        points: Vec<(i64, i64)>,
        #[serde(default)]
        thickness: Option<u32>,
        #[serde(default)]
        color: Option<Rgba>,
    },
    Doodle {
        strokes: Vec<Vec<(i64, i64)>>,
        #[serde(default)]
        color: Option<Rgba>,
        #[serde(default)]
        width: Option<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerConfig {
    /// Shortest shaft in pixels on a 256-pixel canvas.
    pub arrow_min_len: f64,
    /// Longest shaft in pixels on a 256-pixel canvas.
    pub arrow_max_len: f64,
    /// Inclusive stroke width range.
    pub width: (u32, u32),
    pub palette: Vec<Rgba>,
    /// Largest random shift applied to arrow origins, in pixels.
    pub start_jitter: u32,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        Self {
            arrow_min_len: 20.0,
            arrow_max_len: 100.0,
            width: (2, 4),
            palette: vec![
                Rgba::rgb(230, 30, 30),
                Rgba::rgb(30, 200, 60),
                Rgba::rgb(40, 90, 240),
                Rgba::rgb(250, 200, 0),
                Rgba::rgb(240, 0, 200),
            ],
            start_jitter: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowGeometry {
    pub origin: (i64, i64),
    /// End of the shaft, where the head's base sits.
    pub tip: (i64, i64),
    pub shaft_length: f64,
    pub head: [(i64, i64); 3],
}

/// What was drawn and whether any of it left the canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerRecord {
    pub kind: String,
    pub color: Rgba,
    pub width: u32,
    pub clipped: bool,
    pub arrow: Option<ArrowGeometry>,
}

impl MarkerConfig {
    /// Shaft length in pixels for magnitude `m` on a canvas whose shorter
    /// side is `side`.
    pub fn shaft_length(&self, m: f64, side: u32) -> f64 {
        (self.arrow_min_len + m * (self.arrow_max_len - self.arrow_min_len)) * side as f64 / 256.0
    }
}

fn arrow_geometry(origin: (i64, i64), angle: f64, len: f64, width: u32) -> ArrowGeometry {
    let (s, c) = angle.sin_cos();
    let tip = (origin.0 + (len * c).round() as i64, origin.1 + (len * s).round() as i64);
    let head_len = (3 * width).max(6) as f64;
    let half = (2 * width).max(4) as f64;
    let apex = (tip.0 + (head_len * c).round() as i64, tip.1 + (head_len * s).round() as i64);
    let left = (tip.0 + (-half * s).round() as i64, tip.1 + (half * c).round() as i64);
    let right = (tip.0 + (half * s).round() as i64, tip.1 + (-half * c).round() as i64);
    ArrowGeometry { origin, tip, shaft_length: len, head: [apex, left, right] }
}

fn check_points(points: &[(i64, i64)], what: &str) -> Result<(), RenderError> {
    if points.is_empty() {
        return Err(RenderError::InvalidMarker(format!("{what} polyline is empty")));
    }
    Ok(())
}

/// Draws a marker. Attributes left unset are sampled from `rng`; geometry
/// running off the canvas is clipped and reported.
pub fn render_marker<R: Rng + ?Sized>(
    canvas: &Canvas,
    spec: &MarkerSpec,
    rng: &mut R,
    config: &MarkerConfig,
) -> Result<(Canvas, MarkerRecord), RenderError> {
    if config.palette.is_empty() || config.width.0 == 0 || config.width.0 > config.width.1 {
        return Err(RenderError::InvalidArgument("marker palette or width range".into()));
    }
    let pick_color = |c: &Option<Rgba>, rng: &mut R| c.unwrap_or_else(|| config.palette[rng.random_range(0..config.palette.len())]);
    let pick_width = |w: &Option<u32>, rng: &mut R| w.unwrap_or_else(|| rng.random_range(config.width.0..=config.width.1)).max(1);
    let mut out = canvas.clone();
    let side = canvas.width().min(canvas.height());
    let record = match spec {
        MarkerSpec::Arrow { origin, angle, magnitude, color, width } => {
            if !(0.0..=1.0).contains(magnitude) {
                return Err(RenderError::InvalidMarker(format!("arrow magnitude {magnitude} outside [0, 1]")));
            }
            if !angle.is_finite() {
                return Err(RenderError::InvalidMarker("arrow angle is not finite".into()));
            }
            let color = pick_color(color, rng);
            let width = pick_width(width, rng);
            let j = config.start_jitter as i64;
            let origin = if j > 0 {
                (origin.0 + rng.random_range(-j..=j), origin.1 + rng.random_range(-j..=j))
            } else {
                *origin
            };
            let geo = arrow_geometry(origin, *angle, config.shaft_length(*magnitude, side), width);
            let mut clipped = draw_polyline(&mut out, &[geo.origin, geo.tip], width, color);
            clipped |= fill_triangle(&mut out, geo.head, color);
            MarkerRecord { kind: "arrow".into(), color, width, clipped, arrow: Some(geo) }
        }
        MarkerSpec::Bbox { rect, color, label, width } => {
            if rect.is_empty() {
                return Err(RenderError::InvalidMarker("bbox is empty".into()));
            }
            let color = pick_color(color, rng);
            let width = pick_width(width, rng);
            let (x0, y0) = (rect.x as i64, rect.y as i64);
            let (x1, y1) = (rect.right() - 1, rect.bottom() - 1);
            let mut clipped = !rect.within(canvas.width(), canvas.height());
            clipped |= draw_polyline(&mut out, &[(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)], width, color);
            if let Some(label) = label.as_deref().filter(|l| !l.trim().is_empty()) {
                let size = (side / 16).max(8);
                let mut mask = Mask::new(canvas.width(), canvas.height());
                let ly = if y0 - size as i64 - 1 >= 0 { y0 - size as i64 - 1 } else { y1 + 2 };
                clipped |= draw_glyph_run(&mut mask, &BuiltinFont::mono(), label, x0, ly, size);
                mask.paint(&mut out, color);
            }
            MarkerRecord { kind: "bbox".into(), color, width, clipped, arrow: None }
        }
        MarkerSpec::Trajectory { points, thickness, color } => {
            check_points(points, "trajectory")?;
            let color = pick_color(color, rng);
            let width = pick_width(thickness, rng);
            let clipped = draw_polyline(&mut out, points, width, color);
            MarkerRecord { kind: "trajectory".into(), color, width, clipped, arrow: None }
        }
        MarkerSpec::Doodle { strokes, color, width } => {
            if strokes.is_empty() {
                return Err(RenderError::InvalidMarker("doodle has no strokes".into()));
            }
            let color = pick_color(color, rng);
            let width = pick_width(width, rng);
            let mut clipped = false;
            for s in strokes {
                check_points(s, "doodle")?;
                clipped |= draw_polyline(&mut out, s, width, color);
            }
            MarkerRecord { kind: "doodle".into(), color, width, clipped, arrow: None }
        }
    };
    Ok((out, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arrow(m: f64, angle: f64) -> MarkerSpec {
        MarkerSpec::Arrow { origin: (40, 128), angle, magnitude: m, color: Some(Rgba::BLACK), width: Some(1) }
    }

    fn shaft(m: f64) -> f64 {
        let c = Canvas::new(256, 256, Rgba::WHITE).unwrap();
        let (_, r) = render_marker(&c, &arrow(m, 0.0), &mut ChaCha8Rng::seed_from_u64(0), &MarkerConfig::default()).unwrap();
        r.arrow.unwrap().shaft_length
    }

    #[test]
    fn shaft_length_is_linear_in_magnitude() {
        assert_eq!(shaft(0.0), 20.0);
        assert_eq!(shaft(1.0), 100.0);
        assert_eq!(shaft(0.5), 60.0);
    }

    #[test]
    fn horizontal_shaft_pixels() {
        let c = Canvas::new(256, 256, Rgba::WHITE).unwrap();
        let (out, r) = render_marker(&c, &arrow(0.5, 0.0), &mut ChaCha8Rng::seed_from_u64(0), &MarkerConfig::default()).unwrap();
        let g = r.arrow.unwrap();
        assert_eq!(g.tip, (100, 128));
        for x in 40..=100 {
            assert_eq!(out.get(x, 128), Rgba::BLACK);
        }
        assert_eq!(out.get(39, 128), Rgba::WHITE);
        assert!(!r.clipped);
    }

    #[test]
    fn bad_specs_rejected() {
        let c = Canvas::new(32, 32, Rgba::WHITE).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MarkerConfig::default();
        assert!(render_marker(&c, &arrow(1.5, 0.0), &mut rng, &cfg).is_err());
        let t = MarkerSpec::Trajectory { points: vec![], thickness: None, color: None };
        assert!(matches!(render_marker(&c, &t, &mut rng, &cfg), Err(RenderError::InvalidMarker(_))));
        let d = MarkerSpec::Doodle { strokes: vec![vec![(1, 1)], vec![]], color: None, width: None };
        assert!(render_marker(&c, &d, &mut rng, &cfg).is_err());
    }

    #[test]
    fn off_canvas_geometry_is_clipped() {
        let c = Canvas::new(32, 32, Rgba::WHITE).unwrap();
        let t = MarkerSpec::Trajectory { points: vec![(5, 5), (60, 5)], thickness: Some(1), color: None };
        let (out, r) = render_marker(&c, &t, &mut ChaCha8Rng::seed_from_u64(3), &MarkerConfig::default()).unwrap();
        assert!(r.clipped);
        assert_eq!(out.get(31, 5), r.color);
    }

    #[test]
    fn bbox_with_label_and_json() {
        let json = r#"{"kind":"bbox","rect":{"x":8,"y":20,"w":30,"h":20},"label":"cat"}"#;
        let spec: MarkerSpec = serde_json::from_str(json).unwrap();
        let c = Canvas::new(64, 64, Rgba::WHITE).unwrap();
        let (out, r) = render_marker(&c, &spec, &mut ChaCha8Rng::seed_from_u64(9), &MarkerConfig::default()).unwrap();
        assert_eq!(out.get(8, 30), r.color);
        assert_eq!(out.get(20, 30), Rgba::WHITE);
        assert!(!r.clipped);
    }
}
