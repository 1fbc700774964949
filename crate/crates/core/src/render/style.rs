use serde::{Deserialize, Serialize};

use super::{Canvas, Rect, RenderError, Rgba};

/// Perceptual luminance of the mean colour over `region`.
pub fn luminance(canvas: &Canvas, region: Rect) -> Result<f64, RenderError> {
    let [r, g, b] = canvas.mean_rgb(region)?;
    Ok(0.299 * r + 0.587 * g + 0.114 * b)
}

/// Hue family for text fill. Each family has a dark and a bright shade.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorFamily {
    Neutral,
    Red,
    Green,
    Blue,
    Orange,
    Purple,
}

impl ColorFamily {
    pub const ALL: [ColorFamily; 6] = [Self::Neutral, Self::Red, Self::Green, Self::Blue, Self::Orange, Self::Purple];

    pub fn dark(self) -> Rgba {
        match self {
            Self::Neutral => Rgba::rgb(20, 20, 20),
            Self::Red => Rgba::rgb(120, 10, 10),
            Self::Green => Rgba::rgb(10, 80, 20),
            Self::Blue => Rgba::rgb(15, 30, 120),
            Self::Orange => Rgba::rgb(110, 50, 0),
            Self::Purple => Rgba::rgb(70, 20, 100),
        }
    }

    pub fn bright(self) -> Rgba {
        match self {
            Self::Neutral => Rgba::rgb(245, 245, 245),
            Self::Red => Rgba::rgb(255, 140, 140),
            Self::Green => Rgba::rgb(150, 255, 150),
            Self::Blue => Rgba::rgb(150, 200, 255),
            Self::Orange => Rgba::rgb(255, 200, 120),
            Self::Purple => Rgba::rgb(225, 170, 255),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStyle {
    pub fill: Rgba,
    pub stroke: Rgba,
    pub stroke_width: u32,
}

/// `max(1, round(line_height / 12))`, half-up, with the line height given
/// in thousandths of a pixel.
pub fn stroke_width_px(line_height_milli: u64) -> u32 {
    ((line_height_milli + 6000) / 12000).max(1) as u32
}

/// Dark fill with a white stroke on bright backgrounds (`L > 128`),
/// otherwise bright fill with a dark stroke.
pub fn choose_style(l: f64, family: ColorFamily, line_height_milli: u64) -> TextStyle {
    let stroke_width = stroke_width_px(line_height_milli);
    if l > 128.0 {
        TextStyle { fill: family.dark(), stroke: Rgba::WHITE, stroke_width }
    } else {
        TextStyle { fill: family.bright(), stroke: Rgba::BLACK, stroke_width }
    }
}

#[inline]
fn over_channel(s: u8, d: u8, a: u8) -> u8 {
    let num = s as u32 * a as u32 + d as u32 * (255 - a as u32);
    ((2 * num + 255) / 510) as u8
}

/// Source-over compositing of straight-alpha `src` onto `dst`; the result
/// is opaque.
pub fn composite_over(dst: &Canvas, src: &Canvas) -> Result<Canvas, RenderError> {
    if (dst.width(), dst.height()) != (src.width(), src.height()) {
        return Err(RenderError::SizeMismatch((dst.width(), dst.height()), (src.width(), src.height())));
    }
    let mut out = Vec::with_capacity(dst.pixels().len());
    for (d, s) in dst.pixels().chunks_exact(4).zip(src.pixels().chunks_exact(4)) {
        let a = s[3];
        out.extend_from_slice(&[over_channel(s[0], d[0], a), over_channel(s[1], d[1], a), over_channel(s[2], d[2], a), 255]);
    }
    Canvas::from_rgba(dst.width(), dst.height(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn luminance_values() {
        let white = Canvas::new(4, 4, Rgba::WHITE).unwrap();
        let black = Canvas::new(4, 4, Rgba::BLACK).unwrap();
        let mixed = Canvas::new(4, 4, Rgba::rgb(100, 150, 200)).unwrap();
        let r = Rect::new(0, 0, 4, 4);
        assert!((luminance(&white, r).unwrap() - 255.0).abs() < 1e-9);
        assert_eq!(luminance(&black, r).unwrap(), 0.0);
        assert!((luminance(&mixed, r).unwrap() - 140.75).abs() < 1e-9);
        assert_eq!(luminance(&white, Rect::new(0, 0, 0, 2)), Err(RenderError::EmptyRegion));
        assert!(luminance(&white, Rect::new(2, 2, 4, 4)).is_err());
    }

    #[test]
    fn style_rule() {
        let s = choose_style(200.0, ColorFamily::Blue, 24_000);
        assert_eq!((s.fill, s.stroke), (ColorFamily::Blue.dark(), Rgba::WHITE));
        assert_eq!(s.stroke_width, 2);
        let s = choose_style(50.0, ColorFamily::Blue, 24_000);
        assert_eq!((s.fill, s.stroke), (ColorFamily::Blue.bright(), Rgba::BLACK));
        assert_eq!(choose_style(128.0, ColorFamily::Red, 1000).fill, ColorFamily::Red.bright());
        assert_eq!(stroke_width_px(1000), 1);
        assert_eq!(stroke_width_px(18_000), 2);
        assert_eq!(stroke_width_px(17_999), 1);
    }

    #[test]
    fn composite_examples() {
        let black = Canvas::new(2, 2, Rgba::BLACK).unwrap();
        let half_red = Canvas::new(2, 2, Rgba([255, 0, 0, 128])).unwrap();
        assert_eq!(composite_over(&black, &half_red).unwrap().get(0, 0), Rgba::rgb(128, 0, 0));
        let opaque = Canvas::new(2, 2, Rgba::rgb(9, 8, 7)).unwrap();
        assert_eq!(composite_over(&black, &opaque).unwrap(), opaque);
        let small = Canvas::new(1, 2, Rgba::BLACK).unwrap();
        assert!(matches!(composite_over(&black, &small), Err(RenderError::SizeMismatch(..))));
    }

    proptest! {
        #[test]
        fn transparent_layer_is_identity(px in proptest::collection::vec(any::<u8>(), 3 * 5 * 4)) {
            let dst = Canvas::from_rgb(5, 4, &px).unwrap();
            let src = Canvas::transparent(5, 4).unwrap();
            prop_assert_eq!(composite_over(&dst, &src).unwrap(), dst);
        }

        #[test]
        fn over_rounds_half_up(s in any::<u8>(), d in any::<u8>(), a in any::<u8>()) {
            let exact = (s as f64 * a as f64 + d as f64 * (255 - a) as f64) / 255.0;
            prop_assert_eq!(over_channel(s, d, a) as f64, (exact + 0.5).floor());
        }
    }
}
