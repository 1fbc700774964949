//! Glyph metrics and the built-in 8x8 bitmap faces.
//!
//! Metrics are integers in thousandths of an em so that layout decisions
//! are exact and identical on every platform.

use font8x8::{UnicodeFonts, BASIC_FONTS, HIRAGANA_FONTS};

pub const UNITS_PER_EM: u32 = 1000;

/// Source of glyph metrics (and, optionally, bitmaps) for layout and raster.
pub trait GlyphSource: Send + Sync {
    fn name(&self) -> &str;

    fn covers(&self, c: char) -> bool;

    /// Horizontal advance in thousandths of an em, `None` when uncovered.
    fn advance_units(&self, c: char) -> Option<u32>;

    /// Bounding-box area of the glyph divided by the squared font size.
    fn area_ratio(&self, c: char) -> Option<f64>;

    /// Line height in thousandths of an em.
    fn line_height_units(&self) -> u32;

    /// 8x8 bitmap, one byte per row, least significant bit leftmost.
    fn bitmap(&self, c: char) -> Option<[u8; 8]>;
}

/// Fixed-metric face over printable ASCII plus Hiragana (the CJK sample set).
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinFont {
    name: String,
    advance: u32,
    line_height: u32,
    area: f64,
}

impl BuiltinFont {
    /// Advance 0.6 em, glyph box area 0.45 em², line height 1.2 em.
    pub fn mono() -> Self {
        Self::with_metrics("builtin-mono", 600, 1200, 0.45)
    }

    pub fn narrow() -> Self {
        Self::with_metrics("builtin-narrow", 500, 1150, 0.40)
    }

    pub fn with_metrics(name: &str, advance: u32, line_height: u32, area: f64) -> Self {
        Self { name: name.to_string(), advance, line_height, area }
    }

    pub fn defaults() -> Vec<BuiltinFont> {
        vec![Self::mono(), Self::narrow()]
    }
}

fn builtin_covers(c: char) -> bool {
    matches!(c as u32, 0x20..=0x7E | 0x3041..=0x3096)
}

impl GlyphSource for BuiltinFont {
    fn name(&self) -> &str {
        &self.name
    }

    fn covers(&self, c: char) -> bool {
        builtin_covers(c)
    }

    fn advance_units(&self, c: char) -> Option<u32> {
        (builtin_covers(c) || c.is_whitespace()).then_some(self.advance)
    }

    fn area_ratio(&self, c: char) -> Option<f64> {
        builtin_covers(c).then_some(if c == ' ' { 0.0 } else { self.area })
    }

    fn line_height_units(&self) -> u32 {
        self.line_height
    }

    fn bitmap(&self, c: char) -> Option<[u8; 8]> {
        if !builtin_covers(c) {
            return None;
        }
        if c.is_ascii() {
            BASIC_FONTS.get(c)
        } else {
            HIRAGANA_FONTS.get(c)
        }
    }
}

/// Coverage and glyph-area check for a font against a text.
///
/// Every non-whitespace code point must be covered, and the mean of
/// `A_c / s²` over the non-whitespace characters must exceed `threshold`.
/// Empty (or all-whitespace) text passes.
pub fn validate_font(glyphs: &dyn GlyphSource, text: &str, size: u32, threshold: f64) -> bool {
    assert!(size > 0, "font size must be positive");
    let mut n = 0usize;
    let mut total = 0.0;
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        let Some(ratio) = glyphs.area_ratio(c).filter(|_| glyphs.covers(c)) else {
            return false;
        };
        total += ratio;
        n += 1;
    }
    n == 0 || total / n as f64 > threshold
}

/// First non-whitespace code point the font does not cover.
pub fn first_uncovered(glyphs: &dyn GlyphSource, text: &str) -> Option<char> {
    text.chars().filter(|c| !c.is_whitespace()).find(|&c| !glyphs.covers(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(f64);

    impl GlyphSource for Flat {
        fn name(&self) -> &str {
            "flat"
        }
        fn covers(&self, c: char) -> bool {
            c != '§'
        }
        fn advance_units(&self, _: char) -> Option<u32> {
            Some(500)
        }
        fn area_ratio(&self, c: char) -> Option<f64> {
            self.covers(c).then_some(self.0)
        }
        fn line_height_units(&self) -> u32 {
            1000
        }
        fn bitmap(&self, _: char) -> Option<[u8; 8]> {
            None
        }
    }

    #[test]
    fn validation_rules() {
        assert!(validate_font(&Flat(0.5), "hello world", 12, 0.05));
        assert!(!validate_font(&Flat(0.5), "price 5§", 12, 0.05));
        assert!(!validate_font(&Flat(0.0), "abc", 12, 1e-9));
        assert!(validate_font(&Flat(0.0), "", 12, 0.05));
    }

    #[test]
    fn builtin_coverage() {
        let f = BuiltinFont::mono();
        assert!(f.covers('A') && f.covers('~') && f.covers('あ'));
        assert!(!f.covers('漢') && !f.covers('é'));
        assert_eq!(first_uncovered(&f, "cat 漢"), Some('漢'));
        assert!(f.bitmap('A').unwrap().iter().any(|&b| b != 0));
        assert!(validate_font(&f, "add a cat", 20, 0.05));
    }
}
