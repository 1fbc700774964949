//! Instruction canvases: text layout and stylised glyph raster, marker
//! drawing and alpha compositing.
//!
//! Every raster path is integer-only, so a seed reproduces a canvas byte for
//! byte on any platform.

mod canvas;
mod font;
mod layout;
mod marker;
mod raster;
mod style;
mod text;
mod tokenize;

use thiserror::Error;

pub use canvas::{Canvas, Rect, Rgba};
pub use font::{first_uncovered, validate_font, BuiltinFont, GlyphSource, UNITS_PER_EM};
pub use layout::{
    fits_at, layout_bbox, layout_with_fallback, safe_margin_box, token_width, try_word_wrap, LayoutLine,
    LayoutResult, LayoutSearch, PlacedLayout,
};
pub use marker::{render_marker, ArrowGeometry, MarkerConfig, MarkerRecord, MarkerSpec};
pub use raster::{draw_glyph_run, draw_polyline, draw_segment, fill_triangle, Mask};
pub use style::{choose_style, composite_over, luminance, stroke_width_px, ColorFamily, TextStyle};
pub use text::{layout_mask, render_text_instruction, render_text_with_fonts, TextPlacement, TextRenderConfig};
pub use tokenize::{is_word_char, tokenize, Token, TokenKind, Tokenized};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("canvas dimensions must be at least 1x1")]
    EmptyCanvas,
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("region is empty")]
    EmptyRegion,
    #[error("region {0:?} lies outside the canvas")]
    RegionOutside(Rect),
    #[error("canvas sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((u32, u32), (u32, u32)),
    #[error("ppm: {0}")]
    Ppm(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unlayoutable text ({reason}){}", token.as_ref().map(|t| format!(": `{t}`")).unwrap_or_default())]
    Unlayoutable { token: Option<String>, reason: String },
    #[error("no configured font covers the text (first missing `{0}`)")]
    NoValidFont(char),
    #[error("invalid marker: {0}")]
    InvalidMarker(String),
}
