//! Deterministic software rasterizer: monospace bitmap text, table grids,
//! question banners, phrase masks and PPM image I/O.

mod document;
mod glyph;
mod image;
mod ppm;
mod style;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{
    apply_mask_rectangles, banner_height, overlay_question_banner, render_text_document,
    RenderedDocument, WordBox, BANNER_PADDING,
};
pub(crate) use document::validate_spans;
pub use glyph::{check_glyphs, is_supported, BASE_CELL};
pub use image::{PixelImage, Rgb};
pub use ppm::{decode_ppm, encode_ppm};
pub use style::{SeparatorRule, StyleId, StylePreset};
pub use table::{render_table_image, MAX_TABLE_AREA};

/// Fill used to paint over masked phrases. Distinct from every preset color.
pub const MASK_COLOR: Rgb = Rgb(128, 128, 128);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("unsupported glyph U+{codepoint:04X}")]
    UnsupportedGlyph { codepoint: u32 },
    #[error("text contains no words")]
    EmptyText,
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("width {max_width}px is narrower than one {cell}px glyph cell")]
    WidthTooSmall { max_width: usize, cell: usize },
    #[error("table overflow: {width}x{height} px at minimum scale exceeds the patch budget")]
    TableOverflow { width: usize, height: usize },
    #[error("invalid spans: {0}")]
    InvalidSpans(String),
    #[error("image must be non-empty, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("expected {expected} pixels, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("unsupported PPM dialect {0}")]
    UnsupportedDialect(String),
    #[error("not a PPM file")]
    WrongMagic,
    #[error("malformed PPM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PPM maxval {0} (only 255)")]
    UnsupportedMaxval(usize),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("{0} trailing bytes after PPM payload")]
    TrailingBytes(usize),
}

/// JSON sidecar describing a rendered document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub full_text: String,
    pub words: Vec<WordBox>,
    pub style_id: StyleId,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub banner_words: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl Annotation {
    pub fn of(doc: &RenderedDocument) -> Self {
        Annotation {
            full_text: doc.full_text.clone(),
            words: doc.words.clone(),
            style_id: doc.style.id,
            seed: doc.seed,
            banner_words: doc.banner_words,
        }
    }

    /// Reattaches an image to recover the document. The style is the preset
    /// named by `style_id`, with the glyph scale read back from the word boxes.
    pub fn into_document(self, image: PixelImage) -> RenderedDocument {
        let scale = self.words.first().map_or(1, |w| (w.h / BASE_CELL).max(1));
        RenderedDocument {
            image,
            words: self.words,
            full_text: self.full_text,
            style: StylePreset::preset(self.style_id).with_font_scale(scale),
            seed: self.seed,
            banner_words: self.banner_words,
        }
    }
}
