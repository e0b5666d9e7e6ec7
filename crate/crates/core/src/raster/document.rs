use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::glyph::{check_glyphs, draw_word};
use super::{PixelImage, RasterError, Rgb, StylePreset};

/// Vertical padding above and below the question text in a banner.
pub const BANNER_PADDING: usize = 2;

/// Pixel box `[x, x+w) × [y, y+h)` around one rendered word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WordBox {
    pub text: String,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl WordBox {
    pub fn x2(&self) -> usize {
        self.x + self.w
    }

    pub fn y2(&self) -> usize {
        self.y + self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x2() && y >= self.y && y < self.y2()
    }

    pub fn intersects(&self, other: &WordBox) -> bool {
        self.x < other.x2() && other.x < self.x2() && self.y < other.y2() && other.y < self.y2()
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedDocument {
    pub image: PixelImage,
    /// Reading order: left-to-right, top-to-bottom.
    pub words: Vec<WordBox>,
    pub full_text: String,
    pub style: StylePreset,
    pub seed: u64,
    /// Number of leading entries of `words` that belong to an overlaid question banner.
    pub banner_words: usize,
}

impl RenderedDocument {
    /// Byte range of every word inside `full_text`, in word order.
    pub fn word_text_ranges(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::with_capacity(self.words.len());
        let mut cursor = 0;
        for word in &self.words {
            let offset = self.full_text[cursor..]
                .find(word.text.as_str())
                .expect("full_text contains every word in order");
            let start = cursor + offset;
            ranges.push(start..start + word.text.len());
            cursor = start + word.text.len();
        }
        ranges
    }

    /// Checks the structural invariants: boxes inside the image, pairwise
    /// disjoint, and word texts matching `full_text` after whitespace collapse.
    pub fn validate(&self) -> Result<(), String> {
        let (w, h) = (self.image.width(), self.image.height());
        for (i, b) in self.words.iter().enumerate() {
            if b.text.is_empty() || b.text.chars().any(char::is_whitespace) {
                return Err(format!("word {i} has empty or spaced text {:?}", b.text));
            }
            if b.w == 0 || b.h == 0 || b.x2() > w || b.y2() > h {
                return Err(format!("word {i} box {b:?} outside {w}x{h}"));
            }
        }
        for i in 0..self.words.len() {
            for j in i + 1..self.words.len() {
                if self.words[i].intersects(&self.words[j]) {
                    return Err(format!("boxes {i} and {j} overlap"));
                }
            }
        }
        let joined: Vec<&str> = self.words.iter().map(|b| b.text.as_str()).collect();
        let text: Vec<&str> = self.full_text.split_whitespace().collect();
        if joined != text {
            return Err("word list does not match full_text".into());
        }
        Ok(())
    }
}

/// A line of laid-out words: (word, char column) pairs.
pub(crate) type Line = Vec<(String, usize)>;

/// Greedy word wrap on a monospace grid. `max_chars` is the line capacity in
/// glyph cells; words longer than a line are hard-broken into pieces.
pub(crate) fn layout_lines(text: &str, max_chars: usize) -> Vec<Line> {
    debug_assert!(max_chars >= 1);
    let mut lines: Vec<Line> = Vec::new();
    for paragraph in text.split('\n') {
        let mut line: Line = Vec::new();
        let mut used = 0usize;
        for word in paragraph.split(' ').filter(|w| !w.is_empty()) {
            let chars: Vec<char> = word.chars().collect();
            for piece in chars.chunks(max_chars) {
                let piece: String = piece.iter().collect();
                let len = piece.len();
                if line.is_empty() {
                    line.push((piece, 0));
                    used = len;
                } else if used + 1 + len <= max_chars {
                    line.push((piece, used + 1));
                    used += 1 + len;
                } else {
                    lines.push(std::mem::take(&mut line));
                    line.push((piece, 0));
                    used = len;
                }
            }
        }
        lines.push(line);
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

pub(crate) fn lines_text(lines: &[Line]) -> String {
    lines
        .iter()
        .map(|l| l.iter().map(|(w, _)| w.as_str()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Draws laid-out lines with the first cell at `(x0, y0)` and returns their boxes.
pub(crate) fn draw_lines(
    img: &mut PixelImage,
    lines: &[Line],
    x0: usize,
    y0: usize,
    style: &StylePreset,
) -> Vec<WordBox> {
    let (cw, ch) = (style.cell_width(), style.cell_height());
    let mut boxes = Vec::new();
    for (row, line) in lines.iter().enumerate() {
        let y = y0 + row * ch;
        for (word, col) in line {
            let x = x0 + col * cw;
            draw_word(img, word, x, y, style.font_scale, style.text_color);
            boxes.push(WordBox {
                text: word.clone(),
                x,
                y,
                w: word.len() * cw,
                h: ch,
            });
        }
    }
    boxes
}

/// Renders plain text with greedy wrapping at `max_width` pixels. The image
/// is `max_width` wide and exactly as tall as its lines.
pub fn render_text_document(
    text: &str,
    style: &StylePreset,
    max_width: usize,
    seed: u64,
) -> Result<RenderedDocument, RasterError> {
    check_glyphs(text)?;
    let cw = style.cell_width();
    if max_width < cw {
        return Err(RasterError::WidthTooSmall {
            max_width,
            cell: cw,
        });
    }
    let lines = layout_lines(text, max_width / cw);
    if lines.iter().all(|l| l.is_empty()) {
        return Err(RasterError::EmptyText);
    }
    let mut image =
        PixelImage::filled(max_width, lines.len() * style.cell_height(), style.background_color)?;
    let words = draw_lines(&mut image, &lines, 0, 0, style);
    Ok(RenderedDocument {
        image,
        words,
        full_text: lines_text(&lines),
        style: *style,
        seed,
        banner_words: 0,
    })
}

/// Stacks a banner holding `question` on top of `doc`. Original boxes shift
/// down by the banner height and the question becomes the leading line(s)
/// of `full_text`.
pub fn overlay_question_banner(
    doc: &RenderedDocument,
    question: &str,
    style: &StylePreset,
) -> Result<RenderedDocument, RasterError> {
    if question.trim().is_empty() {
        return Err(RasterError::EmptyQuestion);
    }
    check_glyphs(question)?;
    let width = doc.image.width();
    let cw = style.cell_width();
    let available = width.saturating_sub(2 * BANNER_PADDING);
    if available < cw {
        return Err(RasterError::WidthTooSmall {
            max_width: available,
            cell: cw,
        });
    }
    let lines = layout_lines(question, available / cw);
    let banner_h = lines.len() * style.cell_height() + 2 * BANNER_PADDING;

    let mut image = PixelImage::filled(width, banner_h + doc.image.height(), style.background_color)?;
    let mut words = draw_lines(&mut image, &lines, BANNER_PADDING, BANNER_PADDING, style);
    let banner_words = words.len();
    for y in 0..doc.image.height() {
        for x in 0..width {
            image.set(x, y + banner_h, doc.image.get(x, y));
        }
    }
    words.extend(doc.words.iter().map(|b| WordBox {
        y: b.y + banner_h,
        ..b.clone()
    }));
    Ok(RenderedDocument {
        image,
        words,
        full_text: format!("{}\n{}", lines_text(&lines), doc.full_text),
        style: doc.style,
        seed: doc.seed,
        banner_words: banner_words + doc.banner_words,
    })
}

/// Height in pixels of the banner `overlay_question_banner` would add.
pub fn banner_height(doc_width: usize, question: &str, style: &StylePreset) -> usize {
    let available = doc_width.saturating_sub(2 * BANNER_PADDING).max(style.cell_width());
    let lines = layout_lines(question, available / style.cell_width());
    lines.len() * style.cell_height() + 2 * BANNER_PADDING
}

pub(crate) fn validate_spans(spans: &[Range<usize>], n_words: usize) -> Result<(), RasterError> {
    let mut sorted: Vec<&Range<usize>> = spans.iter().collect();
    sorted.sort_by_key(|r| r.start);
    let mut prev_end = 0;
    for (i, span) in sorted.iter().enumerate() {
        if span.start >= span.end || span.end > n_words {
            return Err(RasterError::InvalidSpans(format!(
                "span {}..{} out of range for {n_words} words",
                span.start, span.end
            )));
        }
        if i > 0 && span.start < prev_end {
            return Err(RasterError::InvalidSpans(format!(
                "span {}..{} overlaps a previous span",
                span.start, span.end
            )));
        }
        prev_end = span.end;
    }
    Ok(())
}

/// Paints every word box covered by `spans` with `mask_color`.
pub fn apply_mask_rectangles(
    doc: &RenderedDocument,
    spans: &[Range<usize>],
    mask_color: Rgb,
) -> Result<PixelImage, RasterError> {
    validate_spans(spans, doc.words.len())?;
    let mut image = doc.image.clone();
    for span in spans {
        for b in &doc.words[span.clone()] {
            image.fill_rect(b.x, b.y, b.w, b.h, mask_color);
        }
    }
    Ok(image)
}
