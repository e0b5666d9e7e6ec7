use font8x8::{UnicodeFonts, BASIC_FONTS};

use super::{PixelImage, RasterError, Rgb};

pub const BASE_CELL: usize = 8;

/// Printable ASCII plus space; newline is accepted by the layout but never drawn.
pub fn is_supported(c: char) -> bool {
    c == '\n' || (' '..='~').contains(&c)
}

pub fn check_glyphs(text: &str) -> Result<(), RasterError> {
    match text.chars().find(|&c| !is_supported(c)) {
        Some(c) => Err(RasterError::UnsupportedGlyph {
            codepoint: c as u32,
        }),
        None => Ok(()),
    }
}

/// Draws one glyph with its cell's top-left corner at `(x, y)`.
pub fn draw_glyph(img: &mut PixelImage, c: char, x: usize, y: usize, scale: usize, color: Rgb) {
    let Some(rows) = BASIC_FONTS.get(c) else {
        return;
    };
    for (gy, bits) in rows.iter().enumerate() {
        for gx in 0..BASE_CELL {
            if bits & (1 << gx) != 0 {
                img.fill_rect(x + gx * scale, y + gy * scale, scale, scale, color);
            }
        }
    }
}

pub fn draw_word(img: &mut PixelImage, word: &str, x: usize, y: usize, scale: usize, color: Rgb) {
    let cell = BASE_CELL * scale;
    for (i, c) in word.chars().enumerate() {
        draw_glyph(img, c, x + i * cell, y, scale, color);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_printable_ascii_glyph_exists() {
        for c in '!'..='~' {
            let rows = BASIC_FONTS.get(c).unwrap();
            assert!(rows.iter().any(|&r| r != 0), "glyph {c:?} is blank");
        }
    }

    #[test]
    fn rejects_tab_and_non_ascii() {
        assert_eq!(
            check_glyphs("ok\tno"),
            Err(RasterError::UnsupportedGlyph { codepoint: 9 })
        );
        assert_eq!(
            check_glyphs("café"),
            Err(RasterError::UnsupportedGlyph { codepoint: 0xE9 })
        );
        assert!(check_glyphs("line one\nline ~two~").is_ok());
    }
}
