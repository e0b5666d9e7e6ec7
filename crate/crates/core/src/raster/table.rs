use super::document::{draw_lines, layout_lines, lines_text, Line};
use super::glyph::check_glyphs;
use super::{PixelImage, RasterError, RenderedDocument, SeparatorRule, StylePreset};
use crate::patchify::{MAX_PATCHES, PATCH_PX};
use crate::tables::TableSpec;

/// Largest pixel area a table may occupy at font scale 1 without losing
/// resolution when resized into the patch budget.
pub const MAX_TABLE_AREA: usize = MAX_PATCHES * PATCH_PX * PATCH_PX;

struct Geometry {
    col_widths: Vec<usize>,
    row_height: usize,
    caption_height: usize,
    grid_width: usize,
    grid_height: usize,
    width: usize,
}

fn normalize(cell: &str) -> String {
    cell.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn geometry(table: &TableSpec, style: &StylePreset) -> Geometry {
    let (cw, ch) = (style.cell_width(), style.cell_height());
    let (b, p) = (style.border_thickness, style.cell_padding);
    let mut col_widths = vec![0usize; table.n_cols()];
    for row in std::iter::once(&table.header).chain(table.rows.iter()) {
        for (j, cell) in row.iter().enumerate() {
            col_widths[j] = col_widths[j].max(normalize(cell).chars().count() * cw + 2 * p);
        }
    }
    let row_height = ch + 2 * p;
    let grid_width = b + col_widths.iter().map(|w| w + b).sum::<usize>();
    let grid_height = b + (table.n_rows() + 1) * (row_height + b);
    let (caption_height, caption_width) = match &table.caption {
        Some(c) => (ch + 2 * p, normalize(c).chars().count() * cw + 2 * p),
        None => (0, 0),
    };
    Geometry {
        col_widths,
        row_height,
        caption_height,
        grid_width,
        grid_height,
        width: grid_width.max(caption_width),
    }
}

/// Renders `table` as a grid: caption line on top (when present), then the
/// header row and the data rows. Column width is the widest cell text plus
/// padding on both sides; rules follow the style's separator setting.
pub fn render_table_image(
    table: &TableSpec,
    style: &StylePreset,
    seed: u64,
) -> Result<RenderedDocument, RasterError> {
    for cell in table.all_text() {
        check_glyphs(cell)?;
    }
    let min = geometry(table, &style.with_font_scale(1));
    let min_height = min.caption_height + min.grid_height;
    if min.width * min_height > MAX_TABLE_AREA {
        return Err(RasterError::TableOverflow {
            width: min.width,
            height: min_height,
        });
    }

    let g = geometry(table, style);
    let (b, p) = (style.border_thickness, style.cell_padding);
    let height = g.caption_height + g.grid_height;
    let mut image = PixelImage::filled(g.width, height, style.background_color)?;
    let mut words = Vec::new();
    let mut text_lines: Vec<String> = Vec::new();

    if let Some(caption) = &table.caption {
        let lines = single_line(caption);
        words.extend(draw_lines(&mut image, &lines, p, p, style));
        text_lines.push(lines_text(&lines));
    }

    let top = g.caption_height;
    if b > 0 && style.separator_rule != SeparatorRule::None {
        for r in 0..=table.n_rows() + 1 {
            let y = top + r * (g.row_height + b);
            image.fill_rect(0, y, g.grid_width, b, style.border_color);
        }
        if style.separator_rule == SeparatorRule::All {
            let mut x = 0;
            for j in 0..=table.n_cols() {
                image.fill_rect(x, top, b, g.grid_height, style.border_color);
                if j < table.n_cols() {
                    x += b + g.col_widths[j];
                }
            }
        }
    }

    for (r, row) in std::iter::once(&table.header).chain(table.rows.iter()).enumerate() {
        let y = top + b + r * (g.row_height + b) + p;
        let mut x = b;
        let mut row_words: Vec<String> = Vec::new();
        for (j, cell) in row.iter().enumerate() {
            let lines = single_line(cell);
            words.extend(draw_lines(&mut image, &lines, x + p, y, style));
            let text = lines_text(&lines);
            if !text.is_empty() {
                row_words.push(text);
            }
            x += g.col_widths[j] + b;
        }
        text_lines.push(row_words.join(" "));
    }

    Ok(RenderedDocument {
        image,
        words,
        full_text: text_lines.join("\n"),
        style: *style,
        seed,
        banner_words: 0,
    })
}

fn single_line(text: &str) -> Vec<Line> {
    let n = text.chars().count().max(1);
    let mut lines = layout_lines(text, n);
    lines.truncate(1);
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::StyleId;

    fn tiny() -> TableSpec {
        TableSpec::new(None, vec!["A".into()], vec![vec!["x".into()]]).unwrap()
    }

    fn fruit(caption: Option<&str>) -> TableSpec {
        TableSpec::new(
            caption.map(String::from),
            vec!["Fruit".into(), "Price".into()],
            vec![
                vec!["Mangoes".into(), "3".into()],
                vec!["Apples".into(), "2".into()],
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_by_one_layout_arithmetic() {
        let style = StylePreset::preset(StyleId::Classic);
        assert_eq!((style.cell_padding, style.border_thickness), (2, 1));
        let doc = render_table_image(&tiny(), &style, 0).unwrap();
        // 8 px glyph + 2×2 padding, one 1-px rule on each side.
        assert_eq!(doc.image.width(), 12 + 2);
        assert_eq!(doc.image.height(), 1 + 2 * (12 + 1));
        let x = &doc.words[1];
        assert_eq!((x.text.as_str(), x.x, x.y), ("x", 3, 1 + 12 + 1 + 2));
        assert_eq!(doc.image.get(0, 5), style.border_color);
        assert_eq!(doc.image.get(13, 5), style.border_color);
    }

    #[test]
    fn presets_differ_only_in_pixels() {
        let t = fruit(Some("Prices"));
        let docs: Vec<_> = StylePreset::all()
            .iter()
            .map(|s| render_table_image(&t, s, 1).unwrap())
            .collect();
        for i in 0..docs.len() {
            docs[i].validate().unwrap();
            assert_eq!(docs[i].full_text, docs[0].full_text);
            let texts = |d: &RenderedDocument| d.words.iter().map(|w| w.text.clone()).collect::<Vec<_>>();
            assert_eq!(texts(&docs[i]), texts(&docs[0]));
            for j in i + 1..docs.len() {
                assert_ne!(docs[i].image, docs[j].image);
            }
        }
    }

    #[test]
    fn caption_comes_first() {
        let doc = render_table_image(&fruit(Some("Prices")), &StylePreset::default(), 0).unwrap();
        assert_eq!(doc.words[0].text, "Prices");
        assert!(doc.words[1..].iter().all(|w| w.y > doc.words[0].y));
        assert_eq!(doc.full_text, "Prices\nFruit Price\nMangoes 3\nApples 2");
    }

    #[test]
    fn only_glyphs_and_rules_are_painted() {
        for style in StylePreset::all() {
            let doc = render_table_image(&fruit(Some("Prices here")), &style, 0).unwrap();
            for y in 0..doc.image.height() {
                for x in 0..doc.image.width() {
                    let px = doc.image.get(x, y);
                    let owners = doc.words.iter().filter(|b| b.contains(x, y)).count();
                    if px == style.text_color {
                        assert_eq!(owners, 1);
                    } else if px == style.border_color && px != style.background_color {
                        assert_eq!(owners, 0);
                    } else {
                        assert_eq!(px, style.background_color);
                    }
                }
            }
        }
    }

    #[test]
    fn wide_table_overflows() {
        let cell = "W".repeat(60);
        let header: Vec<String> = (0..40).map(|i| format!("c{i}")).collect();
        let rows = vec![vec![cell; 40]; 3];
        let t = TableSpec::new(None, header, rows).unwrap();
        assert!(matches!(
            render_table_image(&t, &StylePreset::default(), 0),
            Err(RasterError::TableOverflow { .. })
        ));
    }

    #[test]
    fn multi_word_cells_are_split() {
        let t = TableSpec::new(None, vec!["Name".into()], vec![vec!["New York".into()]]).unwrap();
        let doc = render_table_image(&t, &StylePreset::default(), 0).unwrap();
        let texts: Vec<_> = doc.words.iter().map(|w| w.text.as_str()).collect();
        assert_eq!(texts, ["Name", "New", "York"]);
        doc.validate().unwrap();
    }
}
