use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Rgb;

/// Which table rules get drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparatorRule {
    All,
    HorizontalOnly,
    None,
}

/// One of the five table/document looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleId {
    Classic,
    Ledger,
    Night,
    Plain,
    Bold,
}

impl StyleId {
    pub const ALL: [StyleId; 5] = [
        StyleId::Classic,
        StyleId::Ledger,
        StyleId::Night,
        StyleId::Plain,
        StyleId::Bold,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<StyleId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleId::Classic => "classic",
            StyleId::Ledger => "ledger",
            StyleId::Night => "night",
            StyleId::Plain => "plain",
            StyleId::Bold => "bold",
        }
    }

    pub fn parse(s: &str) -> Option<StyleId> {
        if let Ok(i) = s.parse::<usize>() {
            return Self::from_index(i);
        }
        Self::ALL.into_iter().find(|id| id.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StylePreset {
    pub id: StyleId,
    /// Multiplier on the 8×8 base glyph cell.
    pub font_scale: usize,
    pub text_color: Rgb,
    pub background_color: Rgb,
    pub border_color: Rgb,
    pub border_thickness: usize,
    pub cell_padding: usize,
    pub separator_rule: SeparatorRule,
}

impl StylePreset {
    pub fn preset(id: StyleId) -> StylePreset {
        match id {
            StyleId::Classic => StylePreset {
                id,
                font_scale: 1,
                text_color: Rgb(0, 0, 0),
                background_color: Rgb(255, 255, 255),
                border_color: Rgb(40, 40, 40),
                border_thickness: 1,
                cell_padding: 2,
                separator_rule: SeparatorRule::All,
            },
            StyleId::Ledger => StylePreset {
                id,
                font_scale: 1,
                text_color: Rgb(20, 30, 120),
                background_color: Rgb(255, 250, 205),
                border_color: Rgb(170, 140, 60),
                border_thickness: 1,
                cell_padding: 3,
                separator_rule: SeparatorRule::HorizontalOnly,
            },
            StyleId::Night => StylePreset {
                id,
                font_scale: 2,
                text_color: Rgb(240, 240, 240),
                background_color: Rgb(16, 24, 48),
                border_color: Rgb(90, 160, 220),
                border_thickness: 2,
                cell_padding: 2,
                separator_rule: SeparatorRule::All,
            },
            StyleId::Plain => StylePreset {
                id,
                font_scale: 1,
                text_color: Rgb(0, 80, 0),
                background_color: Rgb(235, 235, 235),
                border_color: Rgb(235, 235, 235),
                border_thickness: 0,
                cell_padding: 4,
                separator_rule: SeparatorRule::None,
            },
            StyleId::Bold => StylePreset {
                id,
                font_scale: 2,
                text_color: Rgb(10, 10, 10),
                background_color: Rgb(200, 225, 255),
                border_color: Rgb(180, 30, 30),
                border_thickness: 3,
                cell_padding: 1,
                separator_rule: SeparatorRule::HorizontalOnly,
            },
        }
    }

    pub fn all() -> [StylePreset; 5] {
        StyleId::ALL.map(StylePreset::preset)
    }

    pub fn cell_width(&self) -> usize {
        8 * self.font_scale
    }

    pub fn cell_height(&self) -> usize {
        8 * self.font_scale
    }

    /// Same preset with a different glyph scale.
    pub fn with_font_scale(mut self, font_scale: usize) -> StylePreset {
        self.font_scale = font_scale.max(1);
        self
    }

    /// Seeded uniform choice of preset and font scale in {1, 2, 3}.
    pub fn random(seed: u64) -> StylePreset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let id = StyleId::ALL[rng.random_range(0..StyleId::ALL.len())];
        let scale = rng.random_range(1..=3);
        StylePreset::preset(id).with_font_scale(scale)
    }
}

impl Default for StylePreset {
    fn default() -> Self {
        StylePreset::preset(StyleId::Classic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::MASK_COLOR;
    use std::collections::HashSet;

    #[test]
    fn five_distinct_legible_presets() {
        let presets = StylePreset::all();
        let ids: HashSet<_> = presets.iter().map(|p| p.id).collect();
        assert_eq!(ids.len(), 5);
        for p in presets {
            assert_ne!(p.text_color, p.background_color);
            assert_ne!(p.text_color, MASK_COLOR);
            assert_ne!(p.background_color, MASK_COLOR);
            assert!(p.font_scale >= 1);
        }
    }

    #[test]
    fn parse_by_name_and_index() {
        assert_eq!(StyleId::parse("night"), Some(StyleId::Night));
        assert_eq!(StyleId::parse("4"), Some(StyleId::Bold));
        assert_eq!(StyleId::parse("5"), None);
    }

    #[test]
    fn random_style_covers_scales() {
        let scales: HashSet<_> = (0..200).map(|s| StylePreset::random(s).font_scale).collect();
        assert_eq!(scales, HashSet::from([1, 2, 3]));
        assert_eq!(StylePreset::random(9), StylePreset::random(9));
    }
}
