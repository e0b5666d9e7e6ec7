//! Image-to-patch conversion: fixed square grids, variable-resolution grids
//! snapped to even powers of two under a patch budget, bilinear resizing and
//! fixed sinusoidal position embeddings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{PixelImage, Rgb};

pub const PATCH_PX: usize = 14;
pub const PATCH_VALUES: usize = PATCH_PX * PATCH_PX * 3;
pub const MAX_PATCHES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("budget too small: {budget} patches cannot hold a 1x{ratio} grid")]
    BudgetTooSmall { budget: usize, ratio: usize },
    #[error("invalid budget {0} (must be 1..={MAX_PATCHES})")]
    InvalidBudget(usize),
    #[error("invalid grid {rows}x{cols}: {reason}")]
    InvalidGrid { rows: usize, cols: usize, reason: String },
    #[error("image is {actual_w}x{actual_h}, grid expects {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("embedding dimension must be even and positive, got {0}")]
    OddDimension(usize),
    #[error("patch data length {actual} does not match {expected}")]
    DataLength { expected: usize, actual: usize },
}

/// Long/short ratios a grid may take: 4^k up to the patch cap.
pub const ASPECT_RATIOS: [usize; 7] = [1, 4, 16, 64, 256, 1024, 4096];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self, PatchError> {
        let invalid = |reason: &str| PatchError::InvalidGrid {
            rows,
            cols,
            reason: reason.into(),
        };
        if rows == 0 || cols == 0 {
            return Err(invalid("empty grid"));
        }
        if rows * cols > MAX_PATCHES {
            return Err(invalid("exceeds the patch cap"));
        }
        let (long, short) = (rows.max(cols), rows.min(cols));
        if long % short != 0 || !ASPECT_RATIOS.contains(&(long / short)) {
            return Err(invalid("aspect ratio is not an even power of two"));
        }
        Ok(PatchGrid { rows, cols })
    }

    /// Square grid for a `side_px`-pixel fixed resolution (e.g. 224 or 896).
    pub fn fixed(side_px: usize) -> Result<Self, PatchError> {
        if !side_px.is_multiple_of(PATCH_PX) {
            return Err(PatchError::InvalidGrid {
                rows: side_px,
                cols: side_px,
                reason: format!("{side_px} px is not a multiple of {PATCH_PX}"),
            });
        }
        Self::new(side_px / PATCH_PX, side_px / PATCH_PX)
    }

    pub fn num_patches(&self) -> usize {
        self.rows * self.cols
    }

    pub fn target_width(&self) -> usize {
        self.cols * PATCH_PX
    }

    pub fn target_height(&self) -> usize {
        self.rows * PATCH_PX
    }
}

/// Picks the largest grid within `budget` whose long/short ratio is the even
/// power of two nearest (in log space, ties to the smaller) to the source
/// aspect ratio. Portrait sources yield portrait grids.
pub fn choose_grid(src_width: usize, src_height: usize, budget: usize) -> Result<PatchGrid, PatchError> {
    if budget == 0 || budget > MAX_PATCHES {
        return Err(PatchError::InvalidBudget(budget));
    }
    if src_width == 0 || src_height == 0 {
        return Err(PatchError::InvalidGrid {
            rows: src_height,
            cols: src_width,
            reason: "empty source image".into(),
        });
    }
    let long = src_width.max(src_height) as u128;
    let short = src_width.min(src_height) as u128;
    // The log-space midpoint between 4^k and 4^(k+1) is 2·4^k.
    let mut ratio: u128 = 1;
    while long > 2 * ratio * short {
        ratio *= 4;
    }
    let ratio = usize::try_from(ratio).unwrap_or(usize::MAX);
    if ratio > budget {
        return Err(PatchError::BudgetTooSmall { budget, ratio });
    }
    let short_side = (budget / ratio).isqrt();
    let long_side = ratio * short_side;
    if src_width >= src_height {
        PatchGrid::new(short_side, long_side)
    } else {
        PatchGrid::new(long_side, short_side)
    }
}

/// Separable bilinear resize with half-pixel centres, rounding once at the end.
pub fn resize_bilinear(img: &PixelImage, target_w: usize, target_h: usize) -> PixelImage {
    let (sw, sh) = (img.width(), img.height());
    if (sw, sh) == (target_w, target_h) {
        return img.clone();
    }
    let taps = |src: usize, dst: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = taps(sw, target_w);
    let ys = taps(sh, target_h);
    let mut pixels = Vec::with_capacity(target_w * target_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let sample = |x: usize, y: usize| img.get(x, y).channels();
            let (p00, p01, p10, p11) = (sample(x0, y0), sample(x1, y0), sample(x0, y1), sample(x1, y1));
            let mut out = [0u8; 3];
            for c in 0..3 {
                let top = (1.0 - fx) * p00[c] as f64 + fx * p01[c] as f64;
                let bottom = (1.0 - fx) * p10[c] as f64 + fx * p11[c] as f64;
                let v = (1.0 - fy) * top + fy * bottom;
                out[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            pixels.push(Rgb(out[0], out[1], out[2]));
        }
    }
    PixelImage::from_pixels(target_w, target_h, pixels).expect("target dimensions are positive")
}

/// Flattened patches in row-major patch order; each patch holds 14×14 RGB
/// values in [0, 1], pixel-row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub grid: PatchGrid,
    data: Vec<f64>,
}

impl PatchSequence {
    pub fn from_data(grid: PatchGrid, data: Vec<f64>) -> Result<Self, PatchError> {
        let expected = grid.num_patches() * PATCH_VALUES;
        if data.len() != expected {
            return Err(PatchError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(PatchSequence { grid, data })
    }

    pub fn len(&self) -> usize {
        self.grid.num_patches()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.data[i * PATCH_VALUES..(i + 1) * PATCH_VALUES]
    }

    pub fn patch_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * PATCH_VALUES..(i + 1) * PATCH_VALUES]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Position embeddings for this sequence at model width `d`.
    pub fn position_embeddings(&self, d: usize) -> Result<Vec<Vec<f64>>, PatchError> {
        sinusoidal_pos_emb(self.len(), d)
    }
}

pub fn patchify(img: &PixelImage, grid: PatchGrid) -> Result<PatchSequence, PatchError> {
    if img.width() != grid.target_width() || img.height() != grid.target_height() {
        return Err(PatchError::DimensionMismatch {
            expected_w: grid.target_width(),
            expected_h: grid.target_height(),
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    let mut data = Vec::with_capacity(grid.num_patches() * PATCH_VALUES);
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            for y in pr * PATCH_PX..(pr + 1) * PATCH_PX {
                for x in pc * PATCH_PX..(pc + 1) * PATCH_PX {
                    data.extend(img.get(x, y).channels().map(|v| v as f64 / 255.0));
                }
            }
        }
    }
    PatchSequence::from_data(grid, data)
}

/// Resizes to the grid's target size, then patchifies.
pub fn resize_and_patchify(img: &PixelImage, grid: PatchGrid) -> PatchSequence {
    let resized = resize_bilinear(img, grid.target_width(), grid.target_height());
    patchify(&resized, grid).expect("resized image matches the grid")
}

pub fn unpatchify(seq: &PatchSequence) -> PixelImage {
    let grid = seq.grid;
    let width = grid.target_width();
    let mut pixels = vec![Rgb::BLACK; width * grid.target_height()];
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            let patch = seq.patch(pr * grid.cols + pc);
            for (k, rgb) in patch.chunks_exact(3).enumerate() {
                let (dy, dx) = (k / PATCH_PX, k % PATCH_PX);
                let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                pixels[(pr * PATCH_PX + dy) * width + pc * PATCH_PX + dx] = Rgb(q(rgb[0]), q(rgb[1]), q(rgb[2]));
            }
        }
    }
    PixelImage::from_pixels(width, grid.target_height(), pixels).expect("grid is non-empty")
}

/// `pe[pos][2i] = sin(pos / 10000^(2i/d))`, `pe[pos][2i+1] = cos(...)`.
pub fn sinusoidal_pos_emb(n_positions: usize, d: usize) -> Result<Vec<Vec<f64>>, PatchError> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(PatchError::OddDimension(d));
    }
    let freqs: Vec<f64> = (0..d / 2)
        .map(|i| 10000f64.powf(-((2 * i) as f64) / d as f64))
        .collect();
    Ok((0..n_positions)
        .map(|pos| {
            freqs
                .iter()
                .flat_map(|f| {
                    let angle = pos as f64 * f;
                    [angle.sin(), angle.cos()]
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(w: usize, h: usize, seed: u64) -> PixelImage {
        let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let bytes: Vec<u8> = (0..w * h * 3)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 24) as u8
            })
            .collect();
        PixelImage::from_rgb_bytes(w, h, &bytes).unwrap()
    }

    /// Exhaustive search for the maximal grid with ratio `s` in the budget.
    fn best_grid_by_enumeration(s: usize, budget: usize) -> Option<(usize, usize)> {
        (1..=budget)
            .filter(|r| r * r * s <= budget)
            .map(|r| (r, r * s))
            .max_by_key(|&(r, c)| r * c)
    }

    #[test]
    fn square_896() {
        let g = choose_grid(896, 896, 4096).unwrap();
        assert_eq!((g.rows, g.cols, g.num_patches()), (64, 64, 4096));
        assert_eq!((g.target_width(), g.target_height()), (896, 896));
        assert_eq!(PatchGrid::fixed(896).unwrap(), g);
    }

    #[test]
    fn landscape_and_portrait() {
        assert_eq!(best_grid_by_enumeration(4, 4096), Some((32, 128)));
        let g = choose_grid(2000, 500, 4096).unwrap();
        assert_eq!((g.rows, g.cols), (32, 128));
        assert_eq!((g.target_width(), g.target_height()), (1792, 448));
        let g = choose_grid(500, 2000, 4096).unwrap();
        assert_eq!((g.rows, g.cols), (128, 32));
    }

    #[test]
    fn snapping_ties_toward_smaller_ratio() {
        // Ratio exactly 2 sits on the log midpoint between 1 and 4.
        assert_eq!(choose_grid(200, 100, 4096).unwrap().cols, 64);
        assert_eq!(choose_grid(201, 100, 4096).unwrap().cols, 128);
        assert_eq!(choose_grid(800, 100, 4096).unwrap().cols, 128);
        assert_eq!(choose_grid(801, 100, 4096).unwrap().cols, 256);
    }

    #[test]
    fn budget_errors() {
        assert_eq!(
            choose_grid(100, 1, 8),
            Err(PatchError::BudgetTooSmall { budget: 8, ratio: 64 })
        );
        assert_eq!(choose_grid(10, 10, 0), Err(PatchError::InvalidBudget(0)));
        assert_eq!(choose_grid(10, 10, 5000), Err(PatchError::InvalidBudget(5000)));
        assert_eq!(choose_grid(10, 10, 1).unwrap().num_patches(), 1);
    }

    #[test]
    fn grid_validation() {
        assert!(PatchGrid::new(2, 4).is_err());
        assert!(PatchGrid::new(65, 65).is_err());
        assert!(PatchGrid::new(8, 32).is_ok());
        assert!(PatchGrid::fixed(100).is_err());
        assert_eq!(PatchGrid::fixed(224).unwrap().num_patches(), 256);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = noise(17, 9, 1);
        assert_eq!(resize_bilinear(&img, 17, 9), img);
        let flat = PixelImage::filled(5, 7, Rgb(13, 200, 77)).unwrap();
        for (w, h) in [(1, 1), (3, 11), (40, 2)] {
            let out = resize_bilinear(&flat, w, h);
            assert!(out.pixels().iter().all(|&p| p == Rgb(13, 200, 77)));
        }
    }

    #[test]
    fn resize_upsample_ramp() {
        let img = PixelImage::from_pixels(2, 1, vec![Rgb(0, 0, 0), Rgb(255, 255, 255)]).unwrap();
        let out = resize_bilinear(&img, 4, 1);
        // Sample points -0.25, 0.25, 0.75, 1.25 clamp to 0, 0.25, 0.75, 1.
        let grays: Vec<u8> = out.pixels().iter().map(|p| p.0).collect();
        assert_eq!(grays, [0, 64, 191, 255]);
        assert!(grays.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn patch_counts() {
        let g = PatchGrid::fixed(224).unwrap();
        let seq = patchify(&noise(224, 224, 3), g).unwrap();
        assert_eq!(seq.len(), 256);
        let g = PatchGrid::fixed(896).unwrap();
        assert_eq!(patchify(&noise(896, 896, 3), g).unwrap().len(), 4096);
        assert!(matches!(patchify(&noise(10, 10, 0), g), Err(PatchError::DimensionMismatch { .. })));
    }

    #[test]
    fn tiles_partition_the_image() {
        let g = PatchGrid::new(2, 8).unwrap();
        let img = noise(g.target_width(), g.target_height(), 5);
        let seq = patchify(&img, g).unwrap();
        // Patch (1, 3), pixel (dy=4, dx=9) comes from image (x=3*14+9, y=14+4).
        let p = seq.patch(8 + 3);
        let k = (4 * PATCH_PX + 9) * 3;
        let px = img.get(3 * 14 + 9, 14 + 4);
        assert_eq!(p[k], px.0 as f64 / 255.0);
        assert_eq!(seq.data().len(), g.target_width() * g.target_height() * 3);
    }

    #[test]
    fn unpatchify_edge_cases() {
        let g = PatchGrid::new(2, 2).unwrap();
        let zeros = PatchSequence::from_data(g, vec![0.0; 4 * PATCH_VALUES]).unwrap();
        assert!(unpatchify(&zeros).pixels().iter().all(|&p| p == Rgb::BLACK));

        let img = noise(28, 28, 9);
        let mut seq = patchify(&img, g).unwrap();
        for v in seq.patch_mut(2) {
            *v = 1.0 - *v;
        }
        let out = unpatchify(&seq);
        let mut diffs = 0;
        for y in 0..28 {
            for x in 0..28 {
                let (a, b) = (img.get(x, y).channels(), out.get(x, y).channels());
                for c in 0..3 {
                    if a[c] != b[c] {
                        diffs += 1;
                        assert!(y >= 14 && x < 14, "diff outside patch 2 at ({x},{y})");
                    }
                }
            }
        }
        assert!(diffs > 0 && diffs <= PATCH_VALUES);
    }

    #[test]
    fn position_embeddings() {
        let pe = sinusoidal_pos_emb(4096, 16).unwrap();
        for (i, v) in pe[0].iter().enumerate() {
            assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!(pe.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        for d in [2, 8, 64] {
            let pe = sinusoidal_pos_emb(2, d).unwrap();
            assert!((pe[1][0] - 0.841_470_984_807_896_5).abs() < 1e-9);
        }
        assert_eq!(sinusoidal_pos_emb(3, 5), Err(PatchError::OddDimension(5)));
    }

    #[test]
    fn position_embeddings_injective() {
        let pe = sinusoidal_pos_emb(4096, 4).unwrap();
        let mut keys: Vec<[u64; 4]> = pe
            .iter()
            .map(|v| [v[0].to_bits(), v[1].to_bits(), v[2].to_bits(), v[3].to_bits()])
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 4096);
        // Also separated by a margin, not merely bitwise distinct.
        let min_gap = (0..4096)
            .flat_map(|i| (i + 1..4096).map(move |j| (i, j)))
            .step_by(97)
            .map(|(i, j)| pe[i].iter().zip(&pe[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap > 1e-8);
    }

    proptest! {
        #[test]
        fn choose_grid_is_maximal(w in 1usize..5000, h in 1usize..5000, budget in 1usize..=4096) {
            match choose_grid(w, h, budget) {
                Ok(g) => {
                    let (long, short) = (g.rows.max(g.cols), g.rows.min(g.cols));
                    let s = long / short;
                    prop_assert!(g.num_patches() <= budget);
                    prop_assert_eq!(long, s * short);
                    prop_assert_eq!(Some((short, long)), best_grid_by_enumeration(s, budget));
                    prop_assert!(g.rows == g.cols || (w >= h) == (g.cols >= g.rows));
                }
                Err(PatchError::BudgetTooSmall { ratio, .. }) => prop_assert!(ratio > budget),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn patch_round_trip(rows in 1usize..4, k in 0usize..2, seed in any::<u64>()) {
            let g = PatchGrid::new(rows, rows * [1, 4][k]).unwrap();
            let img = noise(g.target_width(), g.target_height(), seed);
            prop_assert_eq!(unpatchify(&patchify(&img, g).unwrap()), img);
        }
    }
}
