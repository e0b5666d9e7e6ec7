//! Training-example construction for the four pretraining objectives:
//! masked patch reconstruction, masked document text generation, bounding
//! boxes in both directions and rendered question answering.

use std::ops::Range;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{
    apply_mask_rectangles, overlay_question_banner, PixelImage, RasterError, RenderedDocument,
    StylePreset, WordBox, MASK_COLOR,
};
use crate::tokenizer::{Special, TokenId, Tokenizer, TokenizerError};

pub const DEFAULT_MASK_RATIO: f64 = 0.15;
pub const DEFAULT_PHRASE_RATIO: f64 = 0.15;
pub const MAX_PHRASE_LEN: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("mask would be empty: floor({ratio} * {n_patches}) = 0")]
    EmptyMask { n_patches: usize, ratio: f64 },
    #[error("ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("word index {index} out of range for {n_words} words")]
    InvalidWordIndex { index: usize, n_words: usize },
    #[error("document has no words")]
    NoWords,
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("unparseable box: {0}")]
    UnparseableBox(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskTag {
    Mae,
    Mdtg,
    Rqa,
    Bb,
}

impl TaskTag {
    pub fn special(self) -> Special {
        match self {
            TaskTag::Mae => Special::Mae,
            TaskTag::Mdtg => Special::Mdtg,
            TaskTag::Rqa => Special::Qa,
            TaskTag::Bb => Special::Bb,
        }
    }
}

/// Which loss term a target position feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossRole {
    Ocr,
    Mlm,
    Qa,
    Bb,
    Ignore,
}

impl LossRole {
    pub const SCORED: [LossRole; 4] = [LossRole::Ocr, LossRole::Mlm, LossRole::Qa, LossRole::Bb];

    pub fn name(self) -> &'static str {
        match self {
            LossRole::Ocr => "ocr",
            LossRole::Mlm => "mlm",
            LossRole::Qa => "qa",
            LossRole::Bb => "bb",
            LossRole::Ignore => "ignore",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub task: TaskTag,
    pub image: PixelImage,
    /// Decoder prompt; never scored.
    pub prefix_tokens: Vec<TokenId>,
    /// Ends with the end token for generative tasks; empty for MAE.
    pub target_tokens: Vec<TokenId>,
    pub roles: Vec<LossRole>,
    /// Masked patch indices (MAE only).
    pub mae_mask: Vec<usize>,
    pub seed: u64,
}

impl TrainingExample {
    pub fn validate(&self) -> Result<(), String> {
        if self.roles.len() != self.target_tokens.len() {
            return Err(format!(
                "{} roles for {} target tokens",
                self.roles.len(),
                self.target_tokens.len()
            ));
        }
        match self.task {
            TaskTag::Mae if self.mae_mask.is_empty() || !self.target_tokens.is_empty() => {
                Err("MAE example needs a mask and no token targets".into())
            }
            TaskTag::Mae => Ok(()),
            _ if !self.mae_mask.is_empty() => Err("generative example carries an MAE mask".into()),
            _ if self.prefix_tokens.is_empty() => Err("generative example needs a prefix".into()),
            _ => Ok(()),
        }
    }
}

/// `floor(ratio * n_patches)` distinct patch indices, sorted ascending.
pub fn sample_patch_mask(n_patches: usize, ratio: f64, seed: u64) -> Result<Vec<usize>, TargetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TargetError::InvalidRatio(ratio));
    }
    let count = (ratio * n_patches as f64).floor() as usize;
    if count == 0 {
        return Err(TargetError::EmptyMask { n_patches, ratio });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n_patches, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

pub fn build_mae_example(
    image: &PixelImage,
    n_patches: usize,
    ratio: f64,
    seed: u64,
) -> Result<TrainingExample, TargetError> {
    Ok(TrainingExample {
        task: TaskTag::Mae,
        image: image.clone(),
        prefix_tokens: vec![Special::Mae.id()],
        target_tokens: Vec::new(),
        roles: Vec::new(),
        mae_mask: sample_patch_mask(n_patches, ratio, seed)?,
        seed,
    })
}

/// Disjoint runs of 1–3 consecutive words covering `round(ratio * n_words)`
/// words in total, sorted by start.
pub fn sample_phrase_spans(
    doc: &RenderedDocument,
    word_ratio: f64,
    seed: u64,
) -> Result<Vec<Range<usize>>, TargetError> {
    let n = doc.words.len();
    if n == 0 {
        return Err(TargetError::NoWords);
    }
    if !(0.0..=1.0).contains(&word_ratio) {
        return Err(TargetError::InvalidRatio(word_ratio));
    }
    let mut remaining = ((word_ratio * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = vec![false; n];
    let mut spans = Vec::new();
    let mut attempts = 20 * n + 100;
    while remaining > 0 && attempts > 0 {
        attempts -= 1;
        let len = rng.random_range(1..=MAX_PHRASE_LEN).min(remaining).min(n);
        let start = rng.random_range(0..=n - len);
        if covered[start..start + len].iter().any(|&c| c) {
            continue;
        }
        covered[start..start + len].fill(true);
        spans.push(start..start + len);
        remaining -= len;
    }
    // Fragmented leftovers: fill single free words left to right.
    for (i, c) in covered.iter_mut().enumerate() {
        if remaining == 0 {
            break;
        }
        if !*c {
            *c = true;
            spans.push(i..i + 1);
            remaining -= 1;
        }
    }
    spans.sort_by_key(|r| r.start);
    Ok(spans)
}

/// Paints the phrases out of the image and asks for the whole text back.
/// Bytes of masked words carry MLM, everything else (separators and the end
/// token included) carries OCR.
pub fn build_mdtg_example(
    doc: &RenderedDocument,
    spans: &[Range<usize>],
    tokenizer: &Tokenizer,
) -> Result<TrainingExample, TargetError> {
    let image = apply_mask_rectangles(doc, spans, MASK_COLOR)?;
    let mut target_tokens = tokenizer.encode(&doc.full_text);
    let mut roles = vec![LossRole::Ocr; target_tokens.len()];
    let ranges = doc.word_text_ranges();
    for span in spans {
        for r in &ranges[span.clone()] {
            roles[r.clone()].fill(LossRole::Mlm);
        }
    }
    target_tokens.push(tokenizer.end());
    roles.push(LossRole::Ocr);
    Ok(TrainingExample {
        task: TaskTag::Mdtg,
        image,
        prefix_tokens: vec![Special::Mdtg.id()],
        target_tokens,
        roles,
        mae_mask: Vec::new(),
        seed: doc.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxDirection {
    TextToBox,
    BoxToText,
}

impl BoxDirection {
    pub fn sample(rng: &mut impl Rng) -> Self {
        if rng.random_bool(0.5) {
            BoxDirection::TextToBox
        } else {
            BoxDirection::BoxToText
        }
    }
}

/// Integer corner coordinates `(x1, y1, x2, y2)` with `x2 = x + w`, `y2 = y + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxCoords {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl BoxCoords {
    pub fn of(b: &WordBox) -> Self {
        BoxCoords {
            x1: b.x,
            y1: b.y,
            x2: b.x2(),
            y2: b.y2(),
        }
    }

    pub fn to_text(self) -> String {
        format!("{} {} {} {}", self.x1, self.y1, self.x2, self.y2)
    }
}

fn bbox_example(
    doc: &RenderedDocument,
    text: &str,
    coords: BoxCoords,
    direction: BoxDirection,
    tokenizer: &Tokenizer,
) -> TrainingExample {
    let (prompt, answer) = match direction {
        BoxDirection::TextToBox => (text.to_string(), coords.to_text()),
        BoxDirection::BoxToText => (coords.to_text(), text.to_string()),
    };
    let mut prefix_tokens = vec![Special::Bb.id()];
    prefix_tokens.extend(tokenizer.encode(&prompt));
    let mut target_tokens = tokenizer.encode(&answer);
    target_tokens.push(tokenizer.end());
    TrainingExample {
        task: TaskTag::Bb,
        image: doc.image.clone(),
        prefix_tokens,
        roles: vec![LossRole::Bb; target_tokens.len()],
        target_tokens,
        mae_mask: Vec::new(),
        seed: doc.seed,
    }
}

/// Word ↔ box supervision in the rendered image's pixel frame.
pub fn serialize_bbox_example(
    doc: &RenderedDocument,
    word_index: usize,
    direction: BoxDirection,
    tokenizer: &Tokenizer,
) -> Result<TrainingExample, TargetError> {
    let word = doc.words.get(word_index).ok_or(TargetError::InvalidWordIndex {
        index: word_index,
        n_words: doc.words.len(),
    })?;
    Ok(bbox_example(doc, &word.text, BoxCoords::of(word), direction, tokenizer))
}

/// Text-to-box supervision for a phrase; its box is the union of the member
/// word boxes.
pub fn serialize_phrase_box_example(
    doc: &RenderedDocument,
    words: Range<usize>,
    tokenizer: &Tokenizer,
) -> Result<TrainingExample, TargetError> {
    crate::raster::validate_spans(std::slice::from_ref(&words), doc.words.len())?;
    let members = &doc.words[words];
    let coords = BoxCoords {
        x1: members.iter().map(|b| b.x).min().unwrap_or(0),
        y1: members.iter().map(|b| b.y).min().unwrap_or(0),
        x2: members.iter().map(|b| b.x2()).max().unwrap_or(0),
        y2: members.iter().map(|b| b.y2()).max().unwrap_or(0),
    };
    let text = members.iter().map(|b| b.text.as_str()).collect::<Vec<_>>().join(" ");
    Ok(bbox_example(doc, &text, coords, BoxDirection::TextToBox, tokenizer))
}

/// Reads `x1 y1 x2 y2` back from decoder output. Anything from the first end
/// token on is ignored.
pub fn parse_bbox_prediction(tokens: &[TokenId], tokenizer: &Tokenizer) -> Result<BoxCoords, TargetError> {
    let end = tokens.iter().position(|&t| t == tokenizer.end()).unwrap_or(tokens.len());
    let body = &tokens[..end];
    if body.iter().any(|&t| !tokenizer.is_byte(t)) {
        return Err(TargetError::UnparseableBox("special token in output".into()));
    }
    let text = tokenizer.decode(body)?;
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(TargetError::UnparseableBox(format!("expected 4 numbers, got {:?}", text)));
    }
    let mut v = [0usize; 4];
    for (slot, f) in v.iter_mut().zip(&fields) {
        if !f.bytes().all(|b| b.is_ascii_digit()) {
            return Err(TargetError::UnparseableBox(format!("not a non-negative integer: {f:?}")));
        }
        *slot = f
            .parse()
            .map_err(|_| TargetError::UnparseableBox(format!("number out of range: {f:?}")))?;
    }
    let [x1, y1, x2, y2] = v;
    if x2 <= x1 || y2 <= y1 {
        return Err(TargetError::UnparseableBox(format!("degenerate box {text:?}")));
    }
    Ok(BoxCoords { x1, y1, x2, y2 })
}

/// Question rendered as a banner over the document and repeated as the
/// decoder prefix; the answer is the target.
pub fn build_rqa_example(
    doc: &RenderedDocument,
    question: &str,
    answer: &str,
    style: &StylePreset,
    tokenizer: &Tokenizer,
) -> Result<TrainingExample, TargetError> {
    if question.trim().is_empty() {
        return Err(TargetError::EmptyField("question"));
    }
    if answer.is_empty() {
        return Err(TargetError::EmptyField("answer"));
    }
    let overlaid = overlay_question_banner(doc, question, style)?;
    let mut prefix_tokens = vec![Special::Qa.id()];
    prefix_tokens.extend(tokenizer.encode(question));
    let mut target_tokens = tokenizer.encode(answer);
    target_tokens.push(tokenizer.end());
    Ok(TrainingExample {
        task: TaskTag::Rqa,
        image: overlaid.image,
        prefix_tokens,
        roles: vec![LossRole::Qa; target_tokens.len()],
        target_tokens,
        mae_mask: Vec::new(),
        seed: doc.seed,
    })
}

/// Run-length encoding of a role sequence.
pub fn roles_to_runs(roles: &[LossRole]) -> Vec<(LossRole, usize)> {
    let mut runs: Vec<(LossRole, usize)> = Vec::new();
    for &r in roles {
        match runs.last_mut() {
            Some((last, n)) if *last == r => *n += 1,
            _ => runs.push((r, 1)),
        }
    }
    runs
}

pub fn runs_to_roles(runs: &[(LossRole, usize)]) -> Vec<LossRole> {
    runs.iter().flat_map(|&(r, n)| std::iter::repeat_n(r, n)).collect()
}

/// One JSONL line describing a serialized training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub task_tag: TaskTag,
    pub image_path: String,
    pub prefix_text: String,
    pub target_text: String,
    pub roles: Vec<(LossRole, usize)>,
    pub mae_mask: Vec<usize>,
    /// `[rows, cols]` of the patch grid the MAE mask indexes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    pub seed: u64,
}

impl ExampleRecord {
    pub fn new(ex: &TrainingExample, image_path: String, tokenizer: &Tokenizer) -> Result<Self, TargetError> {
        Ok(ExampleRecord {
            task_tag: ex.task,
            image_path,
            prefix_text: tokenizer.decode(&ex.prefix_tokens)?,
            target_text: tokenizer.decode(&ex.target_tokens)?,
            roles: roles_to_runs(&ex.roles),
            mae_mask: ex.mae_mask.clone(),
            grid: None,
            seed: ex.seed,
        })
    }
}
