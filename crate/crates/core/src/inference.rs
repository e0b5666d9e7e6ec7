//! Question answering with a trained model.

use crate::model::{generate_greedy, Parameters};
use crate::patchify::{resize_and_patchify, PatchGrid, PatchSequence};
use crate::raster::{overlay_question_banner, RenderedDocument};
use crate::tokenizer::{Special, TokenId, Tokenizer};
use crate::Result;

/// Longest answer decoded by [`answer_question`].
pub const MAX_ANSWER_TOKENS: usize = 48;

/// The question rendered over the document, patchified to `grid`, and the
/// matching decoder prefix. Mirrors the rendered-QA training format.
pub fn rqa_input(doc: &RenderedDocument, question: &str, grid: PatchGrid) -> Result<(PatchSequence, Vec<TokenId>)> {
    let overlaid = overlay_question_banner(doc, question, &doc.style)?;
    let mut prefix = vec![Special::Qa.id()];
    prefix.extend(Tokenizer.encode(question));
    Ok((resize_and_patchify(&overlaid.image, grid), prefix))
}

pub fn answer_question(p: &Parameters, doc: &RenderedDocument, question: &str, grid: PatchGrid) -> Result<String> {
    let (seq, prefix) = rqa_input(doc, question, grid)?;
    let ids = generate_greedy(p, &seq, &prefix, MAX_ANSWER_TOKENS)?;
    Ok(Tokenizer.decode(&ids)?)
}
