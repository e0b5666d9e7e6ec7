use std::collections::BTreeMap;

#[cfg(test)]
use super::layers::AttnCache;
use super::layers::{DecoderBlockCache, EncoderBlockCache, NormCache};
use super::params::Parameters;
use super::tensor::add_assign;
use super::ModelError;
use crate::patchify::{resize_and_patchify, sinusoidal_pos_emb, PatchGrid, PatchSequence, PATCH_VALUES};
use crate::targets::{LossRole, TaskTag, TrainingExample};
use crate::tokenizer::{Special, TokenId};

/// Per-loss multipliers; every weight defaults to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleWeights {
    pub mae: f64,
    pub ocr: f64,
    pub mlm: f64,
    pub qa: f64,
    pub bb: f64,
}

impl Default for RoleWeights {
    fn default() -> Self {
        RoleWeights {
            mae: 1.0,
            ocr: 1.0,
            mlm: 1.0,
            qa: 1.0,
            bb: 1.0,
        }
    }
}

impl RoleWeights {
    pub fn zero() -> Self {
        RoleWeights {
            mae: 0.0,
            ocr: 0.0,
            mlm: 0.0,
            qa: 0.0,
            bb: 0.0,
        }
    }

    pub fn role(&self, r: LossRole) -> f64 {
        match r {
            LossRole::Ocr => self.ocr,
            LossRole::Mlm => self.mlm,
            LossRole::Qa => self.qa,
            LossRole::Bb => self.bb,
            LossRole::Ignore => 0.0,
        }
    }
}

/// A training example resized and patchified to its batch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub task: TaskTag,
    pub patches: PatchSequence,
    pub prefix: Vec<TokenId>,
    pub targets: Vec<TokenId>,
    pub roles: Vec<LossRole>,
    pub mae_mask: Vec<usize>,
}

pub fn prepare(ex: &TrainingExample, grid: PatchGrid) -> Result<PreparedExample, ModelError> {
    ex.validate().map_err(ModelError::InvalidExample)?;
    let n = grid.num_patches();
    if let Some(&bad) = ex.mae_mask.iter().find(|&&i| i >= n) {
        return Err(ModelError::InvalidExample(format!("mask index {bad} outside {n} patches")));
    }
    Ok(PreparedExample {
        task: ex.task,
        patches: resize_and_patchify(&ex.image, grid),
        prefix: ex.prefix_tokens.clone(),
        targets: ex.target_tokens.clone(),
        roles: ex.roles.clone(),
        mae_mask: ex.mae_mask.clone(),
    })
}

/// `(x - mean) / sqrt(var + floor)` over one patch.
pub fn normalized_target(patch: &[f64], variance_floor: f64) -> Vec<f64> {
    let n = patch.len() as f64;
    let mean = patch.iter().sum::<f64>() / n;
    let var = patch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let s = 1.0 / (var + variance_floor).sqrt();
    patch.iter().map(|v| (v - mean) * s).collect()
}

struct EncodeCache {
    masked: Vec<bool>,
    blocks: Vec<EncoderBlockCache>,
    norm: NormCache,
}

fn encode_fwd(p: &Parameters, seq: &PatchSequence, mask: &[usize]) -> Result<(Vec<f64>, EncodeCache), ModelError> {
    let n = seq.len();
    let d = p.config.d_model;
    if n > p.config.max_patches {
        return Err(ModelError::Overlength {
            len: n,
            max: p.config.max_patches,
        });
    }
    let mut masked = vec![false; n];
    for &i in mask {
        if i >= n {
            return Err(ModelError::InvalidExample(format!("mask index {i} outside {n} patches")));
        }
        masked[i] = true;
    }
    let mut x = p.patch_proj.forward(seq.data(), n);
    let pe = sinusoidal_pos_emb(n, d).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    for (i, row) in x.chunks_exact_mut(d).enumerate() {
        if masked[i] {
            row.copy_from_slice(&p.mask_patch.data);
        }
        add_assign(row, &pe[i]);
    }
    let mut blocks = Vec::with_capacity(p.encoder.len());
    for b in &p.encoder {
        let (y, c) = b.forward(&x);
        blocks.push(c);
        x = y;
    }
    let (out, norm) = p.enc_norm.forward(&x);
    Ok((out, EncodeCache { masked, blocks, norm }))
}

fn encode_bwd(p: &Parameters, seq: &PatchSequence, c: &EncodeCache, denc: &[f64], g: &mut Parameters) {
    let d = p.config.d_model;
    let mut dx = p.enc_norm.backward(&c.norm, denc, &mut g.enc_norm);
    for (i, b) in p.encoder.iter().enumerate().rev() {
        dx = b.backward(&c.blocks[i], &dx, &mut g.encoder[i]);
    }
    for (i, row) in dx.chunks_exact_mut(d).enumerate() {
        if c.masked[i] {
            add_assign(&mut g.mask_patch.data, row);
            row.fill(0.0);
        }
    }
    p.patch_proj.backward(seq.data(), &dx, seq.len(), &mut g.patch_proj, false);
}

/// Encoder states, `n_patches × d_model` row-major. Masked positions take the
/// learned mask embedding instead of their pixels.
pub fn encode_image(p: &Parameters, seq: &PatchSequence, mae_mask: Option<&[usize]>) -> Result<Vec<f64>, ModelError> {
    Ok(encode_fwd(p, seq, mae_mask.unwrap_or(&[]))?.0)
}

struct DecodeCache {
    tokens: Vec<TokenId>,
    blocks: Vec<DecoderBlockCache>,
    norm: NormCache,
}

fn decode_fwd(p: &Parameters, enc: &[f64], tokens: &[TokenId]) -> Result<(Vec<f64>, DecodeCache), ModelError> {
    let d = p.config.d_model;
    if tokens.len() > p.config.max_text_len {
        return Err(ModelError::Overlength {
            len: tokens.len(),
            max: p.config.max_text_len,
        });
    }
    if enc.is_empty() || !enc.len().is_multiple_of(d) {
        return Err(ModelError::LengthMismatch(format!("{} encoder values at width {d}", enc.len())));
    }
    let pe = sinusoidal_pos_emb(tokens.len(), d).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    let mut x = Vec::with_capacity(tokens.len() * d);
    for (i, &t) in tokens.iter().enumerate() {
        let t = t as usize;
        if t >= p.config.vocab_size {
            return Err(ModelError::InvalidExample(format!("token id {t} outside vocabulary")));
        }
        x.extend(p.token_emb.data[t * d..(t + 1) * d].iter().zip(&pe[i]).map(|(a, b)| a + b));
    }
    let mut blocks = Vec::with_capacity(p.decoder.len());
    for b in &p.decoder {
        let (y, c) = b.forward(&x, enc);
        blocks.push(c);
        x = y;
    }
    let (out, norm) = p.dec_norm.forward(&x);
    Ok((
        out,
        DecodeCache {
            tokens: tokens.to_vec(),
            blocks,
            norm,
        },
    ))
}

fn decode_bwd(p: &Parameters, enc: &[f64], c: &DecodeCache, dh: &[f64], denc: &mut [f64], g: &mut Parameters) {
    let d = p.config.d_model;
    let mut dx = p.dec_norm.backward(&c.norm, dh, &mut g.dec_norm);
    for (i, b) in p.decoder.iter().enumerate().rev() {
        let (dxi, de) = b.backward(&c.blocks[i], enc, &dx, &mut g.decoder[i]);
        add_assign(denc, &de);
        dx = dxi;
    }
    for (i, &t) in c.tokens.iter().enumerate() {
        let t = t as usize;
        add_assign(&mut g.token_emb.data[t * d..(t + 1) * d], &dx[i * d..(i + 1) * d]);
    }
}

/// Logits for every input position, `len × vocab_size` row-major.
pub fn decode_text(p: &Parameters, enc: &[f64], tokens: &[TokenId]) -> Result<Vec<f64>, ModelError> {
    let (h, _) = decode_fwd(p, enc, tokens)?;
    Ok(p.output.forward(&h, tokens.len()))
}

/// Weighted cross-entropy with per-role means.
#[derive(Debug, Clone, PartialEq)]
pub struct GenLoss {
    pub total: f64,
    pub per_role: BTreeMap<LossRole, f64>,
}

fn gen_loss_impl(
    logits: &[f64],
    targets: &[TokenId],
    roles: &[LossRole],
    w: &RoleWeights,
    want_grad: bool,
) -> Result<(GenLoss, Vec<f64>), ModelError> {
    if targets.len() != roles.len() || targets.is_empty() && !logits.is_empty() {
        return Err(ModelError::LengthMismatch(format!(
            "{} targets, {} roles",
            targets.len(),
            roles.len()
        )));
    }
    if targets.is_empty() {
        return Ok((
            GenLoss {
                total: 0.0,
                per_role: BTreeMap::new(),
            },
            Vec::new(),
        ));
    }
    if !logits.len().is_multiple_of(targets.len()) {
        return Err(ModelError::LengthMismatch(format!(
            "{} logits for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let v = logits.len() / targets.len();
    let mut counts: BTreeMap<LossRole, usize> = BTreeMap::new();
    for &r in roles.iter().filter(|&&r| r != LossRole::Ignore) {
        *counts.entry(r).or_default() += 1;
    }
    let mut sums: BTreeMap<LossRole, f64> = BTreeMap::new();
    let mut grad = if want_grad { vec![0.0; logits.len()] } else { Vec::new() };
    for (i, (&t, &r)) in targets.iter().zip(roles).enumerate() {
        if r == LossRole::Ignore {
            continue;
        }
        let t = t as usize;
        if t >= v {
            return Err(ModelError::InvalidExample(format!("target id {t} outside vocabulary")));
        }
        let row = &logits[i * v..(i + 1) * v];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        *sums.entry(r).or_default() += lse - row[t];
        if want_grad {
            let k = w.role(r) / counts[&r] as f64;
            let gr = &mut grad[i * v..(i + 1) * v];
            for (gj, &x) in gr.iter_mut().zip(row) {
                *gj = k * (x - lse).exp();
            }
            gr[t] -= k;
        }
    }
    let per_role: BTreeMap<LossRole, f64> = sums.into_iter().map(|(r, s)| (r, s / counts[&r] as f64)).collect();
    let total = per_role.iter().map(|(&r, &m)| w.role(r) * m).sum();
    Ok((GenLoss { total, per_role }, grad))
}

/// `logits` holds one row per target position.
pub fn gen_loss(
    logits: &[f64],
    targets: &[TokenId],
    roles: &[LossRole],
    weights: &RoleWeights,
) -> Result<GenLoss, ModelError> {
    Ok(gen_loss_impl(logits, targets, roles, weights, false)?.0)
}

struct MaeCache {
    blocks: Vec<EncoderBlockCache>,
    norm: NormCache,
    gathered: Vec<f64>,
}

/// Returns `(loss, prediction - target)` over the masked patches.
fn mae_fwd(
    p: &Parameters,
    enc: &[f64],
    mask: &[usize],
    target: &PatchSequence,
) -> (f64, Vec<f64>, MaeCache) {
    let d = p.config.d_model;
    let mut x = enc.to_vec();
    let mut blocks = Vec::with_capacity(p.mae_decoder.len());
    for b in &p.mae_decoder {
        let (y, c) = b.forward(&x);
        blocks.push(c);
        x = y;
    }
    let (h, norm) = p.mae_norm.forward(&x);
    let gathered: Vec<f64> = mask.iter().flat_map(|&i| h[i * d..(i + 1) * d].iter().copied()).collect();
    let pred = p.pixel_head.forward(&gathered, mask.len());
    let mut diff = pred;
    let mut sq = 0.0;
    for (k, &i) in mask.iter().enumerate() {
        let t = normalized_target(target.patch(i), p.config.variance_floor);
        for (dv, tv) in diff[k * PATCH_VALUES..(k + 1) * PATCH_VALUES].iter_mut().zip(&t) {
            *dv -= tv;
            sq += *dv * *dv;
        }
    }
    let loss = sq / (mask.len() * PATCH_VALUES) as f64;
    (loss, diff, MaeCache { blocks, norm, gathered })
}

#[allow(clippy::too_many_arguments)]
fn mae_bwd(p: &Parameters, n: usize, mask: &[usize], c: &MaeCache, diff: &[f64], k: f64, denc: &mut [f64], g: &mut Parameters) {
    let d = p.config.d_model;
    let scale = 2.0 * k / (mask.len() * PATCH_VALUES) as f64;
    let dpred: Vec<f64> = diff.iter().map(|v| v * scale).collect();
    let dg = p
        .pixel_head
        .backward(&c.gathered, &dpred, mask.len(), &mut g.pixel_head, true)
        .expect("dx requested");
    let mut dh = vec![0.0; n * d];
    for (r, &i) in mask.iter().enumerate() {
        dh[i * d..(i + 1) * d].copy_from_slice(&dg[r * d..(r + 1) * d]);
    }
    let mut dx = p.mae_norm.backward(&c.norm, &dh, &mut g.mae_norm);
    for (i, b) in p.mae_decoder.iter().enumerate().rev() {
        dx = b.backward(&c.blocks[i], &dx, &mut g.mae_decoder[i]);
    }
    add_assign(denc, &dx);
}

/// Normalized pixel MSE over the masked patches of `target`, with `seq`
/// (usually the same patches) as encoder input.
pub fn mae_loss(p: &Parameters, seq: &PatchSequence, mae_mask: &[usize], target: &PatchSequence) -> Result<f64, ModelError> {
    if mae_mask.is_empty() {
        return Err(ModelError::InvalidExample("empty MAE mask".into()));
    }
    if target.len() != seq.len() {
        return Err(ModelError::LengthMismatch(format!("{} vs {} patches", seq.len(), target.len())));
    }
    let (enc, _) = encode_fwd(p, seq, mae_mask)?;
    Ok(mae_fwd(p, &enc, mae_mask, target).0)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ExampleLoss {
    total: f64,
    mae: Option<f64>,
    roles: BTreeMap<LossRole, f64>,
}

fn example_pass(
    p: &Parameters,
    ex: &PreparedExample,
    w: &RoleWeights,
    mut grad: Option<(&mut Parameters, f64)>,
) -> Result<ExampleLoss, ModelError> {
    if ex.mae_mask.is_empty() && ex.targets.is_empty() {
        return Err(ModelError::InvalidExample("example has no loss terms".into()));
    }
    let (enc, ecache) = encode_fwd(p, &ex.patches, &ex.mae_mask)?;
    let mut denc = if grad.is_some() { vec![0.0; enc.len()] } else { Vec::new() };
    let mut out = ExampleLoss::default();
    if !ex.mae_mask.is_empty() {
        let (loss, diff, c) = mae_fwd(p, &enc, &ex.mae_mask, &ex.patches);
        if let Some((g, k)) = grad.as_mut() {
            mae_bwd(p, ex.patches.len(), &ex.mae_mask, &c, &diff, *k * w.mae, &mut denc, g);
        }
        out.mae = Some(loss);
        out.total += w.mae * loss;
    }
    if !ex.targets.is_empty() {
        if ex.prefix.is_empty() {
            return Err(ModelError::InvalidExample("generative example needs a prefix".into()));
        }
        let (np, nt) = (ex.prefix.len(), ex.targets.len());
        // Ignored targets are opaque to the decoder: their input slot holds <pad>.
        let mut tokens = ex.prefix.clone();
        tokens.extend(ex.targets[..nt - 1].iter().zip(&ex.roles).map(|(&t, &r)| {
            if r == LossRole::Ignore {
                Special::Pad.id()
            } else {
                t
            }
        }));
        let (h, dcache) = decode_fwd(p, &enc, &tokens)?;
        let d = p.config.d_model;
        let rows = &h[(np - 1) * d..(np - 1 + nt) * d];
        let logits = p.output.forward(rows, nt);
        let (gl, mut dlogits) = gen_loss_impl(&logits, &ex.targets, &ex.roles, w, grad.is_some())?;
        if let Some((g, k)) = grad.as_mut() {
            dlogits.iter_mut().for_each(|v| *v *= *k);
            let drows = p.output.backward(rows, &dlogits, nt, &mut g.output, true).expect("dx requested");
            let mut dh = vec![0.0; h.len()];
            dh[(np - 1) * d..(np - 1 + nt) * d].copy_from_slice(&drows);
            decode_bwd(p, &enc, &dcache, &dh, &mut denc, g);
        }
        out.total += gl.total;
        out.roles = gl.per_role;
    }
    if let Some((g, _)) = grad {
        encode_bwd(p, &ex.patches, &ecache, &denc, g);
    }
    Ok(out)
}

/// Batch-mean losses. Per-head means average over the examples carrying that head.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLosses {
    pub total: f64,
    pub mae: Option<f64>,
    pub roles: BTreeMap<LossRole, f64>,
}

impl BatchLosses {
    /// Loss by column name: `mae`, `ocr`, `mlm`, `qa` or `bb`.
    pub fn get(&self, name: &str) -> Option<f64> {
        if name == "mae" {
            return self.mae;
        }
        self.roles.iter().find(|(r, _)| r.name() == name).map(|(_, &v)| v)
    }
}

fn check_batch(batch: &[PreparedExample]) -> Result<(), ModelError> {
    let first = batch.first().ok_or(ModelError::EmptyBatch)?;
    if let Some(other) = batch.iter().find(|e| e.patches.grid != first.patches.grid) {
        let show = |g: PatchGrid| format!("{}x{}", g.rows, g.cols);
        return Err(ModelError::MixedResolution(show(first.patches.grid), show(other.patches.grid)));
    }
    Ok(())
}

fn run_batch(
    p: &Parameters,
    batch: &[PreparedExample],
    w: &RoleWeights,
    mut grads: Option<&mut Parameters>,
) -> Result<BatchLosses, ModelError> {
    check_batch(batch)?;
    let k = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut mae = (0.0, 0usize);
    let mut roles: BTreeMap<LossRole, (f64, usize)> = BTreeMap::new();
    for ex in batch {
        let l = example_pass(p, ex, w, grads.as_deref_mut().map(|g| (g, k)))?;
        total += l.total * k;
        if let Some(m) = l.mae {
            mae.0 += m;
            mae.1 += 1;
        }
        for (r, v) in l.roles {
            let e = roles.entry(r).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let failure = |g: Option<&Parameters>| {
        let tensor = p
            .first_non_finite()
            .or_else(|| g.and_then(|g| g.first_non_finite()))
            .unwrap_or("loss")
            .to_string();
        ModelError::NumericalFailure { tensor }
    };
    if !total.is_finite() {
        return Err(failure(grads.as_deref()));
    }
    if let Some(g) = grads.as_deref() {
        if g.first_non_finite().is_some() {
            return Err(failure(Some(g)));
        }
    }
    Ok(BatchLosses {
        total,
        mae: (mae.1 > 0).then(|| mae.0 / mae.1 as f64),
        roles: roles.into_iter().map(|(r, (s, n))| (r, s / n as f64)).collect(),
    })
}

/// Losses and gradients of the batch-mean total loss. Examples are processed
/// in order, so results are bit-reproducible.
pub fn forward_backward(
    p: &Parameters,
    batch: &[PreparedExample],
    weights: &RoleWeights,
) -> Result<(BatchLosses, Parameters), ModelError> {
    let mut g = p.zeros_like();
    let losses = run_batch(p, batch, weights, Some(&mut g))?;
    Ok((losses, g))
}

pub fn batch_loss(p: &Parameters, batch: &[PreparedExample], weights: &RoleWeights) -> Result<BatchLosses, ModelError> {
    run_batch(p, batch, weights, None)
}

/// Greedy decoding; ties go to the lowest token id. The end token stops
/// decoding and is not returned.
pub fn generate_greedy(
    p: &Parameters,
    seq: &PatchSequence,
    prefix: &[TokenId],
    max_len: usize,
) -> Result<Vec<TokenId>, ModelError> {
    if prefix.is_empty() {
        return Err(ModelError::InvalidExample("empty prefix".into()));
    }
    let (enc, _) = encode_fwd(p, seq, &[])?;
    let d = p.config.d_model;
    let mut tokens = prefix.to_vec();
    let mut out = Vec::new();
    while out.len() < max_len && tokens.len() <= p.config.max_text_len {
        let (h, _) = decode_fwd(p, &enc, &tokens)?;
        let last = &h[(tokens.len() - 1) * d..];
        let logits = p.output.forward(last, 1);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        let id = best as TokenId;
        if id == Special::End.id() {
            break;
        }
        out.push(id);
        tokens.push(id);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn attention_rows(p: &Parameters, enc: &[f64], tokens: &[TokenId]) -> Vec<(Vec<f64>, usize, usize)> {
    let (_, c) = decode_fwd(p, enc, tokens).unwrap();
    let dump = |a: &AttnCache| (a.probs.clone(), a.probs.len() / (p.config.n_heads * tokens.len()), tokens.len());
    c.blocks
        .iter()
        .flat_map(|b| [dump(&b.self_attn), dump(&b.cross_attn)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use crate::tokenizer::VOCAB_SIZE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_seq(grid: PatchGrid, seed: u64) -> PatchSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.num_patches() * PATCH_VALUES).map(|_| rng.random::<f64>()).collect();
        PatchSequence::from_data(grid, data).unwrap()
    }

    fn setup() -> (Parameters, PatchSequence) {
        let p = init_params(&ModelConfig::tiny()).unwrap();
        (p, random_seq(PatchGrid::new(2, 2).unwrap(), 5))
    }

    #[test]
    fn encoder_shape_and_masked_pixels_ignored() {
        let (p, seq) = setup();
        let enc = encode_image(&p, &seq, Some(&[1])).unwrap();
        assert_eq!(enc.len(), 4 * 16);
        let mut other = seq.clone();
        other.patch_mut(1).fill(0.9);
        assert_eq!(encode_image(&p, &other, Some(&[1])).unwrap(), enc);
        assert_ne!(encode_image(&p, &other, None).unwrap(), encode_image(&p, &seq, None).unwrap());
    }

    #[test]
    fn swapping_patches_changes_output() {
        let (p, seq) = setup();
        let mut swapped = seq.clone();
        let a = seq.patch(0).to_vec();
        swapped.patch_mut(0).copy_from_slice(seq.patch(1));
        swapped.patch_mut(1).copy_from_slice(&a);
        let e1 = encode_image(&p, &seq, None).unwrap();
        let e2 = encode_image(&p, &swapped, None).unwrap();
        assert_ne!(e1[..16], e2[16..32]);
    }

    #[test]
    fn decoder_is_causal_and_uses_encoder() {
        let (p, seq) = setup();
        let enc = encode_image(&p, &seq, None).unwrap();
        let a = decode_text(&p, &enc, &[260, 72, 105, 33]).unwrap();
        let b = decode_text(&p, &enc, &[260, 72, 105, 63]).unwrap();
        assert_eq!(a[..3 * VOCAB_SIZE], b[..3 * VOCAB_SIZE]);
        assert_ne!(a[3 * VOCAB_SIZE..], b[3 * VOCAB_SIZE..]);
        let zero = vec![0.0; enc.len()];
        assert_ne!(decode_text(&p, &zero, &[260, 72]).unwrap(), decode_text(&p, &enc, &[260, 72]).unwrap());
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (p, seq) = setup();
        let enc = encode_image(&p, &seq, None).unwrap();
        for (probs, nk, _) in attention_rows(&p, &enc, &[260, 1, 2, 3, 4]) {
            for row in probs.chunks_exact(nk) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let v = 50;
        let logits = vec![0.0; 3 * v];
        let roles = [LossRole::Ocr, LossRole::Mlm, LossRole::Ocr];
        let l = gen_loss(&logits, &[1, 2, 3], &roles, &RoleWeights::default()).unwrap();
        assert_eq!(l.per_role[&LossRole::Ocr], (v as f64).ln());
        assert_eq!(l.per_role[&LossRole::Mlm], (v as f64).ln());
    }

    #[test]
    fn ignored_positions_are_excluded() {
        let logits: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let roles = [LossRole::Ignore; 4];
        let l = gen_loss(&logits, &[1, 2, 3, 4], &roles, &RoleWeights::default()).unwrap();
        assert_eq!(l.total, 0.0);
        assert!(l.per_role.is_empty());
        let roles = [LossRole::Qa, LossRole::Ignore, LossRole::Qa, LossRole::Ignore];
        let a = gen_loss(&logits, &[1, 2, 3, 4], &roles, &RoleWeights::default()).unwrap();
        let b = gen_loss(&logits, &[1, 7, 3, 9], &roles, &RoleWeights::default()).unwrap();
        assert_eq!(a.total.to_bits(), b.total.to_bits());
        assert!(gen_loss(&logits, &[1, 2], &roles, &RoleWeights::default()).is_err());
    }

    #[test]
    fn normalized_target_statistics() {
        let patch: Vec<f64> = (0..PATCH_VALUES).map(|i| (i % 7) as f64 / 6.0).collect();
        let t = normalized_target(&patch, 1e-6);
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let var = t.iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
        let shifted: Vec<f64> = patch.iter().map(|v| v + 0.25).collect();
        let t2 = normalized_target(&shifted, 1e-6);
        assert!(t.iter().zip(&t2).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(normalized_target(&[0.5; 12], 1e-6).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mae_loss_ignores_unmasked_targets() {
        let (p, seq) = setup();
        let mut target = seq.clone();
        let base = mae_loss(&p, &seq, &[2], &target).unwrap();
        target.patch_mut(0).fill(0.1);
        assert_eq!(mae_loss(&p, &seq, &[2], &target).unwrap(), base);
        target.patch_mut(2).iter_mut().for_each(|v| *v += 0.5);
        assert!((mae_loss(&p, &seq, &[2], &target).unwrap() - base).abs() < 1e-9);
    }

    fn gen_example(seq: &PatchSequence) -> PreparedExample {
        PreparedExample {
            task: TaskTag::Rqa,
            patches: seq.clone(),
            prefix: vec![Special::Qa.id(), 104, 105],
            targets: vec![51, 52, Special::End.id()],
            roles: vec![LossRole::Qa; 3],
            mae_mask: Vec::new(),
        }
    }

    #[test]
    fn duplicated_batch_same_loss_and_grads() {
        let (p, seq) = setup();
        let mut mae = gen_example(&seq);
        mae.targets.clear();
        mae.roles.clear();
        mae.mae_mask = vec![0, 3];
        let batch = vec![gen_example(&seq), mae];
        let doubled: Vec<_> = batch.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
        let (l1, g1) = forward_backward(&p, &batch, &RoleWeights::default()).unwrap();
        let (l2, g2) = forward_backward(&p, &doubled, &RoleWeights::default()).unwrap();
        assert!((l1.total - l2.total).abs() < 1e-12);
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-12, "{}", a.name);
            }
        }
    }

    #[test]
    fn zero_weights_zero_text_grads() {
        let (p, seq) = setup();
        let (_, g) = forward_backward(&p, &[gen_example(&seq)], &RoleWeights::zero()).unwrap();
        assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn ignored_target_content_is_invisible() {
        let (p, seq) = setup();
        let mut ex = gen_example(&seq);
        ex.roles[0] = LossRole::Ignore;
        let before = batch_loss(&p, &[ex.clone()], &RoleWeights::default()).unwrap().total;
        ex.targets[0] = 99;
        let after = batch_loss(&p, &[ex], &RoleWeights::default()).unwrap().total;
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn mixed_grids_rejected() {
        let (p, seq) = setup();
        let other = random_seq(PatchGrid::new(1, 4).unwrap(), 1);
        let batch = [gen_example(&seq), gen_example(&other)];
        assert!(matches!(
            forward_backward(&p, &batch, &RoleWeights::default()),
            Err(ModelError::MixedResolution(..))
        ));
        assert!(matches!(forward_backward(&p, &[], &RoleWeights::default()), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn non_finite_parameters_reported() {
        let (mut p, seq) = setup();
        p.encoder[0].mlp.fc1.w.data[3] = f64::NAN;
        match forward_backward(&p, &[gen_example(&seq)], &RoleWeights::default()) {
            Err(ModelError::NumericalFailure { tensor }) => assert_eq!(tensor, "encoder.0.mlp.fc1.weight"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn greedy_is_deterministic_and_capped() {
        let (p, seq) = setup();
        let a = generate_greedy(&p, &seq, &[Special::Qa.id()], 5).unwrap();
        assert!(a.len() <= 5);
        assert_eq!(a, generate_greedy(&p, &seq, &[Special::Qa.id()], 5).unwrap());
        assert!(generate_greedy(&p, &seq, &[Special::Qa.id()], 0).unwrap().is_empty());
    }

    #[test]
    fn overlength_rejected() {
        let (p, _) = setup();
        let big = random_seq(PatchGrid::new(16, 16).unwrap(), 2);
        assert!(matches!(encode_image(&p, &big, None), Err(ModelError::Overlength { .. })));
    }
}
