//! Quick in-process invariant suites behind `pixeldoc selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curriculum::paper_schedule;
use crate::metrics::anls;
use crate::model::gradcheck::{check_gradients, fixture, single_head, HEADS};
use crate::model::{batch_loss, init_params, mae_loss, read_checkpoint, write_checkpoint, ModelConfig, RoleWeights};
use crate::patchify::{choose_grid, PatchGrid, MAX_PATCHES};
use crate::raster::{decode_ppm, encode_ppm, PixelImage};
use crate::tables::{generate_sample, oracle_answer, TableLimits};
use crate::targets::{parse_bbox_prediction, sample_patch_mask, BoxCoords, LossRole};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Suite = fn() -> Result<String, String>;

const SUITES: [(&str, Suite); 9] = [
    ("patch-budget", patch_budget),
    ("mae-mask", mae_mask),
    ("gradients", gradients),
    ("tableqa-oracle", tableqa_oracle),
    ("anls", anls_examples),
    ("curriculum", curriculum),
    ("round-trips", round_trips),
    ("loss-masking", loss_masking),
    ("checkpoint", checkpoint),
];

pub fn run_all() -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, f)| match f() {
            Ok(detail) => SuiteResult {
                name,
                passed: true,
                detail,
            },
            Err(detail) => SuiteResult {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn patch_budget() -> Result<String, String> {
    let fixed = PatchGrid::fixed(896).map_err(|e| e.to_string())?;
    ensure(fixed.num_patches() == MAX_PATCHES, || format!("fixed 896 gives {}", fixed.num_patches()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..4000), rng.random_range(1..4000));
        let g = choose_grid(w, h, MAX_PATCHES).map_err(|e| e.to_string())?;
        let (long, short) = (g.rows.max(g.cols), g.rows.min(g.cols));
        let ratio = long / short;
        ensure(g.num_patches() <= MAX_PATCHES, || format!("{w}x{h}: {} patches", g.num_patches()))?;
        ensure(long % short == 0 && ratio.is_power_of_two() && ratio.trailing_zeros() % 2 == 0, || {
            format!("{w}x{h}: ratio {long}/{short}")
        })?;
    }
    Ok("200 sizes".into())
}

fn mae_mask() -> Result<String, String> {
    for n in [100usize, 256, 4096] {
        for seed in 0..200 {
            let m = sample_patch_mask(n, 0.15, seed).map_err(|e| e.to_string())?;
            let want = (0.15 * n as f64).floor() as usize;
            ensure(m.len() == want && m.windows(2).all(|w| w[0] < w[1]), || format!("n={n} seed={seed}"))?;
        }
    }
    Ok(String::new())
}

fn gradients() -> Result<String, String> {
    let (p, batch) = fixture(11).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for head in HEADS {
        let w = single_head(head).expect("known head");
        let r = check_gradients(&p, &batch, &w, 1e-4, Some(4), 1).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_rel_error());
        ensure(r.max_rel_error() < 1e-4, || format!("{head}: {:?}", r.worst()))?;
    }
    Ok(format!("max relative error {worst:.2e}"))
}

fn tableqa_oracle() -> Result<String, String> {
    let limits = TableLimits::default();
    for i in 0..200 {
        let s = generate_sample(i, 17, &limits).map_err(|e| e.to_string())?;
        let oracle = oracle_answer(&s.qa.table, &s.qa.provenance).map_err(|e| e.to_string())?;
        ensure(oracle == s.qa.answer, || format!("sample {i}: {oracle} vs {}", s.qa.answer))?;
    }
    Ok("200 samples".into())
}

fn anls_examples() -> Result<String, String> {
    let g = |s: &str| vec![s.to_string()];
    let cases = [("piano", "piano", 1.0), ("pianos", "piano", 1.0 - 1.0 / 6.0), ("blue", "red", 0.0)];
    for (p, gold, want) in cases {
        let got = anls(p, &g(gold), 0.5);
        ensure((got - want).abs() < 1e-9, || format!("anls({p}, {gold}) = {got}"))?;
    }
    Ok(String::new())
}

fn curriculum() -> Result<String, String> {
    let s = paper_schedule(0.01).map_err(|e| e.to_string())?;
    ensure(s.boundaries == [500, 4000, 4550, 6050], || format!("{:?}", s.boundaries))?;
    Ok(String::new())
}

fn round_trips() -> Result<String, String> {
    let tok = Tokenizer;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let text: String = (0..rng.random_range(0..40)).map(|_| rng.random_range(b' '..=b'~') as char).collect();
        let back = tok.decode(&tok.encode(&text)).map_err(|e| e.to_string())?;
        ensure(back == text, || format!("tokenizer: {text:?}"))?;
        let (w, h) = (rng.random_range(1..12), rng.random_range(1..12));
        let bytes: Vec<u8> = (0..w * h * 3).map(|_| rng.random()).collect();
        let img = PixelImage::from_rgb_bytes(w, h, &bytes).map_err(|e| e.to_string())?;
        ensure(decode_ppm(&encode_ppm(&img)).map_err(|e| e.to_string())? == img, || "ppm".into())?;
        let (x1, y1) = (rng.random_range(0..500), rng.random_range(0..500));
        let b = BoxCoords {
            x1,
            y1,
            x2: x1 + rng.random_range(1..100),
            y2: y1 + rng.random_range(1..100),
        };
        let parsed = parse_bbox_prediction(&tok.encode(&b.to_text()), &tok).map_err(|e| e.to_string())?;
        ensure(parsed == b, || format!("bbox {b:?}"))?;
    }
    Ok(String::new())
}

fn loss_masking() -> Result<String, String> {
    let (p, mut batch) = fixture(5).map_err(|e| e.to_string())?;
    let w = RoleWeights::default();
    let before = batch_loss(&p, &batch, &w).map_err(|e| e.to_string())?.total;
    let ignored = batch[1].roles.iter().position(|&r| r == LossRole::Ignore).expect("fixture has IGNORE");
    batch[1].targets[ignored] = 200;
    let after = batch_loss(&p, &batch, &w).map_err(|e| e.to_string())?.total;
    ensure(before.to_bits() == after.to_bits(), || format!("ignored target: {before} vs {after}"))?;
    let (seq, mask) = (&batch[0].patches, &batch[0].mae_mask);
    let base = mae_loss(&p, seq, mask, seq).map_err(|e| e.to_string())?;
    let mut target = seq.clone();
    let unmasked = (0..seq.len()).find(|i| !mask.contains(i)).expect("some patch is visible");
    target.patch_mut(unmasked).fill(0.5);
    let moved = mae_loss(&p, seq, mask, &target).map_err(|e| e.to_string())?;
    ensure(base.to_bits() == moved.to_bits(), || format!("unmasked target: {base} vs {moved}"))?;
    Ok(String::new())
}

fn checkpoint() -> Result<String, String> {
    let p = init_params(&ModelConfig::tiny()).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_checkpoint(&p, &mut buf).map_err(|e| e.to_string())?;
    let q = read_checkpoint(&mut buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(q == p, || "parameters differ after reload".into())?;
    Ok(format!("{} bytes", buf.len()))
}
