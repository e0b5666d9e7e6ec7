use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{applicable_templates, generate_table, instantiate_qa, QaPair, TableLimits, TableSpec};
use crate::raster::{render_table_image, RenderedDocument, StyleId, StylePreset};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableQaSample {
    pub index: u64,
    pub doc: RenderedDocument,
    pub qa: QaPair,
    /// Templates that were eligible for this table.
    pub applicable: Vec<u8>,
}

/// Builds sample `index` of the stream identified by `seed`.
pub fn generate_sample(index: u64, seed: u64, limits: &TableLimits) -> Result<TableQaSample, Error> {
    let table_seed = seed ^ index;
    let table = generate_table(table_seed, limits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(table_seed);
    rng.set_stream(1);
    let applicable = applicable_templates(&table);
    let template_id = applicable[rng.random_range(0..applicable.len())];
    let style = StylePreset::preset(StyleId::ALL[rng.random_range(0..StyleId::ALL.len())]);
    let qa = instantiate_qa(&table, template_id, rng.random())?;
    let doc = render_table_image(&table, &style, table_seed)?;
    Ok(TableQaSample {
        index,
        doc,
        qa,
        applicable,
    })
}

/// Lazy, deterministic stream of `n` rendered table-QA samples.
pub fn generate_dataset(
    n: u64,
    seed: u64,
    limits: &TableLimits,
) -> impl Iterator<Item = Result<TableQaSample, Error>> + '_ {
    (0..n).map(move |i| generate_sample(i, seed, limits))
}

/// Same samples as [`generate_dataset`], produced by `threads` workers over
/// contiguous index shards and merged back in index order.
pub fn generate_dataset_parallel(
    n: u64,
    seed: u64,
    limits: &TableLimits,
    threads: usize,
) -> Result<Vec<TableQaSample>, Error> {
    if n == 0 {
        return Err(Error::Usage("dataset size must be >= 1".into()));
    }
    let threads = threads.clamp(1, n as usize) as u64;
    let chunk = n.div_ceil(threads);
    let shards: Vec<Result<Vec<TableQaSample>, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let range = (t * chunk).min(n)..((t + 1) * chunk).min(n);
                scope.spawn(move || range.map(|i| generate_sample(i, seed, limits)).collect())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("dataset worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n as usize);
    for shard in shards {
        out.extend(shard?);
    }
    Ok(out)
}

/// One JSONL manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    pub question: String,
    pub answer: String,
    pub template_id: u8,
    pub table: TableSpec,
    pub style_id: StyleId,
    pub seed: u64,
}

impl ManifestRecord {
    pub fn new(sample: &TableQaSample, image_path: String) -> Self {
        ManifestRecord {
            image_path,
            question: sample.qa.question.clone(),
            answer: sample.qa.answer.clone(),
            template_id: sample.qa.template_id,
            table: sample.qa.table.clone(),
            style_id: sample.doc.style.id,
            seed: sample.doc.seed,
        }
    }
}
