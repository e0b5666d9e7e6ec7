//! Curriculum-driven toy pretraining loop and its CSV loss log.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{fact_passage, passage};
use crate::curriculum::{CurriculumSchedule, StageSpec, Task};
use crate::model::{forward_backward, prepare, AdamW, BatchLosses, Hyperparameters, Parameters, PreparedExample, RoleWeights};
use crate::patchify::{choose_grid, PatchGrid};
use crate::raster::{render_text_document, StylePreset};
use crate::tables::{generate_sample, TableLimits};
use crate::targets::{
    build_mae_example, build_mdtg_example, build_rqa_example, sample_phrase_spans, serialize_bbox_example, BoxDirection,
    TrainingExample, DEFAULT_MASK_RATIO, DEFAULT_PHRASE_RATIO,
};
use crate::tokenizer::Tokenizer;
use crate::{Error, Result};

/// Width in pixels of rendered pretraining passages.
pub const DOC_WIDTH: usize = 160;
const MAX_ATTEMPTS: u64 = 16;

/// Grid for a stage: the stage resolution, capped by the model's patch limit.
pub fn stage_grid(stage: &StageSpec, max_patches: usize) -> Result<PatchGrid> {
    let full = PatchGrid::fixed(stage.resolution)?;
    if full.num_patches() <= max_patches {
        Ok(full)
    } else {
        Ok(choose_grid(stage.resolution, stage.resolution, max_patches)?)
    }
}

fn raw_example(task: Task, seed: u64, n_patches: usize, max_text: usize) -> Result<TrainingExample> {
    let tok = Tokenizer;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = StylePreset::random(rng.random());
    let width = DOC_WIDTH.max(style.cell_width());
    let ex = match task {
        Task::Mae | Task::Mdtg | Task::Bb => {
            let text = passage(rng.random(), max_text.saturating_sub(4).max(1));
            let doc = render_text_document(&text, &style, width, seed)?;
            match task {
                Task::Mae => build_mae_example(&doc.image, n_patches, DEFAULT_MASK_RATIO, rng.random())?,
                Task::Mdtg => {
                    let spans = sample_phrase_spans(&doc, DEFAULT_PHRASE_RATIO, rng.random())?;
                    build_mdtg_example(&doc, &spans, &tok)?
                }
                _ => {
                    let word = rng.random_range(0..doc.words.len());
                    serialize_bbox_example(&doc, word, BoxDirection::sample(&mut rng), &tok)?
                }
            }
        }
        Task::Rqa => {
            let fact = fact_passage(rng.random());
            let doc = render_text_document(&fact.text, &style, width, seed)?;
            build_rqa_example(&doc, &fact.question, &fact.answer, &style, &tok)?
        }
        Task::TableQa => {
            let sample = generate_sample(rng.random_range(0..u32::MAX as u64), rng.random(), &TableLimits::new(4, 3))?;
            build_rqa_example(&sample.doc, &sample.qa.question, &sample.qa.answer, &sample.doc.style, &tok)?
        }
    };
    Ok(ex)
}

/// Example `index` of `step`, resized to `grid`. Texts that do not fit the
/// decoder are redrawn with a fresh sub-seed.
pub fn build_example(
    task: Task,
    grid: PatchGrid,
    seed: u64,
    step: u64,
    index: u64,
    max_text_len: usize,
) -> Result<PreparedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng.set_word_pos(u128::from(index) * 2 * MAX_ATTEMPTS as u128);
    for _ in 0..MAX_ATTEMPTS {
        let sub = rng.random::<u64>();
        let ex = raw_example(task, sub, grid.num_patches(), max_text_len)?;
        if ex.prefix_tokens.len() + ex.target_tokens.len().saturating_sub(1) <= max_text_len {
            return Ok(prepare(&ex, grid)?);
        }
    }
    Err(Error::Data(format!(
        "no {} example fits max_text_len {max_text_len}",
        task.name()
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub stage: usize,
    pub task: Task,
    pub losses: BatchLosses,
}

pub const LOSS_COLUMNS: [&str; 5] = ["mae", "ocr", "mlm", "qa", "bb"];

/// Append-only CSV: `step,stage,task,total,mae,ocr,mlm,qa,bb`, flushed per row.
pub struct LossLog<W: Write> {
    out: W,
    last_step: Option<u64>,
}

impl<W: Write> LossLog<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "step,stage,task,total,{}", LOSS_COLUMNS.join(","))?;
        out.flush()?;
        Ok(LossLog { out, last_step: None })
    }

    pub fn append(&mut self, r: &StepRecord) -> std::io::Result<()> {
        if self.last_step.is_some_and(|s| r.step <= s) {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("step {} is not after step {}", r.step, self.last_step.unwrap_or(0)),
            ));
        }
        let cols: Vec<String> = LOSS_COLUMNS
            .iter()
            .map(|c| r.losses.get(c).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        writeln!(self.out, "{},{},{},{},{}", r.step, r.stage, r.task.name(), r.losses.total, cols.join(","))?;
        self.out.flush()?;
        self.last_step = Some(r.step);
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Batch size, warmup and learning rate for a toy run over `schedule`.
pub fn scaled_hyperparameters(schedule: &CurriculumSchedule, learning_rate: f64) -> Hyperparameters {
    let base = Hyperparameters::default();
    let warmup = (base.warmup_steps as f64 * schedule.total_steps() as f64 / 605_000.0).round() as u64;
    Hyperparameters {
        learning_rate,
        warmup_steps: warmup,
        batch_size: schedule.stages[0].batch_size as usize,
        ..base
    }
}

/// Runs every step of `schedule`, one task per step, calling `on_step` after
/// each update. Fully sequential, so a fixed seed fixes the trajectory.
pub fn run_pretraining(
    params: &mut Parameters,
    schedule: &CurriculumSchedule,
    hyper: &Hyperparameters,
    weights: &RoleWeights,
    seed: u64,
    batch_cap: Option<usize>,
    mut on_step: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<()> {
    let mut opt = AdamW::new(hyper.clone(), params)?;
    for step in 0..schedule.total_steps() {
        let stage = schedule.stage_at(step)?;
        let task = schedule.sample_task(step, seed)?;
        let grid = stage_grid(stage, params.config.max_patches)?;
        let bs = batch_cap.map_or(stage.batch_size as usize, |c| c.min(stage.batch_size as usize)).max(1);
        let batch = (0..bs as u64)
            .map(|i| build_example(task, grid, seed, step, i, params.config.max_text_len))
            .collect::<Result<Vec<_>>>()?;
        let (losses, grads) = forward_backward(params, &batch, weights)?;
        opt.step(params, &grads, step + 1)?;
        if let Some(name) = params.first_non_finite() {
            return Err(crate::model::ModelError::NumericalFailure { tensor: name.to_string() }.into());
        }
        on_step(&StepRecord {
            step,
            stage: stage.index,
            task,
            losses,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::paper_schedule;
    use crate::model::{init_params, ModelConfig};
    use std::collections::BTreeMap;

    #[test]
    fn examples_are_deterministic_and_fit() {
        let grid = PatchGrid::new(4, 4).unwrap();
        for task in [Task::Mae, Task::Mdtg, Task::Rqa, Task::Bb, Task::TableQa] {
            let a = build_example(task, grid, 3, 7, 1, 128).unwrap();
            assert_eq!(a, build_example(task, grid, 3, 7, 1, 128).unwrap());
            assert_ne!(a, build_example(task, grid, 3, 7, 2, 128).unwrap());
            assert!(a.prefix.len() + a.targets.len() <= 129);
        }
    }

    #[test]
    fn stage_grid_caps_patches() {
        let s = paper_schedule(0.001).unwrap();
        assert_eq!(stage_grid(&s.stages[0], 4096).unwrap(), PatchGrid::new(16, 16).unwrap());
        assert_eq!(stage_grid(&s.stages[3], 4096).unwrap(), PatchGrid::new(64, 64).unwrap());
        assert_eq!(stage_grid(&s.stages[3], 1024).unwrap(), PatchGrid::new(32, 32).unwrap());
        assert_eq!(stage_grid(&s.stages[0], 64).unwrap(), PatchGrid::new(8, 8).unwrap());
    }

    fn record(step: u64, roles: &[(crate::targets::LossRole, f64)], mae: Option<f64>) -> StepRecord {
        StepRecord {
            step,
            stage: 1,
            task: Task::Mdtg,
            losses: BatchLosses {
                total: 1.5,
                mae,
                roles: roles.iter().copied().collect::<BTreeMap<_, _>>(),
            },
        }
    }

    #[test]
    fn loss_log_format() {
        use crate::targets::LossRole;
        let log = LossLog::new(Vec::new()).unwrap();
        assert_eq!(String::from_utf8(log.into_inner()).unwrap(), "step,stage,task,total,mae,ocr,mlm,qa,bb\n");
        let mut log = LossLog::new(Vec::new()).unwrap();
        log.append(&record(0, &[(LossRole::Ocr, 0.5), (LossRole::Mlm, 1.0)], None)).unwrap();
        assert!(log.append(&record(0, &[], Some(1.0))).is_err());
        let text = String::from_utf8(log.into_inner()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,MDTG,1.5,,0.5,1,,");
    }

    #[test]
    fn short_run_is_reproducible() {
        let config = ModelConfig {
            max_patches: 16,
            max_text_len: 128,
            ..ModelConfig::tiny()
        };
        let schedule = CurriculumSchedule::with_total_steps(6).unwrap();
        let hyper = scaled_hyperparameters(&schedule, 1e-3);
        let run = || {
            let mut p = init_params(&config).unwrap();
            let mut rows = Vec::new();
            run_pretraining(&mut p, &schedule, &hyper, &RoleWeights::default(), 5, Some(1), |r| {
                rows.push(r.clone());
                Ok(())
            })
            .unwrap();
            (p, rows)
        };
        let (p1, r1) = run();
        let (p2, r2) = run();
        assert_eq!(r1.len(), 6);
        assert_eq!(r1, r2);
        assert_eq!(p1, p2);
    }
}
