//! Four-stage pretraining schedule with cumulative task sets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurriculumError {
    #[error("scale must lie in (0, 1], got {0}")]
    ScaleOutOfRange(f64),
    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("need at least {min} total steps, got {got}")]
    TooFewSteps { min: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    Mae,
    Mdtg,
    Rqa,
    Bb,
    TableQa,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Mae => "MAE",
            Task::Mdtg => "MDTG",
            Task::Rqa => "RQA",
            Task::Bb => "BB",
            Task::TableQa => "TABLEQA",
        }
    }
}

pub const PAPER_STAGE_STEPS: [u64; 4] = [50_000, 350_000, 55_000, 150_000];
pub const LOW_RES_BATCH: u64 = 1024;
pub const HIGH_RES_BATCH: u64 = 256;

const STAGE_TASKS: [&[Task]; 4] = [
    &[Task::Mae, Task::Mdtg],
    &[Task::Mae, Task::Mdtg, Task::Rqa],
    &[Task::Mae, Task::Mdtg, Task::Rqa],
    &[Task::Mae, Task::Mdtg, Task::Rqa, Task::Bb, Task::TableQa],
];
const STAGE_RESOLUTION: [usize; 4] = [224, 224, 896, 896];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub index: usize,
    pub steps: u64,
    /// Square input side in pixels.
    pub resolution: usize,
    pub active_tasks: Vec<Task>,
    pub batch_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub scale: f64,
    pub stages: Vec<StageSpec>,
    /// Cumulative end step (exclusive) of each stage.
    pub boundaries: Vec<u64>,
}

fn scaled(scale: f64, n: u64) -> u64 {
    ((scale * n as f64).round() as u64).max(1)
}

impl CurriculumSchedule {
    fn from_steps(scale: f64, steps: [u64; 4]) -> Self {
        let stages: Vec<StageSpec> = (0..4)
            .map(|i| StageSpec {
                index: i + 1,
                steps: steps[i],
                resolution: STAGE_RESOLUTION[i],
                active_tasks: STAGE_TASKS[i].to_vec(),
                batch_size: scaled(scale, if i < 2 { LOW_RES_BATCH } else { HIGH_RES_BATCH }),
            })
            .collect();
        let boundaries = stages
            .iter()
            .scan(0, |acc, s| {
                *acc += s.steps;
                Some(*acc)
            })
            .collect();
        CurriculumSchedule {
            scale,
            stages,
            boundaries,
        }
    }

    pub fn total_steps(&self) -> u64 {
        *self.boundaries.last().expect("four stages")
    }

    /// Stage containing `step` under half-open cumulative intervals.
    pub fn stage_at(&self, step: u64) -> Result<&StageSpec, CurriculumError> {
        let i = self.boundaries.iter().position(|&b| step < b).ok_or(
            CurriculumError::StepOutOfRange {
                step,
                total: self.total_steps(),
            },
        )?;
        Ok(&self.stages[i])
    }

    /// First step of the stage with 1-based `index`.
    pub fn stage_start(&self, index: usize) -> u64 {
        if index <= 1 {
            0
        } else {
            self.boundaries[index - 2]
        }
    }

    /// Uniform choice over the active tasks at `step`.
    ///
    /// Steps inside a stage are grouped into consecutive blocks of
    /// `|active tasks|` steps and each block is a seeded permutation of the
    /// task set, so every step is marginally uniform and per-stage counts
    /// stay balanced to within one block.
    pub fn sample_task(&self, step: u64, seed: u64) -> Result<Task, CurriculumError> {
        let stage = self.stage_at(step)?;
        let k = stage.active_tasks.len() as u64;
        let offset = step - self.stage_start(stage.index);
        let block = offset / k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((stage.index as u64) << 48) ^ block);
        let mut order = stage.active_tasks.clone();
        order.shuffle(&mut rng);
        Ok(order[(offset % k) as usize])
    }

    /// Same stage structure with steps divided proportionally to the paper
    /// counts so that they sum to exactly `total` (largest remainder, each
    /// stage at least one step).
    pub fn with_total_steps(total: u64) -> Result<Self, CurriculumError> {
        if total < 4 {
            return Err(CurriculumError::TooFewSteps { min: 4, got: total });
        }
        let paper_total: u64 = PAPER_STAGE_STEPS.iter().sum();
        let mut steps = [0u64; 4];
        let mut remainders = [(0u64, 0usize); 4];
        for i in 0..4 {
            let exact = total as u128 * PAPER_STAGE_STEPS[i] as u128;
            steps[i] = (exact / paper_total as u128) as u64;
            remainders[i] = ((exact % paper_total as u128) as u64, i);
        }
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let assigned: u64 = steps.iter().sum();
        for &(_, i) in remainders.iter().take((total - assigned) as usize) {
            steps[i] += 1;
        }
        while let Some(empty) = steps.iter().position(|&s| s == 0) {
            let largest = (0..4).max_by_key(|&i| (steps[i], std::cmp::Reverse(i))).expect("four stages");
            steps[largest] -= 1;
            steps[empty] += 1;
        }
        let scale = (total as f64 / paper_total as f64).min(1.0);
        Ok(Self::from_steps(scale, steps))
    }
}

/// The four-stage schedule with every step count and batch size scaled.
pub fn paper_schedule(scale: f64) -> Result<CurriculumSchedule, CurriculumError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(CurriculumError::ScaleOutOfRange(scale));
    }
    Ok(CurriculumSchedule::from_steps(
        scale,
        PAPER_STAGE_STEPS.map(|n| scaled(scale, n)),
    ))
}
