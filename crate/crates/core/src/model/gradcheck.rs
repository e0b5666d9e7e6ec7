//! Central finite-difference checks of the analytic gradients.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::forward::{batch_loss, forward_backward, PreparedExample, RoleWeights};
use super::params::{init_params, Parameters};
use super::{ModelConfig, ModelError};
use crate::patchify::{PatchGrid, PatchSequence, PATCH_VALUES};
use crate::targets::{LossRole, TaskTag};
use crate::tokenizer::{Special, TokenId};

/// Norms below this are treated as zero when forming relative errors.
pub const NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checks: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |c| c.rel_error)
    }

    pub fn entries_checked(&self) -> usize {
        self.checks.iter().map(|c| c.checked).sum()
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, NORM_FLOOR)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(NORM_FLOOR);
    diff / scale
}

/// Compares analytic gradients with central differences of step `h`.
/// `per_tensor` caps the entries probed in each tensor (half the largest
/// analytic entries, half random); `None` probes every entry.
pub fn check_gradients(
    p: &Parameters,
    batch: &[PreparedExample],
    weights: &RoleWeights,
    h: f64,
    per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = forward_backward(p, batch, weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = p.clone();
    let mut checks = Vec::new();
    let grad_tensors = grads.tensors();
    for (ti, g) in grad_tensors.iter().enumerate() {
        let picks = select_entries(&g.data, per_tensor, &mut rng);
        let mut analytic = Vec::with_capacity(picks.len());
        let mut numeric = Vec::with_capacity(picks.len());
        for &j in &picks {
            let orig = work.tensors()[ti].data[j];
            work.tensors_mut()[ti].data[j] = orig + h;
            let up = batch_loss(&work, batch, weights)?.total;
            work.tensors_mut()[ti].data[j] = orig - h;
            let down = batch_loss(&work, batch, weights)?.total;
            work.tensors_mut()[ti].data[j] = orig;
            analytic.push(g.data[j]);
            numeric.push((up - down) / (2.0 * h));
        }
        checks.push(TensorCheck {
            name: g.name.clone(),
            checked: picks.len(),
            rel_error: relative_error(&analytic, &numeric),
        });
    }
    Ok(GradCheckReport { checks })
}

/// Checks every entry of every tensor for each head in `heads`, reading all
/// heads off the same loss evaluations.
///
/// Each tensor, then each row of it, is first moved by a random step of size
/// about `h` in both directions. A head whose loss stays bit-identical does
/// not depend on that block, so its central differences there are exactly
/// zero and are not evaluated entry by entry. The analytic gradient is still
/// compared against those zeros.
pub fn check_heads(
    p: &Parameters,
    batch: &[PreparedExample],
    heads: &[&str],
    h: f64,
    seed: u64,
) -> Result<Vec<(String, GradCheckReport)>, ModelError> {
    let unknown = |name: &str| ModelError::InvalidExample(format!("unknown head {name:?}"));
    let mut weights = RoleWeights::zero();
    let mut analytic = Vec::with_capacity(heads.len());
    let mut scale = Vec::with_capacity(heads.len());
    for &head in heads {
        let w = single_head(head).ok_or_else(|| unknown(head))?;
        weights.mae += w.mae;
        weights.ocr += w.ocr;
        weights.mlm += w.mlm;
        weights.qa += w.qa;
        weights.bb += w.bb;
        analytic.push(forward_backward(p, batch, &w)?.1);
        // Per-head batch losses average over the examples carrying the head;
        // the single-head total averages over the whole batch.
        let mut carrying = 0;
        for ex in batch {
            if batch_loss(p, std::slice::from_ref(ex), &w)?.get(head).is_some() {
                carrying += 1;
            }
        }
        if carrying == 0 {
            return Err(ModelError::InvalidExample(format!("no example carries head {head:?}")));
        }
        scale.push(carrying as f64 / batch.len() as f64);
    }
    let eval = |work: &Parameters| -> Result<Vec<f64>, ModelError> {
        let l = batch_loss(work, batch, &weights)?;
        heads
            .iter()
            .zip(&scale)
            .map(|(&head, s)| l.get(head).map(|v| v * s).ok_or_else(|| unknown(head)))
            .collect()
    };
    let base = eval(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = p.clone();
    let mut reports: Vec<Vec<TensorCheck>> = vec![Vec::new(); heads.len()];

    let n_tensors = p.tensors().len();
    for ti in 0..n_tensors {
        let (n, row) = {
            let t = &p.tensors()[ti];
            let n = t.data.len();
            (n, if t.shape.len() > 1 { *t.shape.last().expect("non-empty shape") } else { n })
        };
        let mut probe = |range: std::ops::Range<usize>, work: &mut Parameters| -> Result<Vec<bool>, ModelError> {
            let step: Vec<f64> = range
                .clone()
                .map(|_| {
                    let m = h * rng.random_range(0.5..1.5);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            let orig: Vec<f64> = work.tensors()[ti].data[range.clone()].to_vec();
            let set = |work: &mut Parameters, sign: f64| {
                let data = &mut work.tensors_mut()[ti].data[range.clone()];
                for ((v, o), s) in data.iter_mut().zip(&orig).zip(&step) {
                    *v = o + sign * s;
                }
            };
            set(work, 1.0);
            let up = eval(work)?;
            set(work, -1.0);
            let down = eval(work)?;
            set(work, 0.0);
            Ok((0..base.len())
                .map(|i| up[i].to_bits() != base[i].to_bits() || down[i].to_bits() != base[i].to_bits())
                .collect())
        };
        let mut numeric = vec![vec![0.0; n]; heads.len()];
        let whole = probe(0..n, &mut work)?;
        if whole.iter().any(|&d| d) {
            for start in (0..n).step_by(row) {
                let rows = if row < n { probe(start..start + row, &mut work)? } else { whole.clone() };
                if !rows.iter().any(|&d| d) {
                    continue;
                }
                for j in start..start + row {
                    let orig = work.tensors()[ti].data[j];
                    work.tensors_mut()[ti].data[j] = orig + h;
                    let up = eval(&work)?;
                    work.tensors_mut()[ti].data[j] = orig - h;
                    let down = eval(&work)?;
                    work.tensors_mut()[ti].data[j] = orig;
                    for (col, (u, d)) in numeric.iter_mut().zip(up.iter().zip(&down)) {
                        col[j] = (u - d) / (2.0 * h);
                    }
                }
            }
        }
        for (i, report) in reports.iter_mut().enumerate() {
            let g = &analytic[i].tensors()[ti];
            report.push(TensorCheck {
                name: g.name.clone(),
                checked: n,
                rel_error: relative_error(&g.data, &numeric[i]),
            });
        }
    }
    Ok(heads
        .iter()
        .zip(reports)
        .map(|(head, checks)| (head.to_string(), GradCheckReport { checks }))
        .collect())
}

fn select_entries(g: &[f64], cap: Option<usize>, rng: &mut impl Rng) -> Vec<usize> {
    let n = g.len();
    let cap = match cap {
        Some(c) if c < n => c,
        _ => return (0..n).collect(),
    };
    let mut by_size: Vec<usize> = (0..n).collect();
    by_size.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    let mut picked: Vec<usize> = by_size[..cap / 2].to_vec();
    for j in index::sample(rng, n, cap) {
        if picked.len() == cap {
            break;
        }
        if !picked.contains(&j) {
            picked.push(j);
        }
    }
    picked.sort_unstable();
    picked
}

/// Moves every tensor away from its initial value so that norms, biases and
/// attention weights all carry non-trivial gradients.
pub fn perturb(p: &mut Parameters, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, std).expect("positive std");
    for t in p.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
    }
}

/// One example per loss head (MAE, OCR, MLM, QA, BB) on a 4×4 patch grid.
pub fn fixture(seed: u64) -> Result<(Parameters, Vec<PreparedExample>), ModelError> {
    let config = ModelConfig {
        seed,
        ..ModelConfig::tiny()
    };
    let mut p = init_params(&config)?;
    perturb(&mut p, 0.3, seed ^ 0x9e37);
    let grid = PatchGrid::new(4, 4).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = || {
        let data = (0..grid.num_patches() * PATCH_VALUES).map(|_| rng.random::<f64>()).collect();
        PatchSequence::from_data(grid, data).expect("sized to grid")
    };
    let end = Special::End.id();
    let ex = |task, patches, prefix: Vec<TokenId>, targets: Vec<TokenId>, roles: Vec<LossRole>, mae_mask| {
        PreparedExample {
            task,
            patches,
            prefix,
            targets,
            roles,
            mae_mask,
        }
    };
    use LossRole::*;
    let batch = vec![
        ex(TaskTag::Mae, patches(), vec![Special::Mae.id()], vec![], vec![], vec![3, 10]),
        ex(
            TaskTag::Mdtg,
            patches(),
            vec![Special::Mdtg.id()],
            vec![72, 105, 32, 116, 104, 101, 114, 101, end],
            vec![Ocr, Ocr, Ignore, Mlm, Mlm, Mlm, Mlm, Ocr, Ocr],
            vec![],
        ),
        ex(TaskTag::Rqa, patches(), vec![Special::Qa.id(), 119, 104, 111, 63], vec![66, 111, 98, end], vec![Qa; 4], vec![]),
        ex(
            TaskTag::Bb,
            patches(),
            vec![Special::Bb.id(), 97, 98],
            vec![49, 32, 50, 32, 55, 32, 57, end],
            vec![Bb; 8],
            vec![],
        ),
    ];
    Ok((p, batch))
}

/// Weights that keep only one head switched on.
pub fn single_head(name: &str) -> Option<RoleWeights> {
    let mut w = RoleWeights::zero();
    match name {
        "mae" => w.mae = 1.0,
        "ocr" => w.ocr = 1.0,
        "mlm" => w.mlm = 1.0,
        "qa" => w.qa = 1.0,
        "bb" => w.bb = 1.0,
        _ => return None,
    }
    Some(w)
}

pub const HEADS: [&str; 5] = ["mae", "ocr", "mlm", "qa", "bb"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0], &[0.0]) - 1.0).abs() < 1e-15);
        assert!(relative_error(&[0.0], &[1e-12]) < 1e-5);
    }

    #[test]
    fn sampled_check_passes_on_qa_head() {
        let (p, batch) = fixture(3).unwrap();
        let report = check_gradients(&p, &batch[2..3], &single_head("qa").unwrap(), 1e-4, Some(4), 1).unwrap();
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }

    #[test]
    fn check_heads_rejects_absent_heads() {
        let (p, batch) = fixture(3).unwrap();
        assert!(check_heads(&p, &batch[..1], &["qa"], 1e-4, 0).is_err());
        assert!(check_heads(&p, &batch[..1], &["nope"], 1e-4, 0).is_err());
    }

    #[test]
    fn selection_respects_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = select_entries(&g, Some(10), &mut rng);
        assert_eq!(s.len(), 10);
        assert!(s.contains(&99));
        assert_eq!(select_entries(&g, None, &mut rng).len(), 100);
    }
}
