//! Answer-scoring metrics: ANLS, exact match and token F1 (SQuAD-style
//! normalization), with dataset-level aggregation.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records to evaluate")]
    EmptyDataset,
    #[error("record {0} has no gold answers")]
    NoGolds(usize),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

pub const ANLS_THRESHOLD: f64 = 0.5;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn anls_norm(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized Levenshtein similarity, zeroed below `threshold`.
pub fn nls(prediction: &str, gold: &str, threshold: f64) -> f64 {
    let (p, g) = (anls_norm(prediction), anls_norm(gold));
    let max_len = p.chars().count().max(g.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    let s = 1.0 - levenshtein(&p, &g) as f64 / max_len as f64;
    if s >= threshold {
        s
    } else {
        0.0
    }
}

pub fn anls(prediction: &str, golds: &[String], threshold: f64) -> f64 {
    golds
        .iter()
        .map(|g| nls(prediction, g, threshold))
        .fold(0.0, f64::max)
}

/// Lowercase, drop punctuation and the articles a/an/the, collapse whitespace.
pub fn squad_normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(prediction: &str, golds: &[String]) -> f64 {
    let p = squad_normalize(prediction);
    if golds.iter().any(|g| squad_normalize(g) == p) {
        1.0
    } else {
        0.0
    }
}

fn f1_single(prediction: &str, gold: &str) -> f64 {
    let p = squad_normalize(prediction);
    let g = squad_normalize(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn token_f1(prediction: &str, golds: &[String]) -> f64 {
    golds.iter().map(|g| f1_single(prediction, g)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Anls,
    Em,
    F1,
    Accuracy,
}

impl Metric {
    pub fn parse(name: &str) -> Result<Metric, MetricsError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "anls" => Ok(Metric::Anls),
            "em" | "exact_match" => Ok(Metric::Em),
            "f1" => Ok(Metric::F1),
            "accuracy" | "acc" => Ok(Metric::Accuracy),
            other => Err(MetricsError::UnknownMetric(other.to_string())),
        }
    }

    pub fn score(self, prediction: &str, golds: &[String]) -> f64 {
        match self {
            Metric::Anls => anls(prediction, golds, ANLS_THRESHOLD),
            Metric::Em => exact_match(prediction, golds),
            Metric::F1 => token_f1(prediction, golds),
            // Classification-style: the label must match a gold exactly after trimming.
            Metric::Accuracy => f64::from(golds.iter().any(|g| g.trim() == prediction.trim()) as u8),
        }
    }
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub prediction: String,
    pub golds: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub n: usize,
}

pub type Report = BTreeMap<Metric, MetricSummary>;

/// Per-metric mean over all records.
pub fn evaluate_dataset<'a, I>(records: I, metrics: &[Metric]) -> Result<Report, MetricsError>
where
    I: IntoIterator<Item = &'a EvalRecord>,
{
    let mut sums: BTreeMap<Metric, f64> = metrics.iter().map(|&m| (m, 0.0)).collect();
    let mut n = 0;
    for (i, r) in records.into_iter().enumerate() {
        if r.golds.is_empty() {
            return Err(MetricsError::NoGolds(i));
        }
        for (m, sum) in sums.iter_mut() {
            *sum += m.score(&r.prediction, &r.golds);
        }
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    Ok(sums
        .into_iter()
        .map(|(m, s)| (m, MetricSummary { mean: s / n as f64, n }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golds(g: &[&str]) -> Vec<String> {
        g.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("piano", "pianos"), 1);
        assert_eq!(levenshtein("red", "blue"), 4);
        assert_eq!(levenshtein("naïve", "naive"), 1);
    }

    #[test]
    fn anls_examples() {
        assert_eq!(anls("Answer", &golds(&["answer"]), 0.5), 1.0);
        assert!((anls("pianos", &golds(&["piano"]), 0.5) - (1.0 - 1.0 / 6.0)).abs() < 1e-9);
        assert_eq!(anls("blue", &golds(&["red"]), 0.5), 0.0);
        assert_eq!(anls("", &golds(&[""]), 0.5), 1.0);
        assert_eq!(anls("blue", &golds(&["red", "Blue "]), 0.5), 1.0);
    }

    #[test]
    fn em_and_f1() {
        assert_eq!(exact_match("The Cat", &golds(&["cat"])), 1.0);
        assert_eq!(exact_match("cat", &golds(&["cats"])), 0.0);
        assert_eq!(exact_match("x y", &golds(&["x y"])), 1.0);
        assert!((token_f1("york city", &golds(&["new york city"])) - 0.8).abs() < 1e-12);
        assert_eq!(token_f1("a b", &golds(&["c d"])), 0.0);
        assert_eq!(token_f1("new york", &golds(&["New York!"])), 1.0);
    }

    #[test]
    fn aggregation() {
        let recs = vec![
            EvalRecord { prediction: "x".into(), golds: golds(&["x"]) },
            EvalRecord { prediction: "zzzz".into(), golds: golds(&["x"]) },
        ];
        let r = evaluate_dataset(&recs[..1], &[Metric::Em]).unwrap();
        assert_eq!(r[&Metric::Em], MetricSummary { mean: 1.0, n: 1 });
        let r = evaluate_dataset(&recs, &[Metric::Anls, Metric::F1]).unwrap();
        assert_eq!(r[&Metric::Anls].mean, 0.5);
        assert!(r.values().all(|s| (0.0..=1.0).contains(&s.mean)));
        assert_eq!(evaluate_dataset(&[], &[Metric::Em]), Err(MetricsError::EmptyDataset));
        let bad = [EvalRecord { prediction: "x".into(), golds: vec![] }];
        assert_eq!(evaluate_dataset(&bad, &[Metric::Em]), Err(MetricsError::NoGolds(0)));
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"anls":{"mean":0.5,"n":2},"f1":{"mean":0.5,"n":2}}"#);
    }

    #[test]
    fn metric_names() {
        assert_eq!(Metric::parse("ANLS").unwrap(), Metric::Anls);
        assert!(Metric::parse("bleu").is_err());
    }
}
