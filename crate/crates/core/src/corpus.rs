//! Synthetic text for pretraining: word passages and short fact lists with
//! questions about them.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 48] = [
    "alpha", "river", "stone", "paper", "green", "cloud", "north", "table", "light", "seven", "market", "bridge",
    "window", "silver", "garden", "engine", "harbor", "letter", "forest", "signal", "copper", "winter", "orange",
    "pixel", "delta", "ocean", "tower", "maple", "atlas", "cabin", "lemon", "piano", "radio", "metal", "field",
    "storm", "glass", "honey", "coral", "ember", "frost", "grain", "ivory", "jazz", "kite", "lunar", "mango", "noble",
];

const THINGS: [&str; 12] = [
    "lamp", "door", "car", "cup", "kite", "boat", "hat", "book", "chair", "bike", "vase", "coat",
];

const COLORS: [&str; 8] = ["red", "blue", "green", "black", "white", "gray", "pink", "gold"];

/// Space-separated words, at most `max_chars` long (and never empty).
pub fn passage(seed: u64, max_chars: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(4..=12);
    let mut text = String::new();
    for _ in 0..target {
        let word = if rng.random_bool(0.15) {
            rng.random_range(0..1000).to_string()
        } else {
            WORDS.choose(&mut rng).expect("non-empty").to_string()
        };
        let extra = if text.is_empty() { word.len() } else { word.len() + 1 };
        if text.len() + extra > max_chars {
            break;
        }
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&word);
    }
    if text.is_empty() {
        text.push_str(&WORDS[0][..WORDS[0].len().min(max_chars.max(1))]);
    }
    text
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactPassage {
    pub text: String,
    pub question: String,
    pub answer: String,
}

/// Two to four sentences of the form `the cup is red.` plus a question about
/// one of them.
pub fn fact_passage(seed: u64) -> FactPassage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4);
    let things: Vec<&str> = THINGS.choose_multiple(&mut rng, n).copied().collect();
    let colors: Vec<&str> = (0..n).map(|_| *COLORS.choose(&mut rng).expect("non-empty")).collect();
    let text = things
        .iter()
        .zip(&colors)
        .map(|(t, c)| format!("the {t} is {c}."))
        .collect::<Vec<_>>()
        .join(" ");
    let k = rng.random_range(0..n);
    FactPassage {
        text,
        question: format!("What color is the {}?", things[k]),
        answer: colors[k].to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passages_fit_and_repeat() {
        for seed in 0..200 {
            let p = passage(seed, 40);
            assert!(!p.is_empty() && p.len() <= 40);
            assert_eq!(p, passage(seed, 40));
        }
    }

    #[test]
    fn fact_answer_is_in_text() {
        for seed in 0..200 {
            let f = fact_passage(seed);
            let thing = f.question.trim_start_matches("What color is the ").trim_end_matches('?');
            assert!(f.text.contains(&format!("the {thing} is {}.", f.answer)));
        }
    }
}
