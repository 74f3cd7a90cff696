//! Synthetic toy data for smoke pipelines: template truths and a separable multiple-choice
//! task whose correct options reuse the truth vocabulary and whose wrong options are filler
//! words.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LanguageCode, McqItem};
use crate::error::Result;
use crate::tokenize::pseudo_word;

pub const NOUNS: [&str; 12] = [
    "bird", "fish", "dog", "cat", "child", "farmer", "river", "tree", "baker", "horse", "student", "pilot",
];
pub const VERBS: [&str; 10] = ["see", "carry", "find", "like", "follow", "help", "watch", "feed", "clean", "visit"];
pub const ADJS: [&str; 8] = ["small", "happy", "old", "quick", "green", "quiet", "tall", "warm"];

/// First filler index used for wrong options; far above any probe vocabulary padding.
const FILLER_OFFSET: usize = 50_000;

/// `n` distinct template sentences.
pub fn truths(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let s = format!(
            "the {} {} can {} the {} .",
            ADJS.choose(&mut rng).unwrap(),
            NOUNS.choose(&mut rng).unwrap(),
            VERBS.choose(&mut rng).unwrap(),
            NOUNS.choose(&mut rng).unwrap(),
        );
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// English items: the answer is `"<verb> the <noun>"`, every other option is two filler words.
pub fn mcq_items(n: usize, n_options: usize, seed: u64, id_prefix: &str) -> Result<Vec<McqItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let noun = NOUNS.choose(&mut rng).unwrap();
            let answer = rng.gen_range(0..n_options);
            let options = (0..n_options)
                .map(|j| {
                    if j == answer {
                        format!("{} the {}", VERBS.choose(&mut rng).unwrap(), NOUNS.choose(&mut rng).unwrap())
                    } else {
                        let a = rng.gen_range(0..10_000);
                        let b = rng.gen_range(0..10_000);
                        format!("{} the {}", pseudo_word(FILLER_OFFSET + a), pseudo_word(FILLER_OFFSET + b))
                    }
                })
                .collect();
            McqItem::new(
                format!("{id_prefix}{i:05}"),
                &format!("what can the {} {noun} do ?", ADJS.choose(&mut rng).unwrap()),
                options,
                Some(answer),
                LanguageCode::english(),
                None,
            )
        })
        .collect()
}
