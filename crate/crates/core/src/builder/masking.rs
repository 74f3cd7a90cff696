use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tagger::{TaggedWord, Tagger};
use crate::backend::MaskedLm;
use crate::data::Assertion;
use crate::error::{Error, Result};
use crate::tokenize::{join_words, MASK_LITERAL};

pub const MAX_MASKED_WORDS: usize = 3;

/// Which words of a truth assertion get replaced by a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskingPlan {
    pub source: Assertion,
    pub words: Vec<TaggedWord>,
    /// Ascending word indices, each tagged noun, verb or adjective.
    pub masked_word_positions: Vec<usize>,
}

impl MaskingPlan {
    /// The source text with every masked word replaced by the mask literal.
    pub fn masked_text(&self) -> String {
        let words: Vec<&str> = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if self.masked_word_positions.contains(&i) {
                    MASK_LITERAL
                } else {
                    w.surface.as_str()
                }
            })
            .collect();
        join_words(&words)
    }
}

/// Samples a mask count uniformly from `{1, 2, 3}` (capped by the number of eligible words)
/// and then that many distinct eligible positions. `Ok(None)` means the truth has no eligible
/// word and the probe should be skipped.
pub fn plan_masks<R: Rng + ?Sized>(
    truth: &Assertion,
    tagger: &dyn Tagger,
    rng: &mut R,
) -> Result<Option<MaskingPlan>> {
    let words = tagger.tag(truth.text(), truth.language())?;
    let eligible: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_maskable())
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Ok(None);
    }
    let count = rng.gen_range(1..=MAX_MASKED_WORDS).min(eligible.len());
    let mut positions: Vec<usize> = sample(rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    positions.sort_unstable();
    Ok(Some(MaskingPlan {
        source: truth.clone(),
        words,
        masked_word_positions: positions,
    }))
}

/// Inclusive 1-based rank window; rank 1 is the most probable token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankWindow {
    pub lo: usize,
    pub hi: usize,
}

impl Default for RankWindow {
    fn default() -> Self {
        RankWindow { lo: 200, hi: 300 }
    }
}

impl RankWindow {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid rank window [{lo}, {hi}]")));
        }
        Ok(RankWindow { lo, hi })
    }

    pub fn contains(&self, rank: usize) -> bool {
        (self.lo..=self.hi).contains(&rank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub token_id: u32,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorCandidate {
    pub text: String,
    pub decode_trace: Vec<DecodeStep>,
}

/// Non-special token ids ordered by descending log-probability (ties by ascending id).
/// Position `r - 1` of the result holds the token of rank `r`.
pub fn rank_tokens(logprobs: &[f64], special: &[u32]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..logprobs.len() as u32)
        .filter(|id| !special.contains(id))
        .collect();
    ids.sort_by(|&a, &b| {
        logprobs[b as usize]
            .total_cmp(&logprobs[a as usize])
            .then(a.cmp(&b))
    });
    ids
}

/// Fills the plan's masks left to right, each time sampling uniformly among the tokens whose
/// rank lies inside `window`. Earlier fills condition later ones.
pub fn decode_distractor<R: Rng + ?Sized>(
    plan: &MaskingPlan,
    backend: &dyn MaskedLm,
    rng: &mut R,
    window: RankWindow,
) -> Result<DistractorCandidate> {
    let tokenizer = backend.tokenizer();
    let sp = tokenizer.specials();
    let special = [sp.pad, sp.cls, sp.sep, sp.mask, sp.unk];
    let rankable = backend.vocab_size().saturating_sub(special.len());
    if rankable < window.hi {
        return Err(Error::Config(format!(
            "vocabulary of {} tokens cannot serve rank window [{}, {}]",
            backend.vocab_size(),
            window.lo,
            window.hi
        )));
    }
    let mut ids = tokenizer
        .tokenize(&plan.masked_text(), plan.source.language())
        .token_ids;
    let mask_positions: Vec<usize> = ids
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t == sp.mask)
        .map(|(i, _)| i)
        .collect();
    if mask_positions.is_empty() {
        return Err(Error::Backend(
            "tokenizer produced no mask token for the masked text".into(),
        ));
    }
    let mut trace = Vec::with_capacity(mask_positions.len());
    for pos in mask_positions {
        let lp = backend
            .masked_logprobs(&ids, pos)
            .map_err(|e| e.with_context(format_args!("decoding position {pos}")))?;
        let ranked = rank_tokens(&lp, &special);
        let rank = rng.gen_range(window.lo..=window.hi);
        let token_id = ranked[rank - 1];
        ids[pos] = token_id;
        trace.push(DecodeStep { token_id, rank });
    }
    let text = tokenizer
        .decode(&ids)
        .ok_or_else(|| Error::Backend("tokenizer cannot decode the filled sequence".into()))?;
    Ok(DistractorCandidate {
        text,
        decode_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::tagger::LexiconTagger;
    use crate::data::LanguageCode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn birds_tagger() -> LexiconTagger {
        let en = LanguageCode::english();
        let mut t = LexiconTagger::default();
        t.insert(&en, "birds", "NOUN", "Number=Plur");
        t.insert(&en, "can", "AUX", "_");
        t.insert(&en, "fly", "VERB", "_");
        t
    }

    #[test]
    fn only_eligible_positions_are_masked() {
        let truth = Assertion::new("birds can fly", LanguageCode::english()).unwrap();
        let tagger = birds_tagger();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let plan = plan_masks(&truth, &tagger, &mut rng).unwrap().unwrap();
            assert!(!plan.masked_word_positions.is_empty());
            assert!(plan.masked_word_positions.iter().all(|p| *p == 0 || *p == 2));
        }
    }

    #[test]
    fn single_eligible_word_always_chosen() {
        let en = LanguageCode::english();
        let mut tagger = birds_tagger();
        tagger.insert(&en, "birds", "PRON", "_");
        let truth = Assertion::new("birds can fly", en).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let plan = plan_masks(&truth, &tagger, &mut rng).unwrap().unwrap();
            assert_eq!(plan.masked_word_positions, vec![2]);
            assert_eq!(plan.masked_text(), "birds can [MASK]");
        }
    }

    #[test]
    fn no_eligible_word_signals_skip() {
        let en = LanguageCode::english();
        let mut tagger = LexiconTagger::default();
        tagger.insert(&en, "it", "PRON", "_");
        tagger.insert(&en, "is", "AUX", "_");
        let truth = Assertion::new("it is", en).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(plan_masks(&truth, &tagger, &mut rng).unwrap().is_none());
    }

    #[test]
    fn window_validation() {
        assert!(RankWindow::new(0, 3).is_err());
        assert!(RankWindow::new(5, 3).is_err());
        assert!(RankWindow::new(1, 1).unwrap().contains(1));
    }

    #[test]
    fn rank_tokens_skips_specials_and_orders_ties_by_id() {
        let lp = [-1.0, -0.5, -0.5, -3.0, -0.1];
        assert_eq!(rank_tokens(&lp, &[4]), vec![1, 2, 0, 3]);
    }
}
