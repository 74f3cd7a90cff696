use std::collections::HashSet;

use super::{log_softmax, MaskedLm};
use crate::error::{Error, Result};
use crate::tokenize::{stable_hash, HashTokenizer, Tokenizer, WordTokenizer, NUM_SPECIAL};

fn check_mask(token_ids: &[u32], pos: usize, mask: u32) -> Result<()> {
    match token_ids.get(pos) {
        Some(&id) if id == mask => Ok(()),
        Some(&id) => Err(Error::Backend(format!(
            "position {pos} holds token {id}, not the mask token"
        ))),
        None => Err(Error::Backend(format!(
            "masked position {pos} outside sequence of length {}",
            token_ids.len()
        ))),
    }
}

fn unit_hash(parts: &[&[u8]]) -> f64 {
    (stable_hash(parts) >> 11) as f64 / (1u64 << 53) as f64
}

/// Every token equally likely at every position.
#[derive(Debug, Clone)]
pub struct UniformLm {
    tokenizer: HashTokenizer,
}

impl UniformLm {
    pub fn new(vocab_size: usize) -> Result<Self> {
        Ok(UniformLm {
            tokenizer: HashTokenizer::new(vocab_size)?,
        })
    }
}

impl MaskedLm for UniformLm {
    fn id(&self) -> &str {
        "mock-uniform"
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn masked_logprobs(&self, token_ids: &[u32], pos: usize) -> Result<Vec<f64>> {
        check_mask(token_ids, pos, self.tokenizer.specials().mask)?;
        let v = self.tokenizer.vocab_size();
        Ok(vec![-(v as f64).ln(); v])
    }
}

/// A fixed pseudo-random conditional table: the distribution at a masked position is a
/// deterministic function of the masked sequence, the position and the seed.
#[derive(Debug, Clone)]
pub struct TableLm {
    tokenizer: HashTokenizer,
    seed: u64,
    temperature: f64,
}

impl TableLm {
    pub fn new(vocab_size: usize, seed: u64) -> Result<Self> {
        Ok(TableLm {
            tokenizer: HashTokenizer::new(vocab_size)?,
            seed,
            temperature: 4.0,
        })
    }

    pub fn hash_tokenizer(&self) -> &HashTokenizer {
        &self.tokenizer
    }

    fn logits(&self, token_ids: &[u32], pos: usize) -> Vec<f64> {
        let ctx: Vec<u8> = token_ids.iter().flat_map(|t| t.to_le_bytes()).collect();
        let ctx_hash = stable_hash(&[&self.seed.to_le_bytes(), &ctx, &(pos as u64).to_le_bytes()]);
        (0..self.tokenizer.vocab_size() as u32)
            .map(|v| self.temperature * unit_hash(&[&ctx_hash.to_le_bytes(), &v.to_le_bytes()]))
            .collect()
    }
}

impl MaskedLm for TableLm {
    fn id(&self) -> &str {
        "mock-table"
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn masked_logprobs(&self, token_ids: &[u32], pos: usize) -> Result<Vec<f64>> {
        check_mask(token_ids, pos, self.tokenizer.specials().mask)?;
        Ok(log_softmax(&self.logits(token_ids, pos)))
    }
}

/// A masked LM that "knows" a set of reference sentences.
///
/// At a masked position, a token forming a trigram seen in the references gets the highest
/// logit, any other reference word a middle logit, and everything else a small deterministic
/// jitter. Reference sentences therefore always outscore single-word perturbations of them,
/// and filler vocabulary occupies the low ranks used for distractor decoding.
#[derive(Debug, Clone)]
pub struct LexiconLm {
    tokenizer: WordTokenizer,
    trigrams: HashSet<(u32, u32, u32)>,
    known: HashSet<u32>,
}

const TRIGRAM_LOGIT: f64 = 8.0;
const KNOWN_LOGIT: f64 = 4.0;
const SPECIAL_LOGIT: f64 = -30.0;

impl LexiconLm {
    /// `references` are the sentences the model should prefer; `extra_texts` only extend the
    /// vocabulary. The vocabulary is padded with filler words to at least `min_vocab` entries.
    pub fn new<'a>(
        references: impl IntoIterator<Item = &'a str> + Clone,
        extra_texts: impl IntoIterator<Item = &'a str>,
        min_vocab: usize,
    ) -> Self {
        let tokenizer = WordTokenizer::from_texts(
            references.clone().into_iter().chain(extra_texts),
            min_vocab,
        );
        let en = crate::data::LanguageCode::english();
        let mut trigrams = HashSet::new();
        let mut known = HashSet::new();
        for r in references {
            let ids = tokenizer.tokenize(r, &en).token_ids;
            for w in ids.windows(3) {
                trigrams.insert((w[0], w[1], w[2]));
            }
            known.extend(ids.iter().copied().filter(|&i| i >= NUM_SPECIAL));
        }
        LexiconLm {
            tokenizer,
            trigrams,
            known,
        }
    }

    pub fn word_tokenizer(&self) -> &WordTokenizer {
        &self.tokenizer
    }

    fn logits(&self, token_ids: &[u32], pos: usize) -> Vec<f64> {
        let left = if pos > 0 { token_ids[pos - 1] } else { u32::MAX };
        let right = token_ids.get(pos + 1).copied().unwrap_or(u32::MAX);
        (0..self.tokenizer.vocab_size() as u32)
            .map(|v| {
                if v < NUM_SPECIAL {
                    SPECIAL_LOGIT
                } else if self.trigrams.contains(&(left, v, right)) {
                    TRIGRAM_LOGIT
                } else if self.known.contains(&v) {
                    KNOWN_LOGIT
                } else {
                    unit_hash(&[&v.to_le_bytes(), &(pos as u64).to_le_bytes()])
                }
            })
            .collect()
    }
}

impl MaskedLm for LexiconLm {
    fn id(&self) -> &str {
        "mock-lexicon"
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn masked_logprobs(&self, token_ids: &[u32], pos: usize) -> Result<Vec<f64>> {
        check_mask(token_ids, pos, self.tokenizer.specials().mask)?;
        Ok(log_softmax(&self.logits(token_ids, pos)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::log_sum_exp;
    use crate::data::LanguageCode;
    use crate::tokenize::MASK_ID;

    fn masked(lm: &dyn MaskedLm, text: &str, pos: usize) -> Vec<u32> {
        let mut ids = lm.tokenizer().tokenize(text, &LanguageCode::english()).token_ids;
        ids[pos] = MASK_ID;
        ids
    }

    #[test]
    fn mocks_are_normalized() {
        let uniform = UniformLm::new(10).unwrap();
        let table = TableLm::new(300, 7).unwrap();
        let lex = LexiconLm::new(["birds can fly"], [], 400);
        for lm in [&uniform as &dyn MaskedLm, &table, &lex] {
            let ids = masked(lm, "birds can fly", 2);
            let lp = lm.masked_logprobs(&ids, 2).unwrap();
            assert_eq!(lp.len(), lm.vocab_size());
            assert!(log_sum_exp(&lp).abs() < 1e-4);
        }
    }

    #[test]
    fn unmasked_position_is_rejected() {
        let table = TableLm::new(50, 1).unwrap();
        let ids = table.tokenizer().tokenize("a b", &LanguageCode::english()).token_ids;
        assert!(table.masked_logprobs(&ids, 1).is_err());
        assert!(table.masked_logprobs(&ids, 10).is_err());
    }

    #[test]
    fn lexicon_prefers_reference_trigrams() {
        let lex = LexiconLm::new(["birds can fly"], [], 300);
        let ids = masked(&lex, "birds can fly", 3);
        let lp = lex.masked_logprobs(&ids, 3).unwrap();
        let fly = lex.word_tokenizer().id_of("fly").unwrap();
        let best = (0..lp.len()).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).unwrap();
        assert_eq!(best as u32, fly);
    }
}
