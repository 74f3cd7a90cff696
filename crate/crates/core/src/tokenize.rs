//! Tokenizer contract plus the two in-process tokenizers used by the mock and toy backends.

use std::collections::HashMap;
use std::hash::Hasher;

use crate::data::LanguageCode;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const UNK_ID: u32 = 4;
pub const NUM_SPECIAL: u32 = 5;

pub const MASK_LITERAL: &str = "[MASK]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialTokens {
    pub pad: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
    pub unk: u32,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            pad: PAD_ID,
            cls: CLS_ID,
            sep: SEP_ID,
            mask: MASK_ID,
            unk: UNK_ID,
        }
    }
}

/// A sentence wrapped in boundary tokens, with the positions that count towards a PLL score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub surface: String,
    pub token_ids: Vec<u32>,
    pub scorable_positions: Vec<usize>,
}

/// `[CLS] prompt [SEP] option [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub token_ids: Vec<u32>,
    pub prompt_len: usize,
    pub option_len: usize,
    pub truncated: bool,
}

pub trait Tokenizer: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn specials(&self) -> SpecialTokens {
        SpecialTokens::default()
    }

    /// Subword ids for `text` without boundary tokens. The literal `[MASK]` maps to the mask id.
    fn pieces(&self, text: &str, language: &LanguageCode) -> Vec<u32>;

    /// Surface form of a single id, if the tokenizer can invert it.
    fn piece_text(&self, id: u32) -> Option<String>;

    /// Rebuilds text from ids, skipping special tokens other than the mask.
    fn decode(&self, ids: &[u32]) -> Option<String> {
        let sp = self.specials();
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            if id == sp.mask {
                words.push(MASK_LITERAL.to_string());
            } else if id == sp.cls || id == sp.sep || id == sp.pad {
                continue;
            } else {
                words.push(self.piece_text(id)?);
            }
        }
        Some(join_words(&words))
    }

    fn tokenize(&self, text: &str, language: &LanguageCode) -> TokenizedSentence {
        let sp = self.specials();
        let pieces = self.pieces(text, language);
        let mut token_ids = Vec::with_capacity(pieces.len() + 2);
        token_ids.push(sp.cls);
        token_ids.extend_from_slice(&pieces);
        token_ids.push(sp.sep);
        TokenizedSentence {
            surface: text.to_string(),
            scorable_positions: (1..=pieces.len()).collect(),
            token_ids,
        }
    }

    /// Encodes a prompt/option pair, truncating the option before the prompt.
    fn encode_pair(
        &self,
        prompt: &str,
        option: &str,
        language: &LanguageCode,
        max_len: usize,
    ) -> Result<EncodedPair> {
        let sp = self.specials();
        if max_len < 3 {
            return Err(Error::Config(format!(
                "max sequence length {max_len} cannot hold the three boundary tokens"
            )));
        }
        let mut p = self.pieces(prompt, language);
        let mut o = self.pieces(option, language);
        let budget = max_len - 3;
        let mut truncated = false;
        if p.len() + o.len() > budget {
            truncated = true;
            let keep_option = budget.saturating_sub(p.len());
            o.truncate(keep_option);
            p.truncate(budget - o.len());
        }
        let mut token_ids = Vec::with_capacity(p.len() + o.len() + 3);
        token_ids.push(sp.cls);
        token_ids.extend_from_slice(&p);
        token_ids.push(sp.sep);
        token_ids.extend_from_slice(&o);
        token_ids.push(sp.sep);
        Ok(EncodedPair {
            prompt_len: p.len(),
            option_len: o.len(),
            token_ids,
            truncated,
        })
    }
}

/// Splits on whitespace and peels ASCII punctuation into separate words.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        let mut rest = chunk;
        while let Some(ch) = rest.chars().next() {
            if let Some(after) = rest.strip_prefix(MASK_LITERAL) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(MASK_LITERAL.to_string());
                rest = after;
                continue;
            }
            rest = &rest[ch.len_utf8()..];
            if ch.is_ascii_punctuation() && ch != '\'' && ch != '-' {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Inverse of [`split_words`] up to whitespace: punctuation attaches to the previous word.
pub fn join_words<S: AsRef<str>>(words: &[S]) -> String {
    let mut out = String::new();
    for w in words {
        let w = w.as_ref();
        let is_punct = w.chars().count() == 1 && w.chars().all(|c| c.is_ascii_punctuation());
        if !out.is_empty() && !is_punct {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    for p in parts {
        h.write(p);
        h.write_u8(0xff);
    }
    h.finish()
}

/// Deterministic pronounceable filler word for index `n`.
pub fn pseudo_word(n: usize) -> String {
    const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut n = n;
    let mut out = String::new();
    loop {
        out.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        out.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
        if n == 0 {
            break;
        }
        n -= 1;
    }
    out.push('x');
    out
}

/// Closed-vocabulary word tokenizer. Ids below [`NUM_SPECIAL`] are reserved.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl WordTokenizer {
    /// Vocabulary made of every word in `texts` (sorted) padded with filler words up to
    /// `min_size` entries in total.
    pub fn from_texts<'a, I>(texts: I, min_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut words: Vec<String> = texts.into_iter().flat_map(split_words).collect();
        words.retain(|w| w != MASK_LITERAL);
        words.sort();
        words.dedup();
        let mut tok = WordTokenizer::from_words(words);
        let mut n = 0;
        while tok.vocab_size() < min_size {
            let w = pseudo_word(n);
            n += 1;
            if !tok.index.contains_key(&w) {
                tok.push(w);
            }
        }
        tok
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let mut tok = WordTokenizer {
            words: vec![
                "[PAD]".into(),
                "[CLS]".into(),
                "[SEP]".into(),
                MASK_LITERAL.into(),
                "[UNK]".into(),
            ],
            index: HashMap::new(),
        };
        for w in words {
            if !tok.index.contains_key(&w) {
                tok.push(w);
            }
        }
        tok
    }

    fn push(&mut self, w: String) {
        let id = self.words.len() as u32;
        self.index.insert(w.clone(), id);
        self.words.push(w);
    }

    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words[NUM_SPECIAL as usize..]
    }
}

impl Tokenizer for WordTokenizer {
    fn vocab_size(&self) -> usize {
        self.words.len()
    }

    fn pieces(&self, text: &str, _language: &LanguageCode) -> Vec<u32> {
        split_words(text)
            .iter()
            .map(|w| {
                if w == MASK_LITERAL {
                    MASK_ID
                } else {
                    self.index.get(w.as_str()).copied().unwrap_or(UNK_ID)
                }
            })
            .collect()
    }

    fn piece_text(&self, id: u32) -> Option<String> {
        self.words.get(id as usize).cloned()
    }
}

/// Open-vocabulary tokenizer hashing each word into a fixed id range.
#[derive(Debug, Clone)]
pub struct HashTokenizer {
    vocab_size: usize,
}

impl HashTokenizer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size <= NUM_SPECIAL as usize {
            return Err(Error::Config(format!("hash vocabulary {vocab_size} is too small")));
        }
        Ok(HashTokenizer { vocab_size })
    }

    pub fn id_of(&self, word: &str) -> u32 {
        let span = (self.vocab_size - NUM_SPECIAL as usize) as u64;
        NUM_SPECIAL + (stable_hash(&[word.as_bytes()]) % span) as u32
    }
}

impl Tokenizer for HashTokenizer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn pieces(&self, text: &str, _language: &LanguageCode) -> Vec<u32> {
        split_words(text)
            .iter()
            .map(|w| if w == MASK_LITERAL { MASK_ID } else { self.id_of(w) })
            .collect()
    }

    fn piece_text(&self, _id: u32) -> Option<String> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> LanguageCode {
        LanguageCode::english()
    }

    #[test]
    fn split_and_join() {
        assert_eq!(split_words("Birds can fly."), vec!["Birds", "can", "fly", "."]);
        assert_eq!(split_words("a [MASK] b"), vec!["a", "[MASK]", "b"]);
        assert_eq!(split_words("a [MASK]."), vec!["a", "[MASK]", "."]);
        assert_eq!(join_words(&split_words("Birds can fly, mostly.")), "Birds can fly, mostly.");
    }

    #[test]
    fn word_tokenizer_pads_with_fillers() {
        let tok = WordTokenizer::from_texts(["birds can fly", "fish can swim"], 50);
        assert_eq!(tok.vocab_size(), 50);
        let ids = tok.pieces("birds can swim", &en());
        assert!(ids.iter().all(|&i| i >= NUM_SPECIAL));
        assert_eq!(tok.decode(&ids).unwrap(), "birds can swim");
        assert_eq!(tok.pieces("unknownword", &en()), vec![UNK_ID]);
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let set: std::collections::HashSet<_> = (0..2000).map(pseudo_word).collect();
        assert_eq!(set.len(), 2000);
    }

    #[test]
    fn tokenized_sentence_excludes_boundaries() {
        let tok = HashTokenizer::new(100).unwrap();
        let s = tok.tokenize("one two three four", &en());
        assert_eq!(s.token_ids.len(), 6);
        assert_eq!(s.token_ids[0], CLS_ID);
        assert_eq!(*s.token_ids.last().unwrap(), SEP_ID);
        assert_eq!(s.scorable_positions, vec![1, 2, 3, 4]);
    }

    #[test]
    fn pair_truncates_option_first() {
        let tok = HashTokenizer::new(100).unwrap();
        let e = tok.encode_pair("a b c", "d e f", &en(), 7).unwrap();
        assert!(e.truncated);
        assert_eq!((e.prompt_len, e.option_len), (3, 1));
        let e = tok.encode_pair("a b c", "d e f", &en(), 5).unwrap();
        assert_eq!((e.prompt_len, e.option_len), (2, 0));
        assert!(tok.encode_pair("a", "b", &en(), 2).is_err());
    }
}
