//! Pseudo-log-likelihood sentence scoring and the length baseline.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::MaskedLm;
use crate::data::{jsonl, Assertion, LanguageCode};
use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PllScore {
    pub value: f64,
    pub n_positions: usize,
}

impl PllScore {
    pub fn per_token(&self) -> f64 {
        self.value / self.n_positions as f64
    }
}

/// Scoring options. Raw (unnormalized) PLL is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PllOptions {
    pub length_normalize: bool,
}

/// Sum of `log P(w_i | s \ w_i)` over the scorable positions, one masked call per position.
pub fn pll(sentence: &str, language: &LanguageCode, backend: &dyn MaskedLm) -> Result<PllScore> {
    let tokenizer = backend.tokenizer();
    let tokenized = tokenizer.tokenize(sentence, language);
    if tokenized.scorable_positions.is_empty() {
        return Err(Error::Degenerate(format!(
            "`{sentence}` has no scorable tokens"
        )));
    }
    let mask = tokenizer.specials().mask;
    let mut ids = tokenized.token_ids.clone();
    let mut value = 0.0;
    for &pos in &tokenized.scorable_positions {
        let original = ids[pos];
        ids[pos] = mask;
        let lp = backend
            .token_logprob(&ids, pos, original)
            .map_err(|e| e.with_context(format_args!("position {pos} of `{sentence}`")))?;
        ids[pos] = original;
        value += lp;
    }
    Ok(PllScore {
        value,
        n_positions: tokenized.scorable_positions.len(),
    })
}

/// Anything that assigns a plausibility score to an assertion; higher is more plausible.
pub trait SentenceScorer: Send + Sync {
    fn score(&self, assertion: &Assertion) -> Result<f64>;

    fn concurrency_safe(&self) -> bool {
        true
    }
}

/// Scores assertions by PLL under a masked LM.
pub struct PllScorer<'a> {
    backend: &'a dyn MaskedLm,
    options: PllOptions,
}

impl<'a> PllScorer<'a> {
    pub fn new(backend: &'a dyn MaskedLm) -> Self {
        PllScorer {
            backend,
            options: PllOptions::default(),
        }
    }

    pub fn with_options(backend: &'a dyn MaskedLm, options: PllOptions) -> Self {
        PllScorer { backend, options }
    }

    pub fn backend(&self) -> &dyn MaskedLm {
        self.backend
    }
}

impl SentenceScorer for PllScorer<'_> {
    fn score(&self, assertion: &Assertion) -> Result<f64> {
        let s = pll(assertion.text(), assertion.language(), self.backend)?;
        Ok(if self.options.length_normalize {
            s.per_token()
        } else {
            s.value
        })
    }

    fn concurrency_safe(&self) -> bool {
        self.backend.concurrency_safe()
    }
}

/// Candidate indices sorted by descending score, with the scores in original order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Descending sort of `scores`; equal scores keep ascending original index.
pub fn rank_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn score_all(candidates: &[Assertion], scorer: &dyn SentenceScorer) -> Result<Vec<f64>> {
    if scorer.concurrency_safe() {
        candidates.par_iter().map(|c| scorer.score(c)).collect()
    } else {
        candidates.iter().map(|c| scorer.score(c)).collect()
    }
}

pub fn pll_rank(candidates: &[Assertion], scorer: &dyn SentenceScorer) -> Result<Ranking> {
    if candidates.len() < 2 {
        return Err(Error::validation("<candidates>", "ranking needs at least 2 candidates"));
    }
    let lang = candidates[0].language();
    if let Some(c) = candidates.iter().find(|c| c.language() != lang) {
        return Err(Error::validation(
            c.text(),
            format!("mixed languages in one ranking: `{lang}` and `{}`", c.language()),
        ));
    }
    let scores = score_all(candidates, scorer)?;
    Ok(Ranking {
        order: rank_scores(&scores),
        scores,
    })
}

/// Index of the candidate with the fewest scorable tokens; ties go to the lowest index.
pub fn shortest_select(candidates: &[Assertion], tokenizer: &dyn Tokenizer) -> Result<usize> {
    let lengths: Vec<usize> = candidates
        .iter()
        .map(|c| tokenizer.tokenize(c.text(), c.language()).scorable_positions.len())
        .collect();
    shortest_by_length(&lengths)
        .ok_or_else(|| Error::Degenerate("shortest_select called with no candidates".into()))
}

pub fn shortest_by_length(lengths: &[usize]) -> Option<usize> {
    lengths
        .iter()
        .enumerate()
        .min_by_key(|&(i, &len)| (len, i))
        .map(|(i, _)| i)
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    backend: String,
    key: String,
    score: f64,
}

/// Wraps a scorer with a score cache keyed by `(backend id, sentence hash)`, optionally
/// persisted as JSONL.
pub struct CachedScorer<S> {
    inner: S,
    backend_id: String,
    cache: Mutex<HashMap<String, f64>>,
    path: Option<PathBuf>,
}

impl<S: SentenceScorer> CachedScorer<S> {
    pub fn new(inner: S, backend_id: impl Into<String>) -> Self {
        CachedScorer {
            inner,
            backend_id: backend_id.into(),
            cache: Mutex::new(HashMap::new()),
            path: None,
        }
    }

    /// Loads entries for this backend from `path` (if it exists); new scores are appended.
    pub fn persistent(inner: S, backend_id: impl Into<String>, path: &Path) -> Result<Self> {
        let backend_id = backend_id.into();
        let mut cache = HashMap::new();
        if path.exists() {
            for (_, r) in jsonl::read_records::<CacheRecord>(path)? {
                if r.backend == backend_id {
                    cache.insert(r.key, r.score);
                }
            }
        }
        Ok(CachedScorer {
            inner,
            backend_id,
            cache: Mutex::new(cache),
            path: Some(path.to_path_buf()),
        })
    }

    fn key(assertion: &Assertion) -> String {
        let mut h = Sha256::new();
        h.update(assertion.language().as_str().as_bytes());
        h.update(b"\t");
        h.update(assertion.text().as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<S: SentenceScorer> SentenceScorer for CachedScorer<S> {
    fn score(&self, assertion: &Assertion) -> Result<f64> {
        let key = Self::key(assertion);
        if let Some(&s) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(s);
        }
        let score = self.inner.score(assertion)?;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.insert(key.clone(), score).is_none() {
            if let Some(path) = &self.path {
                jsonl::append_record(
                    path,
                    &CacheRecord {
                        backend: self.backend_id.clone(),
                        key,
                        score,
                    },
                )?;
            }
        }
        Ok(score)
    }

    fn concurrency_safe(&self) -> bool {
        self.inner.concurrency_safe()
    }
}
