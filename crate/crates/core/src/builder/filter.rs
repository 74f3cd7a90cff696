use serde::{Deserialize, Serialize};

use super::masking::DistractorCandidate;
use super::tagger::{TaggedWord, Tagger};
use crate::data::Assertion;
use crate::error::Result;
use crate::tokenize::split_words;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub identical: usize,
    pub tag_mismatch: usize,
    pub tagger_failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<DistractorCandidate>,
    pub stats: FilterStats,
}

/// True when both sequences agree on POS tag and morphological features at every position.
pub fn same_tag_sequence(a: &[TaggedWord], b: &[TaggedWord]) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| x.pos == y.pos && x.features == y.features)
}

fn same_surface(a: &str, b: &str) -> bool {
    split_words(a) == split_words(b)
}

/// Keeps candidates whose tag and feature sequences equal the truth's, dropping candidates
/// identical to the truth and candidates the tagger fails on.
pub fn pos_filter(
    truth: &Assertion,
    candidates: &[DistractorCandidate],
    tagger: &dyn Tagger,
) -> Result<FilterOutcome> {
    let truth_tags = tagger.tag(truth.text(), truth.language())?;
    let mut out = FilterOutcome::default();
    for c in candidates {
        if same_surface(&c.text, truth.text()) {
            out.stats.identical += 1;
            continue;
        }
        match tagger.tag(&c.text, truth.language()) {
            Ok(tags) if same_tag_sequence(&truth_tags, &tags) => out.kept.push(c.clone()),
            Ok(_) => out.stats.tag_mismatch += 1,
            Err(e) => {
                tracing::debug!("tagger failed on distractor `{}`: {e}", c.text);
                out.stats.tagger_failures += 1;
            }
        }
    }
    Ok(out)
}
