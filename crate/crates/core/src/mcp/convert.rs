use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::builder::sub_rng;
use crate::data::{Assertion, LanguageCode, McpExample, MickeyCorpus, MickeyProbe};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionConfig {
    /// Candidates per example, each in a distinct language.
    pub v: usize,
    pub seed: u64,
    /// Examples drawn from each probe.
    pub multiplier: usize,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        ConversionConfig {
            v: 5,
            seed: 0,
            multiplier: 1,
        }
    }
}

/// The random choices behind one converted example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionTrace {
    pub anchor: LanguageCode,
    /// Languages of the distractors, in draw order.
    pub distractor_languages: Vec<LanguageCode>,
    /// Candidate index drawn for each distractor language; never the truth index.
    pub distractor_indices: Vec<usize>,
    /// `order[p]` is the pre-shuffle slot placed at position `p`; slot 0 is the truth.
    pub order: Vec<usize>,
}

/// Samples an index from `0..k` excluding `t`, uniformly.
fn index_other_than<R: Rng + ?Sized>(rng: &mut R, k: usize, t: usize) -> usize {
    let r = rng.gen_range(0..k - 1);
    if r >= t {
        r + 1
    } else {
        r
    }
}

/// Converts a probe into a cross-lingual selection example and reports the draws made.
pub fn convert_probe_traced<R: Rng + ?Sized>(
    probe: &MickeyProbe,
    example_id: &str,
    v: usize,
    rng: &mut R,
) -> Result<(McpExample, ConversionTrace)> {
    let languages: Vec<&LanguageCode> = probe.languages().collect();
    if v < 2 || v > languages.len() {
        return Err(Error::Config(format!(
            "V = {v} must lie in [2, {}] for probe `{}`",
            languages.len(),
            probe.probe_id()
        )));
    }
    let t = probe.truth_index();
    let k = probe.k();
    let anchor = languages[rng.gen_range(0..languages.len())].clone();
    let rest: Vec<&LanguageCode> = languages.iter().copied().filter(|l| **l != anchor).collect();
    let distractor_languages: Vec<LanguageCode> = sample(rng, rest.len(), v - 1)
        .into_iter()
        .map(|i| rest[i].clone())
        .collect();
    let distractor_indices: Vec<usize> = distractor_languages
        .iter()
        .map(|_| index_other_than(rng, k, t))
        .collect();

    let mut slots: Vec<Assertion> = Vec::with_capacity(v);
    slots.push(probe.in_language(&anchor)?[t].clone());
    for (lang, &j) in distractor_languages.iter().zip(&distractor_indices) {
        slots.push(probe.in_language(lang)?[j].clone());
    }
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(rng);
    let label = order.iter().position(|&s| s == 0).expect("truth slot present");
    let candidates = order.iter().map(|&s| slots[s].clone()).collect();
    let example = McpExample::new(example_id, candidates, label)?;
    Ok((
        example,
        ConversionTrace {
            anchor,
            distractor_languages,
            distractor_indices,
            order,
        },
    ))
}

pub fn convert_probe<R: Rng + ?Sized>(
    probe: &MickeyProbe,
    example_id: &str,
    v: usize,
    rng: &mut R,
) -> Result<McpExample> {
    convert_probe_traced(probe, example_id, v, rng).map(|(e, _)| e)
}

/// `multiplier` examples per probe with ids `<probe_id>#<draw>`. Each draw uses its own
/// generator derived from the seed.
pub fn build_mcp_dataset(corpus: &MickeyCorpus, cfg: &ConversionConfig) -> Result<Vec<McpExample>> {
    if cfg.multiplier == 0 {
        return Err(Error::Config("multiplier must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(corpus.len() * cfg.multiplier);
    for (i, probe) in corpus.probes().iter().enumerate() {
        for draw in 0..cfg.multiplier {
            let mut rng = sub_rng(cfg.seed, "mcp", i * cfg.multiplier + draw);
            let id = format!("{}#{draw}", probe.probe_id());
            out.push(convert_probe(probe, &id, cfg.v, &mut rng)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn probe(langs: &[&str], k: usize, t: usize) -> MickeyProbe {
        let mut c = BTreeMap::new();
        for l in langs {
            let lc = LanguageCode::new(l).unwrap();
            let seq = (0..k)
                .map(|i| Assertion::new(&format!("{l} {i}"), lc.clone()).unwrap())
                .collect();
            c.insert(lc, seq);
        }
        MickeyProbe::new("p", t, c).unwrap()
    }

    #[test]
    fn v_above_language_count_is_config_error() {
        let p = probe(&["en", "de"], 3, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(convert_probe(&p, "x", 3, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn label_points_at_truth() {
        let p = probe(&["en", "de", "fr", "it"], 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (e, tr) = convert_probe_traced(&p, "x", 4, &mut rng).unwrap();
            assert_eq!(e.truth().text(), format!("{} 2", tr.anchor));
            assert!(tr.distractor_indices.iter().all(|&j| j != 2));
        }
    }
}
