//! The probing protocol: truth ranks, hit@k per language and the length baseline.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LanguageCode, MickeyCorpus, MickeyProbe};
use crate::error::{Error, Result};
use crate::report::{column_order, mean, MetricRow, MetricTable, ValueFormat, PROBE_LANGUAGE_ORDER};
use crate::scoring::{score_all, shortest_select, SentenceScorer};
use crate::tokenize::{stable_hash, Tokenizer};

/// How distractors that tie the truth's score are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum TieMode {
    /// Ties count against the truth.
    #[default]
    Pessimistic,
    /// Ties count in favour of the truth.
    Optimistic,
    /// The truth lands uniformly among its tied group (seeded per probe and language).
    Random { seed: u64 },
}

/// 1-based rank of `scores[truth]` among `scores`.
pub fn rank_of_truth(scores: &[f64], truth: usize, mode: TieMode, tie_key: &str) -> usize {
    let t = scores[truth];
    let greater = scores.iter().filter(|&&s| s > t).count();
    let equal = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| i != truth && s == t)
        .count();
    match mode {
        TieMode::Pessimistic => 1 + greater + equal,
        TieMode::Optimistic => 1 + greater,
        TieMode::Random { seed } => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stable_hash(&[&seed.to_le_bytes(), tie_key.as_bytes()]));
            1 + greater + rng.gen_range(0..=equal)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probe_id: String,
    pub language: LanguageCode,
    pub truth_rank: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub probe_id: String,
    pub language: LanguageCode,
    pub error: String,
}

pub fn truth_rank(
    probe: &MickeyProbe,
    language: &LanguageCode,
    scorer: &dyn SentenceScorer,
    mode: TieMode,
) -> Result<ProbeResult> {
    let candidates = probe.in_language(language)?;
    let scores = score_all(candidates, scorer)?;
    let key = format!("{}\t{}", probe.probe_id(), language);
    Ok(ProbeResult {
        probe_id: probe.probe_id().to_string(),
        language: language.clone(),
        truth_rank: rank_of_truth(&scores, probe.truth_index(), mode, &key),
        scores,
    })
}

/// Fraction of results in `language` with rank at most `k`.
pub fn hit_at_k(results: &[ProbeResult], language: &LanguageCode, k: usize) -> f64 {
    let (hits, n) = results
        .iter()
        .filter(|r| &r.language == language)
        .fold((0usize, 0usize), |(h, n), r| (h + usize::from(r.truth_rank <= k), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        hits as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MickeyReport {
    pub model: String,
    pub k: usize,
    pub ks: Vec<usize>,
    /// `hit[k][language]`
    pub hit: BTreeMap<usize, BTreeMap<LanguageCode, f64>>,
    /// Mean over languages for each k.
    pub aggregate: BTreeMap<usize, f64>,
    pub shortest: Option<BTreeMap<LanguageCode, f64>>,
    pub bt_cosine: Option<BTreeMap<LanguageCode, f64>>,
    pub results: Vec<ProbeResult>,
    pub failures: Vec<ProbeFailure>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl MickeyReport {
    pub fn languages(&self) -> BTreeSet<LanguageCode> {
        self.hit.values().flat_map(|m| m.keys().cloned()).collect()
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn table(&self) -> MetricTable {
        let mut langs: BTreeSet<LanguageCode> = self.languages();
        if let Some(s) = &self.shortest {
            langs.extend(s.keys().cloned());
        }
        let columns = column_order(&langs, &PROBE_LANGUAGE_ORDER);
        let mut rows = Vec::new();
        if let Some(bt) = &self.bt_cosine {
            rows.push(MetricRow::averaged("BT-Cosine", bt.clone(), ValueFormat::Raw));
        }
        if let Some(s) = &self.shortest {
            rows.push(MetricRow::averaged("Shortest", s.clone(), ValueFormat::Percent));
        }
        for (k, values) in &self.hit {
            rows.push(MetricRow {
                name: format!("{} hit@{k}", self.model),
                values: values.clone(),
                avg: self.aggregate[k],
                format: ValueFormat::Percent,
            });
        }
        MetricTable {
            title: "model \\ L".to_string(),
            columns,
            rows,
        }
    }

    /// (language, hit@k) pairs in table column order.
    pub fn bars(&self, k: usize) -> Vec<(String, f64)> {
        let Some(values) = self.hit.get(&k) else {
            return Vec::new();
        };
        column_order(values.keys(), &PROBE_LANGUAGE_ORDER)
            .into_iter()
            .map(|l| (l.to_string(), values[&l]))
            .collect()
    }
}

/// Runs the probe over every (probe, language) pair and aggregates hit@k.
pub fn evaluate_mickey(
    corpus: &MickeyCorpus,
    scorer: &dyn SentenceScorer,
    model: &str,
    ks: &[usize],
    mode: TieMode,
) -> Result<MickeyReport> {
    if corpus.is_empty() {
        return Err(Error::Degenerate("cannot evaluate an empty corpus".into()));
    }
    let k_max = corpus.k();
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::Config("at least one k is required".into()));
    }
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > k_max) {
        return Err(Error::Config(format!("k={bad} outside 1..={k_max}")));
    }

    let pairs: Vec<(&MickeyProbe, &LanguageCode)> = corpus
        .probes()
        .iter()
        .flat_map(|p| corpus.languages().iter().map(move |l| (p, l)))
        .collect();
    let run = |(p, l): &(&MickeyProbe, &LanguageCode)| truth_rank(p, l, scorer, mode);
    let outcomes: Vec<Result<ProbeResult>> = if scorer.concurrency_safe() {
        pairs.par_iter().map(run).collect()
    } else {
        pairs.iter().map(run).collect()
    };

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for ((probe, lang), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                tracing::warn!(probe = probe.probe_id(), %lang, "probe failed: {e}");
                failures.push(ProbeFailure {
                    probe_id: probe.probe_id().to_string(),
                    language: (*lang).clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    let mut hit = BTreeMap::new();
    let mut aggregate = BTreeMap::new();
    for &k in &ks {
        let per_lang: BTreeMap<LanguageCode, f64> = corpus
            .languages()
            .iter()
            .map(|l| (l.clone(), hit_at_k(&results, l, k)))
            .collect();
        aggregate.insert(k, mean(per_lang.values().copied()));
        hit.insert(k, per_lang);
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("probes".into(), corpus.len().into());
    metadata.insert("tie_mode".into(), serde_json::to_value(mode).unwrap_or_default());
    metadata.insert("failed_pairs".into(), failures.len().into());
    metadata.insert("failures_flagged".into(), (!failures.is_empty()).into());

    Ok(MickeyReport {
        model: model.to_string(),
        k: k_max,
        ks,
        hit,
        aggregate,
        shortest: None,
        bt_cosine: None,
        results,
        failures,
        metadata,
    })
}

/// hit@1 per language when the shortest candidate is always chosen.
pub fn baseline_report(
    corpus: &MickeyCorpus,
    tokenizer: &dyn Tokenizer,
) -> Result<BTreeMap<LanguageCode, f64>> {
    let mut out = BTreeMap::new();
    for lang in corpus.languages() {
        let mut hits = 0usize;
        for probe in corpus.probes() {
            let pick = shortest_select(probe.in_language(lang)?, tokenizer)?;
            hits += usize::from(pick == probe.truth_index());
        }
        out.insert(lang.clone(), hits as f64 / corpus.len().max(1) as f64);
    }
    Ok(out)
}
