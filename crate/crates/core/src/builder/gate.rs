//! Round-trip quality gate and multilingual corpus assembly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::embed::{cosine, EmbeddingBackend};
use super::translate::CorpusTranslation;
use crate::data::{Assertion, LanguageCode, MickeyCorpus, MickeyProbe};
use crate::error::{Error, Result};

/// Threshold for probe corpora.
pub const PROBE_GATE_THRESHOLD: f64 = 0.75;
/// Threshold for translated multiple-choice datasets.
pub const MCQ_GATE_THRESHOLD: f64 = 0.85;

/// Back-translation similarity of every candidate of one probe in one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub probe_id: String,
    pub language: LanguageCode,
    pub cosines: Vec<f64>,
    pub truth_index: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateScope {
    /// The probe passes only if every candidate passes.
    #[default]
    AllCandidates,
    TruthOnly,
}

impl QualityRecord {
    pub fn gated_value(&self, scope: GateScope) -> f64 {
        match scope {
            GateScope::AllCandidates => self.cosines.iter().copied().fold(f64::INFINITY, f64::min),
            GateScope::TruthOnly => self.cosines[self.truth_index],
        }
    }

    pub fn passes(&self, threshold: f64, scope: GateScope) -> bool {
        self.gated_value(scope) >= threshold
    }

    pub fn mean(&self) -> f64 {
        self.cosines.iter().sum::<f64>() / self.cosines.len() as f64
    }
}

/// Embeds English originals and back-translations and records their cosines.
pub fn quality_records(
    corpus: &MickeyCorpus,
    translation: &CorpusTranslation,
    embedder: &dyn EmbeddingBackend,
) -> Result<Vec<QualityRecord>> {
    let en = LanguageCode::english();
    let mut out = Vec::new();
    for (lang, back) in &translation.back {
        for probe in corpus.probes() {
            let Some(bt) = back.get(probe.probe_id()) else {
                continue;
            };
            let originals: Vec<String> = probe
                .in_language(&en)?
                .iter()
                .map(|a| a.text().to_string())
                .collect();
            if bt.len() != originals.len() {
                return Err(Error::validation(
                    probe.probe_id(),
                    format!("{} back-translations for {} candidates in {lang}", bt.len(), originals.len()),
                ));
            }
            let a = embedder.embed(&originals)?;
            let b = embedder.embed(bt)?;
            out.push(QualityRecord {
                probe_id: probe.probe_id().to_string(),
                language: lang.clone(),
                cosines: a.iter().zip(&b).map(|(x, y)| cosine(x, y)).collect(),
                truth_index: probe.truth_index(),
            });
        }
    }
    Ok(out)
}

/// Mean candidate similarity per language.
pub fn language_quality(records: &[QualityRecord]) -> BTreeMap<LanguageCode, f64> {
    let mut acc: BTreeMap<LanguageCode, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.language.clone()).or_default();
        e.0 += r.cosines.iter().sum::<f64>();
        e.1 += r.cosines.len();
    }
    acc.into_iter()
        .map(|(l, (s, n))| (l, if n == 0 { 0.0 } else { s / n as f64 }))
        .collect()
}

/// The `n` languages with the highest mean similarity; ties go to the smaller code.
pub fn select_languages(quality: &BTreeMap<LanguageCode, f64>, n: usize) -> Vec<LanguageCode> {
    let mut ranked: Vec<(&LanguageCode, f64)> = quality.iter().map(|(l, q)| (l, *q)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(l, _)| l.clone()).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub threshold: f64,
    pub scope: GateScope,
    pub languages: Vec<LanguageCode>,
    pub passed_per_language: BTreeMap<LanguageCode, usize>,
    pub mean_cosine: BTreeMap<LanguageCode, f64>,
    pub kept: usize,
    pub dropped: Vec<String>,
}

/// Keeps the probes that pass the gate in every one of `languages`, attaching the forward
/// translations. A probe with no quality record in some language is a validation error.
pub fn assemble_multilingual(
    english: &MickeyCorpus,
    translation: &CorpusTranslation,
    records: &[QualityRecord],
    languages: &[LanguageCode],
    threshold: f64,
    scope: GateScope,
) -> Result<(MickeyCorpus, GateReport)> {
    let en = LanguageCode::english();
    let targets: Vec<&LanguageCode> = languages.iter().filter(|l| **l != en).collect();
    let by_key: BTreeMap<(&str, &LanguageCode), &QualityRecord> = records
        .iter()
        .map(|r| ((r.probe_id.as_str(), &r.language), r))
        .collect();
    let mut report = GateReport {
        threshold,
        scope,
        languages: languages.to_vec(),
        mean_cosine: language_quality(records)
            .into_iter()
            .filter(|(l, _)| targets.contains(&l))
            .collect(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for probe in english.probes() {
        let pid = probe.probe_id();
        let mut all_pass = true;
        for lang in &targets {
            if translation.failed.contains(&((*lang).clone(), pid.to_string())) {
                all_pass = false;
                continue;
            }
            let rec = by_key.get(&(pid, *lang)).ok_or_else(|| {
                Error::validation(pid, format!("no round-trip quality record for {lang}"))
            })?;
            if rec.passes(threshold, scope) {
                *report.passed_per_language.entry((*lang).clone()).or_default() += 1;
            } else {
                all_pass = false;
            }
        }
        if !all_pass {
            report.dropped.push(pid.to_string());
            continue;
        }
        let mut cands: BTreeMap<LanguageCode, Vec<Assertion>> = BTreeMap::new();
        cands.insert(en.clone(), probe.in_language(&en)?.to_vec());
        for lang in &targets {
            let texts = &translation.forward[*lang][pid];
            let seq = texts
                .iter()
                .map(|t| Assertion::new(t, (*lang).clone()))
                .collect::<Result<Vec<_>>>()?;
            cands.insert((*lang).clone(), seq);
        }
        kept.push(MickeyProbe::new(pid, probe.truth_index(), cands)?);
    }
    report.kept = kept.len();
    Ok((MickeyCorpus::new(kept)?, report))
}

/// Keeps the languages and their item ids whose translations pass `threshold`; used for
/// translated multiple-choice data where each item is gated on its own.
pub fn passing_ids(records: &[QualityRecord], threshold: f64, scope: GateScope) -> BTreeSet<(LanguageCode, String)> {
    records
        .iter()
        .filter(|r| r.passes(threshold, scope))
        .map(|r| (r.language.clone(), r.probe_id.clone()))
        .collect()
}
