use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::jsonl;
use super::LanguageCode;
use crate::error::{Error, Result};

/// A declarative sentence in one language.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assertion {
    text: String,
    language: LanguageCode,
}

impl Assertion {
    /// Builds an assertion, normalizing the text to NFC.
    pub fn new(text: &str, language: LanguageCode) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::validation(
                text,
                format!("assertion text in `{language}` is empty after trimming"),
            ));
        }
        Ok(Assertion {
            text: text.nfc().collect(),
            language,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn language(&self) -> &LanguageCode {
        &self.language
    }
}

/// One probe: `K` parallel candidate assertions per language sharing a truth index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MickeyProbe {
    probe_id: String,
    truth_index: usize,
    candidates: BTreeMap<LanguageCode, Vec<Assertion>>,
}

impl MickeyProbe {
    pub fn new(
        probe_id: impl Into<String>,
        truth_index: usize,
        candidates: BTreeMap<LanguageCode, Vec<Assertion>>,
    ) -> Result<Self> {
        let probe_id = probe_id.into();
        let fail = |rule: String| Err(Error::validation(probe_id.clone(), rule));

        let Some(k) = candidates.values().next().map(Vec::len) else {
            return fail("probe has no languages".into());
        };
        if k < 2 {
            return fail(format!("K must be at least 2, found {k}"));
        }
        for (lang, seq) in &candidates {
            if seq.len() != k {
                return fail(format!(
                    "language `{lang}` has {} candidates but the probe has K={k}",
                    seq.len()
                ));
            }
            if let Some(a) = seq.iter().find(|a| a.language() != lang) {
                return fail(format!(
                    "assertion filed under `{lang}` is tagged `{}`",
                    a.language()
                ));
            }
        }
        if truth_index >= k {
            return fail(format!("truth index {truth_index} out of range for K={k}"));
        }
        Ok(MickeyProbe {
            probe_id,
            truth_index,
            candidates,
        })
    }

    pub fn probe_id(&self) -> &str {
        &self.probe_id
    }

    pub fn truth_index(&self) -> usize {
        self.truth_index
    }

    pub fn k(&self) -> usize {
        self.candidates.values().next().map_or(0, Vec::len)
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageCode> {
        self.candidates.keys()
    }

    pub fn candidates(&self) -> &BTreeMap<LanguageCode, Vec<Assertion>> {
        &self.candidates
    }

    pub fn in_language(&self, language: &LanguageCode) -> Result<&[Assertion]> {
        self.candidates
            .get(language)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Lookup(format!(
                    "probe `{}` has no candidates in `{language}`",
                    self.probe_id
                ))
            })
    }

    pub fn truth(&self, language: &LanguageCode) -> Result<&Assertion> {
        Ok(&self.in_language(language)?[self.truth_index])
    }

    /// Returns a copy restricted to `languages`.
    pub fn restricted_to(&self, languages: &BTreeSet<LanguageCode>) -> Result<MickeyProbe> {
        let candidates = self
            .candidates
            .iter()
            .filter(|(lang, _)| languages.contains(*lang))
            .map(|(l, v)| (l.clone(), v.clone()))
            .collect();
        MickeyProbe::new(self.probe_id.clone(), self.truth_index, candidates)
    }
}

/// A validated collection of probes sharing `K` and the language set.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MickeyCorpus {
    probes: Vec<MickeyProbe>,
    languages: BTreeSet<LanguageCode>,
    k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub probes: usize,
    pub k: usize,
    pub languages: usize,
    pub sentences: usize,
}

impl MickeyCorpus {
    pub fn new(probes: Vec<MickeyProbe>) -> Result<Self> {
        let Some(first) = probes.first() else {
            return Ok(MickeyCorpus::default());
        };
        let k = first.k();
        let languages: BTreeSet<LanguageCode> = first.languages().cloned().collect();
        let mut seen = BTreeSet::new();
        for probe in &probes {
            if probe.k() != k {
                return Err(Error::validation(
                    probe.probe_id(),
                    format!("probe has K={} but the corpus has K={k}", probe.k()),
                ));
            }
            if !probe.languages().eq(languages.iter()) {
                return Err(Error::validation(
                    probe.probe_id(),
                    "probe language set differs from the corpus language set",
                ));
            }
            if !seen.insert(probe.probe_id()) {
                return Err(Error::validation(probe.probe_id(), "duplicate probe_id"));
            }
        }
        Ok(MickeyCorpus {
            probes,
            languages,
            k,
        })
    }

    pub fn probes(&self) -> &[MickeyProbe] {
        &self.probes
    }

    pub fn languages(&self) -> &BTreeSet<LanguageCode> {
        &self.languages
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(self.probes.len(), self.k, self.languages.len())
    }

    pub fn into_probes(self) -> Vec<MickeyProbe> {
        self.probes
    }
}

/// Total sentence count of a corpus with the given shape: `T * K * |L|`.
pub fn corpus_stats(probes: usize, k: usize, languages: usize) -> CorpusStats {
    CorpusStats {
        probes,
        k,
        languages,
        sentences: probes * k * languages,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeRecord {
    probe_id: String,
    truth_index: usize,
    candidates: BTreeMap<String, Vec<String>>,
}

impl ProbeRecord {
    fn into_probe(self) -> Result<MickeyProbe> {
        let mut candidates = BTreeMap::new();
        for (lang, texts) in self.candidates {
            let lang = LanguageCode::new(&lang)
                .map_err(|e| Error::validation(self.probe_id.clone(), e.to_string()))?;
            let seq = texts
                .iter()
                .map(|t| Assertion::new(t, lang.clone()))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::validation(self.probe_id.clone(), e.to_string()))?;
            candidates.insert(lang, seq);
        }
        MickeyProbe::new(self.probe_id, self.truth_index, candidates)
    }

    fn from_probe(probe: &MickeyProbe) -> Self {
        ProbeRecord {
            probe_id: probe.probe_id.clone(),
            truth_index: probe.truth_index,
            candidates: probe
                .candidates
                .iter()
                .map(|(l, seq)| {
                    (
                        l.to_string(),
                        seq.iter().map(|a| a.text().to_string()).collect(),
                    )
                })
                .collect(),
        }
    }
}

/// Loads a probe JSONL file. When `expected_k` is given every probe must have exactly that many
/// candidates per language.
pub fn load_probes_with_k(path: &Path, expected_k: Option<usize>) -> Result<MickeyCorpus> {
    let mut probes = Vec::new();
    for (_, record) in jsonl::read_records::<ProbeRecord>(path)? {
        let probe = record.into_probe()?;
        if let Some(k) = expected_k {
            if let Some((lang, seq)) = probe.candidates().iter().find(|(_, s)| s.len() != k) {
                return Err(Error::validation(
                    probe.probe_id(),
                    format!("language `{lang}` has {} candidates but K={k} was declared", seq.len()),
                ));
            }
        }
        probes.push(probe);
    }
    MickeyCorpus::new(probes)
}

pub fn load_probes(path: &Path) -> Result<MickeyCorpus> {
    load_probes_with_k(path, None)
}

pub fn save_probes(corpus: &MickeyCorpus, path: &Path) -> Result<()> {
    let records: Vec<ProbeRecord> = corpus.probes.iter().map(ProbeRecord::from_probe).collect();
    jsonl::write_records(path, &records)
}
