//! Batched, retrying, journaled round-trip translation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{jsonl, LanguageCode, MickeyCorpus};
use crate::error::{Error, Result};
use crate::tokenize::stable_hash;

/// One translation unit. Providers must echo the id back with the translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    /// Worth retrying (timeouts, rate limiting, 5xx).
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
}

pub trait TranslatorClient: Send + Sync {
    fn provider_id(&self) -> &str;

    fn translate(
        &self,
        batch: &[Segment],
        source: &LanguageCode,
        target: &LanguageCode,
    ) -> std::result::Result<Vec<Segment>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff_ms: 500,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_attempts: usize) -> Self {
        RetryPolicy {
            max_attempts,
            initial_backoff_ms: 0,
            multiplier: 1.0,
        }
    }

    fn backoff(&self, attempt: usize) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(attempt as i32);
        Duration::from_millis(ms as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateConfig {
    pub batch_size: usize,
    pub workers: usize,
    /// Minimum spacing between provider calls.
    pub min_interval_ms: u64,
    pub retry: RetryPolicy,
    pub journal: Option<PathBuf>,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        TranslateConfig {
            batch_size: 32,
            workers: 4,
            min_interval_ms: 0,
            retry: RetryPolicy::default(),
            journal: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub stage: String,
    pub id: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Append-only record of finished translation jobs.
pub struct Journal {
    path: PathBuf,
    done: HashMap<(String, String), String>,
    lock: Mutex<()>,
}

impl Journal {
    /// Opens (or creates) a journal. Any unreadable line makes the journal unusable.
    pub fn open(path: &Path) -> Result<Self> {
        let mut done = HashMap::new();
        if path.exists() {
            let entries = jsonl::read_records::<JournalEntry>(path).map_err(|e| match e {
                Error::Parse { line, message, .. } => Error::Journal {
                    path: path.to_path_buf(),
                    message: format!("line {line}: {message}"),
                },
                other => other,
            })?;
            for (_, e) in entries {
                match (e.status, e.output) {
                    (JobStatus::Ok, Some(out)) => {
                        done.insert((e.stage, e.id), out);
                    }
                    (JobStatus::Ok, None) => {
                        return Err(Error::Journal {
                            path: path.to_path_buf(),
                            message: format!("entry {}/{} is ok but has no output", e.stage, e.id),
                        })
                    }
                    (JobStatus::Failed, _) => {}
                }
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(Journal {
            path: path.to_path_buf(),
            done,
            lock: Mutex::new(()),
        })
    }

    pub fn completed(&self, stage: &str, id: &str) -> Option<&str> {
        self.done
            .get(&(stage.to_string(), id.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    fn record(&self, entry: &JournalEntry) -> Result<()> {
        let _guard = self.lock.lock().expect("journal lock");
        jsonl::append_record(&self.path, entry)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageResult {
    pub outputs: BTreeMap<String, String>,
    pub failed: BTreeSet<String>,
}

struct Dispatcher<'a> {
    client: &'a dyn TranslatorClient,
    cfg: &'a TranslateConfig,
    journal: Option<&'a Journal>,
    calls: &'a AtomicUsize,
    last_call: Mutex<Option<Instant>>,
}

impl Dispatcher<'_> {
    fn throttle(&self) {
        if self.cfg.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.cfg.min_interval_ms);
        let mut last = self.last_call.lock().expect("rate limiter lock");
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    /// Returns the outputs aligned to `batch`, or `None` if the batch failed after retries.
    fn run_batch(
        &self,
        batch: &[Segment],
        source: &LanguageCode,
        target: &LanguageCode,
    ) -> Result<Option<Vec<String>>> {
        let attempts = self.cfg.retry.max_attempts.max(1);
        for attempt in 0..attempts {
            self.throttle();
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.client.translate(batch, source, target) {
                Ok(resp) => return align(batch, resp).map(Some),
                Err(ProviderError::Transient(msg)) => {
                    tracing::warn!(
                        provider = self.client.provider_id(),
                        attempt,
                        "transient failure: {msg}"
                    );
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.cfg.retry.backoff(attempt));
                    }
                }
                Err(ProviderError::Fatal(msg)) => {
                    tracing::error!(provider = self.client.provider_id(), "batch failed: {msg}");
                    return Ok(None);
                }
            }
        }
        Ok(None)
    }
}

/// Re-keys a provider response by id. Missing, duplicate or unknown ids are hard errors.
pub fn align(batch: &[Segment], response: Vec<Segment>) -> Result<Vec<String>> {
    if response.len() != batch.len() {
        return Err(Error::Provider(format!(
            "sent {} segments, received {}",
            batch.len(),
            response.len()
        )));
    }
    let mut by_id: HashMap<String, String> = HashMap::with_capacity(response.len());
    for seg in response {
        if by_id.insert(seg.id.clone(), seg.text).is_some() {
            return Err(Error::Provider(format!("segment `{}` returned twice", seg.id)));
        }
    }
    batch
        .iter()
        .map(|s| {
            by_id
                .remove(&s.id)
                .ok_or_else(|| Error::Provider(format!("segment `{}` missing from response", s.id)))
        })
        .collect()
}

/// Translates `segments` from `source` to `target`, skipping work already in the journal.
pub fn run_stage(
    stage: &str,
    segments: &[Segment],
    source: &LanguageCode,
    target: &LanguageCode,
    client: &dyn TranslatorClient,
    cfg: &TranslateConfig,
    journal: Option<&Journal>,
    calls: &AtomicUsize,
) -> Result<StageResult> {
    let mut result = StageResult::default();
    let mut todo = Vec::new();
    let mut ids = HashSet::new();
    for s in segments {
        if !ids.insert(s.id.as_str()) {
            return Err(Error::validation(s.id.clone(), "duplicate segment id"));
        }
        match journal.and_then(|j| j.completed(stage, &s.id)) {
            Some(out) => {
                result.outputs.insert(s.id.clone(), out.to_string());
            }
            None => todo.push(s.clone()),
        }
    }
    if todo.is_empty() {
        return Ok(result);
    }
    let dispatcher = Dispatcher {
        client,
        cfg,
        journal,
        calls,
        last_call: Mutex::new(None),
    };
    let batches: Vec<&[Segment]> = todo.chunks(cfg.batch_size.max(1)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Result<Option<Vec<String>>>> = pool.install(|| {
        batches
            .par_iter()
            .map(|b| {
                let out = dispatcher.run_batch(b, source, target)?;
                if let Some(j) = dispatcher.journal {
                    for (i, seg) in b.iter().enumerate() {
                        j.record(&JournalEntry {
                            stage: stage.to_string(),
                            id: seg.id.clone(),
                            status: if out.is_some() { JobStatus::Ok } else { JobStatus::Failed },
                            output: out.as_ref().map(|o| o[i].clone()),
                        })?;
                    }
                }
                Ok(out)
            })
            .collect()
    });
    for (batch, outcome) in batches.iter().zip(outcomes) {
        match outcome? {
            Some(out) => {
                for (seg, text) in batch.iter().zip(out) {
                    result.outputs.insert(seg.id.clone(), text);
                }
            }
            None => {
                result.failed.extend(batch.iter().map(|s| s.id.clone()));
            }
        }
    }
    Ok(result)
}

/// Forward translations and English back-translations for every probe and target language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusTranslation {
    /// `forward[lang][probe_id]` holds the K translated candidates.
    pub forward: BTreeMap<LanguageCode, BTreeMap<String, Vec<String>>>,
    pub back: BTreeMap<LanguageCode, BTreeMap<String, Vec<String>>>,
    pub failed: BTreeSet<(LanguageCode, String)>,
    pub provider_calls: usize,
}

fn segment_id(probe_id: &str, index: usize) -> String {
    format!("{probe_id}#{index}")
}

fn split_segment_id(id: &str) -> Option<(&str, usize)> {
    let (p, i) = id.rsplit_once('#')?;
    Some((p, i.parse().ok()?))
}

/// Round-trip translates the English side of `corpus` into each target language.
pub fn translate_corpus(
    corpus: &MickeyCorpus,
    targets: &[LanguageCode],
    client: &dyn TranslatorClient,
    cfg: &TranslateConfig,
) -> Result<CorpusTranslation> {
    let en = LanguageCode::english();
    if !corpus.languages().contains(&en) && !corpus.is_empty() {
        return Err(Error::validation("<corpus>", "corpus has no English candidates to translate"));
    }
    let journal = cfg.journal.as_deref().map(Journal::open).transpose()?;
    let calls = AtomicUsize::new(0);
    let k = corpus.k();

    let source: Vec<Segment> = corpus
        .probes()
        .iter()
        .flat_map(|p| {
            p.in_language(&en)
                .unwrap_or_default()
                .iter()
                .enumerate()
                .map(|(i, a)| Segment {
                    id: segment_id(p.probe_id(), i),
                    text: a.text().to_string(),
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut out = CorpusTranslation::default();
    for target in targets.iter().filter(|t| **t != en) {
        let fwd = run_stage(
            &format!("forward:{target}"),
            &source,
            &en,
            target,
            client,
            cfg,
            journal.as_ref(),
            &calls,
        )?;
        let back_input: Vec<Segment> = source
            .iter()
            .filter_map(|s| {
                fwd.outputs.get(&s.id).map(|t| Segment {
                    id: s.id.clone(),
                    text: t.clone(),
                })
            })
            .collect();
        let back = run_stage(
            &format!("back:{target}"),
            &back_input,
            target,
            &en,
            client,
            cfg,
            journal.as_ref(),
            &calls,
        )?;

        let mut failed_probes: BTreeSet<String> = BTreeSet::new();
        for id in fwd.failed.iter().chain(back.failed.iter()) {
            if let Some((p, _)) = split_segment_id(id) {
                failed_probes.insert(p.to_string());
            }
        }
        let mut fwd_map = BTreeMap::new();
        let mut back_map = BTreeMap::new();
        for probe in corpus.probes() {
            let pid = probe.probe_id();
            if failed_probes.contains(pid) {
                out.failed.insert((target.clone(), pid.to_string()));
                continue;
            }
            let collect = |m: &BTreeMap<String, String>| -> Option<Vec<String>> {
                (0..k).map(|i| m.get(&segment_id(pid, i)).cloned()).collect()
            };
            match (collect(&fwd.outputs), collect(&back.outputs)) {
                (Some(f), Some(b)) => {
                    fwd_map.insert(pid.to_string(), f);
                    back_map.insert(pid.to_string(), b);
                }
                _ => {
                    out.failed.insert((target.clone(), pid.to_string()));
                }
            }
        }
        out.forward.insert(target.clone(), fwd_map);
        out.back.insert(target.clone(), back_map);
    }
    out.provider_calls = calls.load(Ordering::SeqCst);
    Ok(out)
}

/// Returns the input unchanged.
#[derive(Debug, Clone, Default)]
pub struct IdentityTranslator;

impl TranslatorClient for IdentityTranslator {
    fn provider_id(&self) -> &str {
        "mock-identity"
    }

    fn translate(
        &self,
        batch: &[Segment],
        _source: &LanguageCode,
        _target: &LanguageCode,
    ) -> std::result::Result<Vec<Segment>, ProviderError> {
        Ok(batch.to_vec())
    }
}

/// Toy translator: a non-English "language" is English with every word's characters reversed.
/// With `noise > 0`, a deterministic fraction of back-translations lose their last word.
#[derive(Debug, Clone, Default)]
pub struct ReversingTranslator {
    pub noise: f64,
}

fn reverse_words(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.chars().rev().collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

impl TranslatorClient for ReversingTranslator {
    fn provider_id(&self) -> &str {
        "mock-reverse"
    }

    fn translate(
        &self,
        batch: &[Segment],
        source: &LanguageCode,
        target: &LanguageCode,
    ) -> std::result::Result<Vec<Segment>, ProviderError> {
        Ok(batch
            .iter()
            .map(|s| {
                let mut text = if source == target {
                    s.text.clone()
                } else {
                    reverse_words(&s.text)
                };
                if target.is_english() && self.noise > 0.0 {
                    let u = (stable_hash(&[source.as_str().as_bytes(), s.text.as_bytes()]) >> 11) as f64
                        / (1u64 << 53) as f64;
                    if u < self.noise {
                        let mut words: Vec<&str> = text.split_whitespace().collect();
                        if words.len() > 1 {
                            words.pop();
                        }
                        text = words.join(" ");
                    }
                }
                Segment {
                    id: s.id.clone(),
                    text,
                }
            })
            .collect())
    }
}

/// JSON-over-HTTP provider adapter.
///
/// Request: `POST endpoint {"source", "target", "segments": [{"id", "text"}]}` with an optional
/// `Authorization: Bearer <key>` header, the key read from the environment variable named by
/// `api_key_env`. Response: `{"segments": [{"id", "text"}]}`. HTTP 429 and 5xx are transient.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    provider: String,
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpTranslator {
    pub fn new(provider: &str, endpoint: &str, api_key_env: Option<&str>, timeout: Duration) -> Result<Self> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} with the provider key is not set"))
            })?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(HttpTranslator {
            provider: provider.to_string(),
            endpoint: endpoint.to_string(),
            api_key,
            http,
        })
    }
}

impl TranslatorClient for HttpTranslator {
    fn provider_id(&self) -> &str {
        &self.provider
    }

    fn translate(
        &self,
        batch: &[Segment],
        source: &LanguageCode,
        target: &LanguageCode,
    ) -> std::result::Result<Vec<Segment>, ProviderError> {
        #[derive(Deserialize)]
        struct Resp {
            segments: Vec<Segment>,
        }
        let mut req = self.http.post(&self.endpoint).json(&serde_json::json!({
            "source": source.as_str(),
            "target": target.as_str(),
            "segments": batch,
        }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Fatal(format!("HTTP {status}")));
        }
        resp.json::<Resp>()
            .map(|r| r.segments)
            .map_err(|e| ProviderError::Fatal(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segs(n: usize) -> Vec<Segment> {
        (0..n)
            .map(|i| Segment {
                id: format!("s{i}"),
                text: format!("text {i}"),
            })
            .collect()
    }

    #[test]
    fn align_rejects_missing_and_duplicate_ids() {
        let b = segs(3);
        let mut r = b.clone();
        r.reverse();
        assert_eq!(align(&b, r).unwrap(), vec!["text 0", "text 1", "text 2"]);
        assert!(align(&b, b[..2].to_vec()).is_err());
        let dup = vec![b[0].clone(), b[0].clone(), b[2].clone()];
        assert!(align(&b, dup).is_err());
    }

    #[test]
    fn reversing_round_trip_is_identity() {
        let t = ReversingTranslator::default();
        let en = LanguageCode::english();
        let xx = LanguageCode::new("xx").unwrap();
        let b = vec![Segment {
            id: "a".into(),
            text: "birds can fly.".into(),
        }];
        let f = t.translate(&b, &en, &xx).unwrap();
        assert_eq!(f[0].text, "sdrib nac .ylf");
        assert_eq!(t.translate(&f, &xx, &en).unwrap()[0].text, "birds can fly.");
    }

    #[test]
    fn corrupted_journal_refuses_to_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        std::fs::write(&path, "{\"stage\":\"forward:de\",\"id\":\"a\",\"status\":\"ok\",\"output\":\"x\"}\n{not json\n").unwrap();
        assert!(matches!(Journal::open(&path), Err(Error::Journal { .. })));
    }
}
