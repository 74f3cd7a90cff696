use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::LanguageCode;
use crate::error::{Error, Result};
use crate::tokenize::{split_words, stable_hash};

/// Universal POS tags eligible for masking.
pub const MASKABLE_POS: [&str; 3] = ["NOUN", "VERB", "ADJ"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedWord {
    pub surface: String,
    pub pos: String,
    /// Morphological features as `Key=Value` pairs.
    pub features: BTreeMap<String, String>,
}

impl TaggedWord {
    pub fn is_maskable(&self) -> bool {
        MASKABLE_POS.contains(&self.pos.as_str())
    }
}

pub trait Tagger: Send + Sync {
    fn tag(&self, text: &str, language: &LanguageCode) -> Result<Vec<TaggedWord>>;
}

/// Parses `Number=Sing|Tense=Past` style feature strings. `_` means none.
pub fn parse_features(raw: &str) -> BTreeMap<String, String> {
    raw.split('|')
        .filter(|f| !f.is_empty() && *f != "_")
        .filter_map(|f| f.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Deterministic stand-in tagger: punctuation is `PUNCT`, every other word gets a tag chosen
/// by hashing its surface form.
#[derive(Debug, Clone, Default)]
pub struct HashTagger;

impl HashTagger {
    pub fn tag_word(word: &str) -> TaggedWord {
        let is_punct = word.chars().all(|c| c.is_ascii_punctuation());
        let (pos, features) = if is_punct {
            ("PUNCT", BTreeMap::new())
        } else {
            let h = stable_hash(&[b"pos", word.as_bytes()]);
            let pos = ["NOUN", "VERB", "ADJ", "DET"][(h % 4) as usize];
            let mut features = BTreeMap::new();
            if pos == "NOUN" {
                let n = if (h >> 8) & 1 == 0 { "Sing" } else { "Plur" };
                features.insert("Number".to_string(), n.to_string());
            }
            (pos, features)
        };
        TaggedWord {
            surface: word.to_string(),
            pos: pos.to_string(),
            features,
        }
    }
}

impl Tagger for HashTagger {
    fn tag(&self, text: &str, _language: &LanguageCode) -> Result<Vec<TaggedWord>> {
        Ok(split_words(text).iter().map(|w| HashTagger::tag_word(w)).collect())
    }
}

/// Dictionary tagger loaded from a TSV of `lang<TAB>word<TAB>UPOS<TAB>feats` lines; words
/// missing from the dictionary fall back to [`HashTagger`].
#[derive(Debug, Clone, Default)]
pub struct LexiconTagger {
    entries: HashMap<(String, String), (String, BTreeMap<String, String>)>,
}

impl LexiconTagger {
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected lang, word, UPOS[, feats]".into(),
                });
            }
            let feats = parse_features(cols.get(3).copied().unwrap_or("_"));
            entries.insert(
                (cols[0].to_string(), cols[1].to_string()),
                (cols[2].to_string(), feats),
            );
        }
        Ok(LexiconTagger { entries })
    }

    pub fn insert(&mut self, language: &LanguageCode, word: &str, pos: &str, feats: &str) {
        self.entries.insert(
            (language.to_string(), word.to_string()),
            (pos.to_string(), parse_features(feats)),
        );
    }
}

impl Tagger for LexiconTagger {
    fn tag(&self, text: &str, language: &LanguageCode) -> Result<Vec<TaggedWord>> {
        Ok(split_words(text)
            .iter()
            .map(|w| match self.entries.get(&(language.to_string(), w.clone())) {
                Some((pos, features)) => TaggedWord {
                    surface: w.clone(),
                    pos: pos.clone(),
                    features: features.clone(),
                },
                None => HashTagger::tag_word(w),
            })
            .collect())
    }
}

/// Tagger served over HTTP: `POST {base}/tag {"text", "lang"}` returning
/// `{"words": [{"text", "upos", "feats"}]}`.
#[derive(Debug, Clone)]
pub struct RemoteTagger {
    url: String,
    http: reqwest::blocking::Client,
}

impl RemoteTagger {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(RemoteTagger {
            url: format!("{}/tag", base_url.trim_end_matches('/')),
            http,
        })
    }
}

impl Tagger for RemoteTagger {
    fn tag(&self, text: &str, language: &LanguageCode) -> Result<Vec<TaggedWord>> {
        #[derive(Deserialize)]
        struct Word {
            text: String,
            upos: String,
            feats: Option<String>,
        }
        #[derive(Deserialize)]
        struct Resp {
            words: Vec<Word>,
        }
        let resp: Resp = self
            .http
            .post(&self.url)
            .json(&serde_json::json!({"text": text, "lang": language.as_str()}))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Backend(format!("tagger: {e}")))?;
        Ok(resp
            .words
            .into_iter()
            .map(|w| TaggedWord {
                surface: w.text,
                pos: w.upos,
                features: parse_features(w.feats.as_deref().unwrap_or("_")),
            })
            .collect())
    }
}
