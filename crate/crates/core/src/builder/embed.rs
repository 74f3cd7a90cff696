use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tokenize::{split_words, stable_hash};

/// Sentence embedding used to compare an English original with its back-translation.
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Cosine similarity. Zero vectors have similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different widths");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Signed feature hashing over lowercased words and word bigrams.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub width: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { width: 512 }
    }
}

impl HashingEmbedder {
    fn add(v: &mut [f64], feature: &str) {
        let h = stable_hash(&[b"emb", feature.as_bytes()]);
        let slot = (h % v.len() as u64) as usize;
        v[slot] += if (h >> 63) == 0 { 1.0 } else { -1.0 };
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let words: Vec<String> = split_words(text).iter().map(|w| w.to_lowercase()).collect();
        let mut v = vec![0.0; self.width.max(1)];
        for w in &words {
            Self::add(&mut v, w);
        }
        for pair in words.windows(2) {
            Self::add(&mut v, &format!("{} {}", pair[0], pair[1]));
        }
        v
    }
}

impl EmbeddingBackend for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// `POST {base}/embed {"texts": [...]}` returning `{"vectors": [[...], ...]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    http: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(RemoteEmbedder {
            url: format!("{}/embed", base_url.trim_end_matches('/')),
            http,
        })
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.url
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        #[derive(Deserialize)]
        struct Resp {
            vectors: Vec<Vec<f64>>,
        }
        let resp: Resp = self
            .http
            .post(&self.url)
            .json(&serde_json::json!({ "texts": texts }))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Backend(format!("embedder: {e}")))?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Backend(format!(
                "embedder returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        Ok(resp.vectors)
    }
}
