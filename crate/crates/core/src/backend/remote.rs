//! JSON-over-HTTP adapter for a masked LM served out of process.
//!
//! Endpoints (all `POST`, JSON bodies):
//!
//! | path               | request                                   | response                         |
//! |--------------------|-------------------------------------------|----------------------------------|
//! | `/info`            | `{}`                                      | `{"model", "vocab_size", "cls", "sep", "mask", "pad", "unk"}` |
//! | `/pieces`          | `{"text", "lang"}`                        | `{"ids": [..]}`                  |
//! | `/decode`          | `{"ids": [..]}`                           | `{"text"}`                       |
//! | `/masked_logprobs` | `{"token_ids": [..], "position"}`         | `{"logprobs": [..]}`             |
//! | `/token_logprob`   | `{"token_ids": [..], "position", "target"}` | `{"logprob"}`                  |

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::MaskedLm;
use crate::data::LanguageCode;
use crate::error::{Error, Result};
use crate::tokenize::{SpecialTokens, Tokenizer};

#[derive(Debug, Deserialize)]
struct InfoResponse {
    model: String,
    vocab_size: usize,
    cls: u32,
    sep: u32,
    mask: u32,
    pad: u32,
    unk: u32,
}

#[derive(Debug, Clone)]
struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base.trim_end_matches('/'), path);
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .map_err(|e| Error::Backend(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Backend(format!("{url}: HTTP {}", resp.status())));
        }
        resp.json().map_err(|e| Error::Backend(format!("{url}: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteTokenizer {
    client: Client,
    vocab_size: usize,
    specials: SpecialTokens,
}

impl Tokenizer for RemoteTokenizer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn specials(&self) -> SpecialTokens {
        self.specials
    }

    fn pieces(&self, text: &str, language: &LanguageCode) -> Vec<u32> {
        #[derive(Deserialize)]
        struct R {
            ids: Vec<u32>,
        }
        match self
            .client
            .post::<_, R>("/pieces", &json!({"text": text, "lang": language.as_str()}))
        {
            Ok(r) => r.ids,
            Err(e) => {
                tracing::error!("remote tokenizer failed: {e}");
                Vec::new()
            }
        }
    }

    fn piece_text(&self, id: u32) -> Option<String> {
        self.decode(&[id])
    }

    fn decode(&self, ids: &[u32]) -> Option<String> {
        #[derive(Deserialize)]
        struct R {
            text: String,
        }
        self.client
            .post::<_, R>("/decode", &json!({ "ids": ids }))
            .ok()
            .map(|r| r.text)
    }
}

/// A pretrained masked LM reached over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteLm {
    id: String,
    tokenizer: RemoteTokenizer,
}

impl RemoteLm {
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let client = Client {
            base: base_url.to_string(),
            http,
        };
        let info: InfoResponse = client.post("/info", &json!({}))?;
        Ok(RemoteLm {
            id: format!("remote:{}", info.model),
            tokenizer: RemoteTokenizer {
                client,
                vocab_size: info.vocab_size,
                specials: SpecialTokens {
                    pad: info.pad,
                    cls: info.cls,
                    sep: info.sep,
                    mask: info.mask,
                    unk: info.unk,
                },
            },
        })
    }
}

impl MaskedLm for RemoteLm {
    fn id(&self) -> &str {
        &self.id
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn masked_logprobs(&self, token_ids: &[u32], masked_position: usize) -> Result<Vec<f64>> {
        #[derive(Deserialize)]
        struct R {
            logprobs: Vec<f64>,
        }
        let r: R = self.tokenizer.client.post(
            "/masked_logprobs",
            &json!({"token_ids": token_ids, "position": masked_position}),
        )?;
        Ok(r.logprobs)
    }

    fn token_logprob(&self, token_ids: &[u32], masked_position: usize, target: u32) -> Result<f64> {
        #[derive(Deserialize)]
        struct R {
            logprob: f64,
        }
        let r: R = self.tokenizer.client.post(
            "/token_logprob",
            &json!({"token_ids": token_ids, "position": masked_position, "target": target}),
        )?;
        Ok(r.logprob)
    }

    fn concurrency_safe(&self) -> bool {
        false
    }
}
