//! Name-to-backend lookup shared by every subcommand.

use std::path::PathBuf;
use std::time::Duration;

use mickey_core::backend::{BowEncoder, LexiconLm, MaskedLm, RemoteLm, TableLm, UniformLm};
use mickey_core::builder::{
    EmbeddingBackend, HashTagger, HashingEmbedder, HttpTranslator, IdentityTranslator, LexiconTagger, RemoteEmbedder,
    RemoteTagger, ReversingTranslator, Tagger, TranslatorClient,
};

use crate::config::BackendArgs;
use crate::failure::Failure;

pub const MASKED_LMS: [&str; 4] = ["mock-uniform", "mock-table", "mock-lexicon", "remote"];
pub const DEFAULT_LM: &str = "mock-lexicon";
pub const DEFAULT_MOCK_VOCAB: usize = 500;
pub const DEFAULT_TIMEOUT_SECS: u64 = 60;
pub const TOY_ENCODER: &str = "toy-bow";

fn unknown(kind: &str, name: &str, known: &[&str]) -> Failure {
    Failure::Usage(format!("unknown {kind} `{name}` (known: {})", known.join(", ")))
}

pub fn timeout(backend: &BackendArgs) -> Duration {
    Duration::from_secs(backend.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS))
}

/// `references` are the sentences a lexicon mock should prefer (ignored by the other backends).
pub fn masked_lm(backend: &BackendArgs, references: &[String], seed: u64) -> Result<Box<dyn MaskedLm>, Failure> {
    let name = backend.lm.as_deref().unwrap_or(DEFAULT_LM);
    let vocab = backend.vocab_size.unwrap_or(DEFAULT_MOCK_VOCAB);
    Ok(match name {
        "mock-uniform" => Box::new(UniformLm::new(vocab)?),
        "mock-table" => Box::new(TableLm::new(vocab, seed)?),
        "mock-lexicon" => Box::new(LexiconLm::new(references.iter().map(String::as_str), std::iter::empty(), vocab)),
        "remote" => {
            let url = backend
                .lm_url
                .as_deref()
                .ok_or_else(|| Failure::Usage("--lm remote needs --lm-url".into()))?;
            Box::new(RemoteLm::connect(url, timeout(backend))?)
        }
        other => return Err(unknown("masked LM", other, &MASKED_LMS)),
    })
}

pub fn tagger(name: Option<&str>, path: Option<&PathBuf>, url: Option<&str>, backend: &BackendArgs) -> Result<Box<dyn Tagger>, Failure> {
    Ok(match name.unwrap_or("hash") {
        "hash" => Box::new(HashTagger),
        "lexicon" => {
            let path = path.ok_or_else(|| Failure::Usage("--tagger lexicon needs --tagger-path".into()))?;
            Box::new(LexiconTagger::from_tsv(path)?)
        }
        "remote" => {
            let url = url.ok_or_else(|| Failure::Usage("--tagger remote needs --tagger-url".into()))?;
            Box::new(RemoteTagger::new(url, timeout(backend))?)
        }
        other => return Err(unknown("tagger", other, &["hash", "lexicon", "remote"])),
    })
}

pub fn translator(
    name: Option<&str>,
    endpoint: Option<&str>,
    api_key_env: Option<&str>,
    backend: &BackendArgs,
) -> Result<Box<dyn TranslatorClient>, Failure> {
    Ok(match name.unwrap_or("mock-reverse") {
        "mock-identity" => Box::new(IdentityTranslator),
        "mock-reverse" => Box::new(ReversingTranslator::default()),
        "http" => {
            let endpoint =
                endpoint.ok_or_else(|| Failure::Usage("--translator http needs --translator-endpoint".into()))?;
            Box::new(HttpTranslator::new("http", endpoint, api_key_env, timeout(backend))?)
        }
        other => return Err(unknown("translator", other, &["mock-identity", "mock-reverse", "http"])),
    })
}

pub fn embedder(name: Option<&str>, url: Option<&str>, backend: &BackendArgs) -> Result<Box<dyn EmbeddingBackend>, Failure> {
    Ok(match name.unwrap_or("hashing") {
        "hashing" => Box::new(HashingEmbedder::default()),
        "remote" => {
            let url = url.ok_or_else(|| Failure::Usage("--embedder remote needs --embedder-url".into()))?;
            Box::new(RemoteEmbedder::new(url, timeout(backend))?)
        }
        other => return Err(unknown("embedder", other, &["hashing", "remote"])),
    })
}

pub fn fresh_encoder(name: &str, vocab: usize, width: usize, seed: u64) -> Result<BowEncoder, Failure> {
    match name {
        TOY_ENCODER => Ok(BowEncoder::new(vocab, width, seed)?),
        other => Err(unknown("trainable encoder", other, &[TOY_ENCODER])),
    }
}
