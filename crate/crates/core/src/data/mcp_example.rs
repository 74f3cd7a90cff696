use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl;
use super::{Assertion, LanguageCode};
use crate::error::{Error, Result};

/// `V` assertions in `V` distinct languages, exactly one of which is the truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McpExample {
    example_id: String,
    candidates: Vec<Assertion>,
    label: usize,
}

impl McpExample {
    pub fn new(example_id: impl Into<String>, candidates: Vec<Assertion>, label: usize) -> Result<Self> {
        let example_id = example_id.into();
        if candidates.len() < 2 {
            return Err(Error::validation(example_id, "an MCP example needs at least 2 candidates"));
        }
        if label >= candidates.len() {
            return Err(Error::validation(
                example_id,
                format!("label {label} out of range for {} candidates", candidates.len()),
            ));
        }
        let mut seen = BTreeSet::new();
        for c in &candidates {
            if !seen.insert(c.language()) {
                return Err(Error::validation(
                    example_id,
                    format!("language `{}` appears more than once", c.language()),
                ));
            }
        }
        Ok(McpExample {
            example_id,
            candidates,
            label,
        })
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn candidates(&self) -> &[Assertion] {
        &self.candidates
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn truth(&self) -> &Assertion {
        &self.candidates[self.label]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    lang: String,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct McpRecord {
    example_id: String,
    label: usize,
    candidates: Vec<CandidateRecord>,
}

pub fn save_mcp(examples: &[McpExample], path: &Path) -> Result<()> {
    let records: Vec<McpRecord> = examples
        .iter()
        .map(|e| McpRecord {
            example_id: e.example_id.clone(),
            label: e.label,
            candidates: e
                .candidates
                .iter()
                .map(|a| CandidateRecord {
                    lang: a.language().to_string(),
                    text: a.text().to_string(),
                })
                .collect(),
        })
        .collect();
    jsonl::write_records(path, &records)
}

pub fn load_mcp(path: &Path) -> Result<Vec<McpExample>> {
    let mut out = Vec::new();
    for (_, r) in jsonl::read_records::<McpRecord>(path)? {
        let candidates = r
            .candidates
            .iter()
            .map(|c| {
                let lang = LanguageCode::new(&c.lang)?;
                Assertion::new(&c.text, lang)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::validation(r.example_id.clone(), e.to_string()))?;
        out.push(McpExample::new(r.example_id, candidates, r.label)?);
    }
    Ok(out)
}
