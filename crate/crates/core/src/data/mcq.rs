use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::jsonl;
use super::LanguageCode;
use crate::error::{Error, Result};

/// Allowed option counts: 5 for question answering, 4 for scene completion.
pub const ALLOWED_OPTION_COUNTS: [usize; 2] = [4, 5];

/// One multiple-choice item.
///
/// `answer_index` is `None` for splits whose labels are withheld (the public test splits of the
/// released benchmarks); such items can be scored but not graded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McqItem {
    pub item_id: String,
    pub prompt: String,
    pub options: Vec<String>,
    pub answer_index: Option<usize>,
    pub language: LanguageCode,
    pub category: Option<String>,
}

impl McqItem {
    pub fn new(
        item_id: impl Into<String>,
        prompt: &str,
        options: Vec<String>,
        answer_index: Option<usize>,
        language: LanguageCode,
        category: Option<String>,
    ) -> Result<Self> {
        let item_id = item_id.into();
        if !ALLOWED_OPTION_COUNTS.contains(&options.len()) {
            return Err(Error::validation(
                item_id,
                format!("item has {} options; expected 4 or 5", options.len()),
            ));
        }
        if let Some(a) = answer_index {
            if a >= options.len() {
                return Err(Error::validation(
                    item_id,
                    format!("answer index {a} out of range for {} options", options.len()),
                ));
            }
        }
        Ok(McqItem {
            item_id,
            prompt: prompt.nfc().collect(),
            options: options.iter().map(|o| o.nfc().collect()).collect(),
            answer_index,
            language,
            category,
        })
    }
}

/// Native record layout.
#[derive(Debug, Serialize, Deserialize)]
struct McqRecord {
    item_id: String,
    lang: String,
    prompt: String,
    options: Vec<String>,
    answer: Option<usize>,
    category: Option<String>,
}

/// Layout of the publicly released X-CSQA / X-CODAH files.
#[derive(Debug, Deserialize)]
struct ReleaseRecord {
    id: String,
    lang: String,
    question: ReleaseQuestion,
    #[serde(rename = "answerKey")]
    answer_key: Option<String>,
    question_tag: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ReleaseQuestion {
    stem: String,
    choices: Vec<ReleaseChoice>,
}

#[derive(Debug, Deserialize)]
struct ReleaseChoice {
    label: String,
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AnyRecord {
    Native(McqRecord),
    Release(ReleaseRecord),
}

/// Expands the single-letter CODAH question tags.
pub fn codah_category(tag: &str) -> String {
    match tag.trim().to_ascii_lowercase().as_str() {
        "i" => "Idioms",
        "r" => "Reference",
        "p" => "Polysemy",
        "n" => "Negation",
        "q" => "Quantitative",
        "o" => "Others",
        other => return other.to_string(),
    }
    .to_string()
}

impl AnyRecord {
    fn into_item(self) -> Result<McqItem> {
        match self {
            AnyRecord::Native(r) => {
                let lang = LanguageCode::new(&r.lang)
                    .map_err(|e| Error::validation(r.item_id.clone(), e.to_string()))?;
                McqItem::new(r.item_id, &r.prompt, r.options, r.answer, lang, r.category)
            }
            AnyRecord::Release(r) => {
                let lang = LanguageCode::new(&r.lang)
                    .map_err(|e| Error::validation(r.id.clone(), e.to_string()))?;
                let answer = match &r.answer_key {
                    Some(key) if !key.trim().is_empty() => Some(
                        r.question
                            .choices
                            .iter()
                            .position(|c| c.label.trim() == key.trim())
                            .ok_or_else(|| {
                                Error::validation(r.id.clone(), format!("answerKey `{key}` matches no choice label"))
                            })?,
                    ),
                    _ => None,
                };
                let options = r.question.choices.into_iter().map(|c| c.text).collect();
                let category = r.question_tag.as_deref().map(codah_category);
                McqItem::new(r.id, &r.question.stem, options, answer, lang, category)
            }
        }
    }
}

/// Loads a multiple-choice JSONL file (native or released layout) and checks that every item has
/// exactly `expected_options` options.
pub fn load_mcq(path: &Path, expected_options: usize) -> Result<Vec<McqItem>> {
    if !ALLOWED_OPTION_COUNTS.contains(&expected_options) {
        return Err(Error::Config(format!(
            "expected option count must be 4 or 5, got {expected_options}"
        )));
    }
    let mut items = Vec::new();
    for (_, record) in jsonl::read_records::<AnyRecord>(path)? {
        let item = record.into_item()?;
        if item.options.len() != expected_options {
            return Err(Error::validation(
                item.item_id,
                format!(
                    "item has {} options but {expected_options} were expected",
                    item.options.len()
                ),
            ));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn save_mcq(items: &[McqItem], path: &Path) -> Result<()> {
    let records: Vec<McqRecord> = items
        .iter()
        .map(|i| McqRecord {
            item_id: i.item_id.clone(),
            lang: i.language.to_string(),
            prompt: i.prompt.clone(),
            options: i.options.clone(),
            answer: i.answer_index,
            category: i.category.clone(),
        })
        .collect();
    jsonl::write_records(path, &records)
}

/// Groups items by language, preserving file order within each language.
pub fn group_by_language(items: &[McqItem]) -> BTreeMap<LanguageCode, Vec<McqItem>> {
    let mut out: BTreeMap<LanguageCode, Vec<McqItem>> = BTreeMap::new();
    for item in items {
        out.entry(item.language.clone()).or_default().push(item.clone());
    }
    out
}
