use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::data::{Assertion, McqItem};
use crate::error::{Error, Result};

pub trait SentimentClassifier: Send + Sync {
    /// True for text the classifier labels neutral.
    fn is_neutral(&self, text: &str) -> Result<bool>;
}

/// Case-insensitive, word-boundary keyword matcher.
#[derive(Debug, Clone, Default)]
pub struct KeywordList {
    terms: Vec<String>,
    pattern: Option<Regex>,
}

impl KeywordList {
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: Vec<String> = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Ok(KeywordList::default());
        }
        let alternation = terms.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join("|");
        let pattern = RegexBuilder::new(&format!(r"\b(?:{alternation})\b"))
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Config(format!("keyword list: {e}")))?;
        Ok(KeywordList {
            terms,
            pattern: Some(pattern),
        })
    }

    /// One term per line; blank lines and `#` comments ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(raw.lines().filter(|l| !l.trim_start().starts_with('#')))
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// The first matching term as it appears in `text`.
    pub fn find<'t>(&self, text: &'t str) -> Option<&'t str> {
        self.pattern.as_ref()?.find(text).map(|m| m.as_str())
    }
}

/// Anything with text the cultural filter can inspect.
pub trait Filterable {
    fn id(&self) -> String;
    fn texts(&self) -> Vec<&str>;
}

impl Filterable for McqItem {
    fn id(&self) -> String {
        self.item_id.clone()
    }

    fn texts(&self) -> Vec<&str> {
        std::iter::once(self.prompt.as_str())
            .chain(self.options.iter().map(String::as_str))
            .collect()
    }
}

impl Filterable for Assertion {
    fn id(&self) -> String {
        self.text().to_string()
    }

    fn texts(&self) -> Vec<&str> {
        vec![self.text()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RemovalReason {
    Keyword { term: String },
    NonNeutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    #[serde(flatten)]
    pub reason: RemovalReason,
}

/// Drops items that contain a listed keyword or that the classifier labels non-neutral.
/// Keyword matches are checked first and reported as the reason.
pub fn culture_filter<T: Filterable + Clone>(
    items: &[T],
    keywords: &KeywordList,
    classifier: Option<&dyn SentimentClassifier>,
) -> Result<(Vec<T>, Vec<Removal>)> {
    let mut kept = Vec::new();
    let mut log = Vec::new();
    'items: for item in items {
        let texts = item.texts();
        for t in &texts {
            if let Some(term) = keywords.find(t) {
                log.push(Removal {
                    id: item.id(),
                    reason: RemovalReason::Keyword {
                        term: term.to_lowercase(),
                    },
                });
                continue 'items;
            }
        }
        if let Some(c) = classifier {
            for t in &texts {
                if !c.is_neutral(t)? {
                    log.push(Removal {
                        id: item.id(),
                        reason: RemovalReason::NonNeutral,
                    });
                    continue 'items;
                }
            }
        }
        kept.push(item.clone());
    }
    Ok((kept, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LanguageCode;

    fn a(t: &str) -> Assertion {
        Assertion::new(t, LanguageCode::english()).unwrap()
    }

    #[test]
    fn keyword_match_is_case_insensitive_and_word_bounded() {
        let k = KeywordList::new(["wedding"]).unwrap();
        let items = [a("A Wedding has a cake."), a("Weddings are long."), a("birds fly")];
        let (kept, log) = culture_filter(&items, &k, None).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(log.len(), 1);
        assert_eq!(
            log[0].reason,
            RemovalReason::Keyword {
                term: "wedding".into()
            }
        );
    }

    #[test]
    fn empty_list_without_classifier_is_identity() {
        let items = [a("x y"), a("z")];
        let (kept, log) = culture_filter(&items, &KeywordList::default(), None).unwrap();
        assert_eq!(kept, items);
        assert!(log.is_empty());
    }

    struct NoExclamations;
    impl SentimentClassifier for NoExclamations {
        fn is_neutral(&self, text: &str) -> Result<bool> {
            Ok(!text.contains('!'))
        }
    }

    #[test]
    fn classifier_removals_are_logged() {
        let items = [a("I love it!"), a("it is red")];
        let (kept, log) = culture_filter(&items, &KeywordList::default(), Some(&NoExclamations)).unwrap();
        assert_eq!(kept, vec![a("it is red")]);
        assert_eq!(log[0].reason, RemovalReason::NonNeutral);
    }
}
