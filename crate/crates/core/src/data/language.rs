use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A lowercase language tag such as `en`, `zh` or `pt-br`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: &str) -> Result<Self> {
        let code = code.trim();
        if code.is_empty() {
            return Err(Error::validation("<language>", "language code must be non-empty"));
        }
        let valid = code
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_');
        if !valid {
            return Err(Error::validation(
                code,
                "language code must contain only lowercase ascii letters, digits, '-' or '_'",
            ));
        }
        Ok(LanguageCode(code.to_string()))
    }

    pub fn english() -> Self {
        LanguageCode("en".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LanguageCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LanguageCode::new(s)
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        LanguageCode::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated list like `en,de,fr`.
pub fn parse_language_list(list: &str) -> Result<Vec<LanguageCode>> {
    let mut out: Vec<LanguageCode> = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let code = LanguageCode::new(part)?;
        if out.contains(&code) {
            return Err(Error::validation(part, "duplicate language in set"));
        }
        out.push(code);
    }
    Ok(out)
}
