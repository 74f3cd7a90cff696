//! Domain data model and the JSONL interchange formats.

pub mod jsonl;
mod language;
mod mcp_example;
mod mcq;
mod probe;

pub use language::{parse_language_list, LanguageCode};
pub use mcp_example::{load_mcp, save_mcp, McpExample};
pub use mcq::{codah_category, group_by_language, load_mcq, save_mcq, McqItem, ALLOWED_OPTION_COUNTS};
pub use probe::{
    corpus_stats, load_probes, load_probes_with_k, save_probes, Assertion, CorpusStats, MickeyCorpus,
    MickeyProbe,
};
