//! Probe corpus construction: distractor decoding, tagging filters, round-trip translation,
//! similarity gating and cultural pre-filtering.

pub mod assemble;
pub mod culture;
pub mod embed;
pub mod filter;
pub mod gate;
pub mod masking;
pub mod mcq_translate;
pub mod tagger;
pub mod translate;

pub use assemble::{
    assemble_probe, build_english_corpus, probe_id_for, sub_rng, AssembleConfig, AssembleOutcome,
    BuildDiagnostics, SkipReason,
};
pub use culture::{culture_filter, Filterable, KeywordList, Removal, RemovalReason, SentimentClassifier};
pub use embed::{cosine, EmbeddingBackend, HashingEmbedder, RemoteEmbedder};
pub use filter::{pos_filter, same_tag_sequence, FilterOutcome, FilterStats};
pub use gate::{
    assemble_multilingual, language_quality, passing_ids, quality_records, select_languages, GateReport,
    GateScope, QualityRecord, MCQ_GATE_THRESHOLD, PROBE_GATE_THRESHOLD,
};
pub use masking::{
    decode_distractor, plan_masks, rank_tokens, DecodeStep, DistractorCandidate, MaskingPlan, RankWindow,
};
pub use mcq_translate::{translate_mcq, McqGate, McqTranslation};
pub use tagger::{HashTagger, LexiconTagger, RemoteTagger, TaggedWord, Tagger, MASKABLE_POS};
pub use translate::{
    align, run_stage, translate_corpus, CorpusTranslation, HttpTranslator, IdentityTranslator, JobStatus,
    Journal, JournalEntry, ProviderError, RetryPolicy, ReversingTranslator, Segment, StageResult,
    TranslateConfig, TranslatorClient,
};
