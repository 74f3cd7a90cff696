//! Command arguments and the TOML config file. Every field is optional so a flag can override
//! the file and the file can override the built-in default.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

macro_rules! fill_fields {
    ($a:expr, $b:expr; $($field:ident),*) => {
        $(
            if $a.$field.is_none() {
                $a.$field = $b.$field.clone();
            }
        )*
    };
}

/// Copies each `None` field of `self` from `other`.
macro_rules! fill_from {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $ty {
            pub fn fill_from(&mut self, other: &Self) {
                $(
                    if self.$field.is_none() {
                        self.$field = other.$field.clone();
                    }
                )*
            }
        }
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendArgs {
    /// Masked LM: mock-uniform, mock-table, mock-lexicon or remote.
    #[arg(long)]
    pub lm: Option<String>,
    /// Base URL of the model server for `remote`.
    #[arg(long)]
    pub lm_url: Option<String>,
    /// Vocabulary size of the mock models.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Request timeout for remote services, in seconds.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}
fill_from!(BackendArgs { lm, lm_url, vocab_size, timeout_secs });

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildArgs {
    /// Truth assertions, one English sentence per line.
    #[arg(long)]
    pub truths: Option<PathBuf>,
    /// Comma-separated target languages.
    #[arg(long)]
    pub languages: Option<String>,
    /// Keep only the N target languages with the best mean back-translation cosine.
    #[arg(long)]
    pub select_top: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub candidates_per_round: Option<usize>,
    #[arg(long)]
    pub rank_lo: Option<usize>,
    #[arg(long)]
    pub rank_hi: Option<usize>,
    /// Tagger: hash, lexicon (needs --tagger-path) or remote (needs --tagger-url).
    #[arg(long)]
    pub tagger: Option<String>,
    #[arg(long)]
    pub tagger_path: Option<PathBuf>,
    #[arg(long)]
    pub tagger_url: Option<String>,
    /// Translator: mock-identity, mock-reverse or http.
    #[arg(long)]
    pub translator: Option<String>,
    #[arg(long)]
    pub translator_endpoint: Option<String>,
    /// Environment variable holding the provider API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub min_interval_ms: Option<u64>,
    /// Embedder: hashing or remote (needs --embedder-url).
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long)]
    pub embedder_url: Option<String>,
    #[arg(long)]
    pub gate_threshold: Option<f64>,
    /// all (every candidate must pass) or truth.
    #[arg(long)]
    pub gate_scope: Option<String>,
    /// Keyword list for the cultural filter.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}
fill_from!(BuildArgs {
    truths, languages, select_top, k, max_rounds, candidates_per_round, rank_lo, rank_hi, tagger,
    tagger_path, tagger_url, translator, translator_endpoint, api_key_env, batch_size, workers,
    max_attempts, min_interval_ms, embedder, embedder_url, gate_threshold, gate_scope, keywords, seed,
});

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated k values.
    #[arg(long)]
    pub ks: Option<String>,
    /// pessimistic, optimistic or random.
    #[arg(long)]
    pub ties: Option<String>,
    /// Adds the shortest-candidate baseline row.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shortest: Option<bool>,
    /// Quality records from a build run; adds the back-translation cosine row.
    #[arg(long)]
    pub quality: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}
fill_from!(ProbeArgs { corpus, ks, ties, shortest, quality, seed });

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Candidates per example.
    #[arg(long)]
    pub v: Option<usize>,
    /// Examples drawn per probe.
    #[arg(long)]
    pub multiplier: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}
fill_from!(ConvertArgs { corpus, v, multiplier, seed });

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingArgs {
    /// Backbone preset: mbert, xlm-100, xlm-r-b or xlm-r-l (an `mcp-` prefix is accepted).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}
fill_from!(TrainingArgs {
    preset, learning_rate, batch_size, epochs, warmup_steps, eval_interval, max_steps, max_seq_len,
    optimizer, seed,
});

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McpTrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Held-out examples; without it the last tenth of `--train` is held out.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Encoder to initialise: toy-bow.
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub encoder_vocab: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Read from the `[<command>.training]` table in config files.
    #[command(flatten)]
    pub training: TrainingArgs,
}

impl McpTrainArgs {
    pub fn fill_from(&mut self, other: &Self) {
        fill_fields!(self, other; train, dev, encoder, encoder_vocab, width);
        self.training.fill_from(&other.training);
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneArgs {
    /// Checkpoint to start from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Start from a freshly initialised encoder instead of a checkpoint.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fresh: Option<bool>,
    #[arg(long)]
    pub encoder_vocab: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// xcsqa or xcodah.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Extra English training items in the same task format.
    #[arg(long)]
    pub aux_train: Option<PathBuf>,
    /// Read from the `[<command>.training]` table in config files.
    #[command(flatten)]
    pub training: TrainingArgs,
}

impl FinetuneArgs {
    pub fn fill_from(&mut self, other: &Self) {
        fill_fields!(self, other; checkpoint, fresh, encoder_vocab, width, task, train, dev, aux_train);
        self.training.fill_from(&other.training);
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    /// Directory of `<lang>.jsonl` test files.
    #[arg(long)]
    pub test_dir: Option<PathBuf>,
    /// Declared languages; defaults to the files present in `--test-dir`.
    #[arg(long)]
    pub languages: Option<String>,
    /// Earlier eval run whose report supplies the baseline for the delta row.
    #[arg(long)]
    pub baseline_run: Option<PathBuf>,
    /// Model name used in report rows.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
}
fill_from!(EvalArgs { checkpoint, task, test_dir, languages, baseline_run, model, max_seq_len });

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}
fill_from!(StatsArgs { corpus });

/// Contents of a `--config` file. Sections are named after the subcommands.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub backend: BackendArgs,
    pub build: BuildArgs,
    pub probe: ProbeArgs,
    #[serde(rename = "mcp-convert")]
    pub mcp_convert: ConvertArgs,
    #[serde(rename = "mcp-train")]
    pub mcp_train: McpTrainArgs,
    pub finetune: FinetuneArgs,
    pub eval: EvalArgs,
    pub stats: StatsArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Failure::Infrastructure(format!("{}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

/// The resolved configuration echoed into every run directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub backend: BackendArgs,
    pub params: serde_json::Value,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# config echo failed: {e}\n"))
    }
}

pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, Failure> {
    value.clone().ok_or_else(|| Failure::Usage(format!("missing required option --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let mut flags = BuildArgs {
            k: Some(4),
            ..Default::default()
        };
        let file: ConfigFile = toml::from_str("[build]\nk = 5\nlanguages = \"de,fr\"\n").unwrap();
        flags.fill_from(&file.build);
        assert_eq!(flags.k, Some(4));
        assert_eq!(flags.languages.as_deref(), Some("de,fr"));
    }

    #[test]
    fn nested_training_table_parses() {
        let file: ConfigFile = toml::from_str("[mcp-train]\nwidth = 8\n[mcp-train.training]\nlearning_rate = 0.1\n").unwrap();
        assert_eq!(file.mcp_train.width, Some(8));
        assert_eq!(file.mcp_train.training.learning_rate, Some(0.1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[build]\nkk = 5\n").is_err());
    }
}
