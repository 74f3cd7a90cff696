//! Minibatch training of an encoder plus linear head under the softmax cross-entropy objective.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::head::{argmax, head_gradient, McpHead};
use crate::backend::{Encoder, TrainableEncoder};
use crate::data::{LanguageCode, McpExample};
use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

/// One example as token sequences, one per candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceSet {
    pub id: String,
    pub language: LanguageCode,
    pub sequences: Vec<Vec<u32>>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Xcsqa,
    Xcodah,
}

impl Task {
    pub fn num_options(self) -> usize {
        match self {
            Task::Xcsqa => 5,
            Task::Xcodah => 4,
        }
    }

    pub fn max_seq_len(self) -> usize {
        match self {
            Task::Xcsqa => 64,
            Task::Xcodah => 100,
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "xcsqa" => Ok(Task::Xcsqa),
            "xcodah" => Ok(Task::Xcodah),
            _ => Err(Error::Config(format!("unknown task `{s}` (expected xcsqa or xcodah)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Xcsqa => "xcsqa",
            Task::Xcodah => "xcodah",
        })
    }
}

/// Pretrained backbones with tuned defaults. Contrastively pretrained variants share the
/// defaults of their backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    Mbert,
    Xlm100,
    XlmRBase,
    XlmRLarge,
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        let key = key.strip_prefix("mcp").unwrap_or(&key);
        match key {
            "mbert" => Ok(Backbone::Mbert),
            "xlm100" => Ok(Backbone::Xlm100),
            "xlmrb" | "xlmrbase" => Ok(Backbone::XlmRBase),
            "xlmrl" | "xlmrlarge" => Ok(Backbone::XlmRLarge),
            _ => Err(Error::Config(format!("unknown backbone `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub eval_interval: usize,
    pub max_seq_len: usize,
    pub seed: u64,
    /// Caps the total number of updates; `None` runs every epoch.
    pub max_steps: Option<usize>,
    pub optimizer: Optimizer,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig::preset(Backbone::XlmRBase, Task::Xcsqa)
    }
}

impl TrainingConfig {
    /// Tuned fine-tuning defaults per backbone and task.
    pub fn preset(backbone: Backbone, task: Task) -> Self {
        let (learning_rate, epochs, warmup_steps, batch_size) = match (backbone, task) {
            (Backbone::Mbert, Task::Xcodah) => (3e-5, 20, 100, 128),
            (Backbone::Mbert, Task::Xcsqa) => (3e-5, 30, 100, 64),
            (Backbone::Xlm100, Task::Xcodah) => (1e-5, 20, 100, 64),
            (Backbone::Xlm100, Task::Xcsqa) => (1e-5, 20, 300, 64),
            (Backbone::XlmRBase, Task::Xcodah) => (1e-5, 20, 100, 128),
            (Backbone::XlmRBase, Task::Xcsqa) => (1e-5, 30, 100, 144),
            (Backbone::XlmRLarge, Task::Xcodah) => (6e-6, 10, 100, 64),
            (Backbone::XlmRLarge, Task::Xcsqa) => (6e-6, 10, 100, 64),
        };
        TrainingConfig {
            learning_rate,
            batch_size,
            epochs,
            warmup_steps,
            eval_interval: 100,
            max_seq_len: task.max_seq_len(),
            seed: 42,
            max_steps: None,
            optimizer: Optimizer::Adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("eval_interval", self.eval_interval),
            ("max_seq_len", self.max_seq_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_seq_len < 3 {
            return Err(Error::Config("max_seq_len must be at least 3".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self, train_len: usize) -> usize {
        let per_epoch = train_len.div_ceil(self.batch_size);
        let full = per_epoch * self.epochs;
        self.max_steps.map_or(full, |m| m.min(full))
    }

    /// Linear warm-up to the peak rate, then linear decay to zero at `total` (steps are 1-based).
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if self.warmup_steps > 0 && step <= self.warmup_steps {
            return self.learning_rate * step as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1) as f64;
        self.learning_rate * (total.saturating_sub(step) as f64 / span).max(0.0)
    }
}

/// Tokenizes the candidates of a selection example, truncating each to `max_len` tokens while
/// keeping the closing boundary token.
pub fn encode_mcp_example(example: &McpExample, tokenizer: &dyn Tokenizer, max_len: usize) -> ChoiceSet {
    let sequences = example
        .candidates()
        .iter()
        .map(|a| {
            let mut ids = tokenizer.tokenize(a.text(), a.language()).token_ids;
            if ids.len() > max_len {
                let last = *ids.last().expect("boundary tokens present");
                ids.truncate(max_len - 1);
                ids.push(last);
            }
            ids
        })
        .collect();
    ChoiceSet {
        id: example.example_id().to_string(),
        language: example.truth().language().clone(),
        sequences,
        label: Some(example.label()),
    }
}

pub fn choice_scores(encoder: &dyn Encoder, head: &McpHead, set: &ChoiceSet) -> Vec<f64> {
    set.sequences.iter().map(|s| head.logit(&encoder.pooled(s))).collect()
}

pub fn predict(encoder: &dyn Encoder, head: &McpHead, set: &ChoiceSet) -> usize {
    argmax(&choice_scores(encoder, head, set))
}

/// Fraction of labelled sets predicted correctly; `None` when no set carries a label.
pub fn accuracy(encoder: &dyn Encoder, head: &McpHead, sets: &[ChoiceSet]) -> Option<f64> {
    let hits: Vec<bool> = sets
        .par_iter()
        .filter_map(|s| s.label.map(|l| predict(encoder, head, s) == l))
        .collect();
    if hits.is_empty() {
        None
    } else {
        Some(hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    /// Mean training loss since the previous entry; absent for the initial evaluation.
    pub loss: Option<f64>,
    pub dev_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<LogEntry>,
    pub steps: usize,
    pub best_step: usize,
    pub best_dev_acc: Option<f64>,
    pub clamped_losses: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            **p -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Trains `encoder` and `head` on `train`, evaluating on `dev` at step 0, every
/// `eval_interval` steps and at the end. The best-on-dev state is restored on return.
///
/// `guard` is called on every training set right before it is consumed.
/// A non-finite loss or parameter aborts with [`Error::Diverged`], leaving the last finite
/// state in `encoder` and `head`.
pub fn train(
    encoder: &mut dyn TrainableEncoder,
    head: &mut McpHead,
    train: &[ChoiceSet],
    dev: &[ChoiceSet],
    cfg: &TrainingConfig,
    guard: &dyn Fn(&ChoiceSet) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    head.check_width(encoder.width())?;
    if let Some(bad) = train.iter().find(|s| s.label.is_none()) {
        return Err(Error::validation(&bad.id, "training example has no label"));
    }
    let total = cfg.total_steps(train.len());
    let n_enc = encoder.parameters().len();
    let n_head = head.width() + 1;
    let mut adam = Adam::new(n_enc + n_head);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut log = vec![LogEntry {
        step: 0,
        loss: None,
        dev_acc: accuracy(encoder, head, dev),
    }];
    let mut best_dev = log[0].dev_acc;
    let mut best_step = 0;
    let mut best_state = (encoder.parameters().to_vec(), head.clone());
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let mut clamped = 0usize;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if step >= total {
                break 'epochs;
            }
            step += 1;
            let mut g_enc = vec![0.0; n_enc];
            let mut g_head = vec![0.0; n_head];
            let mut batch_loss = 0.0;
            for &i in batch {
                let set = &train[i];
                guard(set)?;
                let pooled: Vec<Vec<f64>> = set.sequences.iter().map(|s| encoder.pooled(s)).collect();
                let g = head_gradient(head, &pooled, set.label.expect("checked above"));
                batch_loss += g.loss.value;
                clamped += g.loss.clamped as usize;
                for (acc, x) in g_head.iter_mut().zip(g.w.iter().chain(std::iter::once(&g.b))) {
                    *acc += x;
                }
                for (seq, gh) in set.sequences.iter().zip(&g.pooled) {
                    encoder.accumulate_grad(seq, gh, &mut g_enc);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mean_loss = batch_loss * scale;
            if !mean_loss.is_finite() {
                return Err(Error::Diverged { step, loss: mean_loss });
            }
            loss_sum += mean_loss;
            loss_n += 1;

            let lr = cfg.lr_at(step, total);
            if lr > 0.0 {
                let snapshot = (encoder.parameters().to_vec(), head.clone());
                let grad: Vec<f64> = g_enc.iter().chain(&g_head).map(|g| g * scale).collect();
                {
                    let (hw, hb) = (&mut head.w, &mut head.b);
                    let mut params: Vec<&mut f64> = encoder
                        .parameters_mut()
                        .iter_mut()
                        .chain(hw.iter_mut())
                        .chain(std::iter::once(hb))
                        .collect();
                    match cfg.optimizer {
                        Optimizer::Adam => adam.step(&mut params, &grad, lr),
                        Optimizer::Sgd => {
                            for (p, g) in params.iter_mut().zip(&grad) {
                                **p -= lr * g;
                            }
                        }
                    }
                }
                if !all_finite(encoder.parameters()) || !all_finite(&head.w) || !head.b.is_finite() {
                    encoder.parameters_mut().copy_from_slice(&snapshot.0);
                    *head = snapshot.1;
                    return Err(Error::Diverged { step, loss: f64::NAN });
                }
            }

            if step % cfg.eval_interval == 0 || step == total {
                let dev_acc = accuracy(encoder, head, dev);
                log.push(LogEntry {
                    step,
                    loss: Some(loss_sum / loss_n.max(1) as f64),
                    dev_acc,
                });
                loss_sum = 0.0;
                loss_n = 0;
                tracing::debug!(step, ?dev_acc, "evaluation");
                let improved = match (dev_acc, best_dev) {
                    (Some(a), Some(b)) => a > b,
                    (Some(_), None) => true,
                    (None, _) => dev.is_empty(),
                };
                if improved {
                    best_dev = dev_acc;
                    best_step = step;
                    best_state = (encoder.parameters().to_vec(), head.clone());
                }
            }
        }
    }
    encoder.parameters_mut().copy_from_slice(&best_state.0);
    *head = best_state.1;
    Ok(TrainOutcome {
        log,
        steps: step,
        best_step,
        best_dev_acc: best_dev,
        clamped_losses: clamped,
    })
}

pub fn write_log_csv(path: &Path, log: &[LogEntry]) -> Result<()> {
    let mut out = String::from("step,loss,dev_acc\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for e in log {
        out.push_str(&format!("{},{},{}\n", e.step, opt(e.loss), opt(e.dev_acc)));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Serialized encoder parameters plus head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub encoder: String,
    pub vocab_size: usize,
    pub width: usize,
    pub parameters: Vec<f64>,
    pub head: McpHead,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_tuned_table() {
        let c = TrainingConfig::preset(Backbone::XlmRLarge, Task::Xcsqa);
        assert_eq!((c.learning_rate, c.epochs, c.warmup_steps, c.batch_size), (6e-6, 10, 100, 64));
        assert_eq!("mcp-xlm-r-l".parse::<Backbone>().unwrap(), Backbone::XlmRLarge);
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let c = TrainingConfig {
            learning_rate: 1.0,
            warmup_steps: 10,
            ..TrainingConfig::default()
        };
        assert!((c.lr_at(5, 110) - 0.5).abs() < 1e-12);
        assert!((c.lr_at(10, 110) - 1.0).abs() < 1e-12);
        assert!((c.lr_at(60, 110) - 0.5).abs() < 1e-12);
        assert_eq!(c.lr_at(110, 110), 0.0);
    }
}
