//! Capability contracts for masked language models and sentence encoders, with the in-process
//! mock/toy implementations and an HTTP adapter for externally hosted models.

mod bow;
mod mock;
mod remote;

pub use bow::BowEncoder;
pub use mock::{LexiconLm, TableLm, UniformLm};
pub use remote::{RemoteLm, RemoteTokenizer};

use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

/// A masked language model usable for pseudo-log-likelihood scoring and mask filling.
pub trait MaskedLm: Send + Sync {
    fn id(&self) -> &str;

    fn tokenizer(&self) -> &dyn Tokenizer;

    fn vocab_size(&self) -> usize {
        self.tokenizer().vocab_size()
    }

    /// Log-probabilities over the whole vocabulary for the token at `masked_position`.
    /// `token_ids[masked_position]` holds the mask id.
    fn masked_logprobs(&self, token_ids: &[u32], masked_position: usize) -> Result<Vec<f64>>;

    /// Log-probability of `target` at `masked_position`. Adapters may override this to avoid
    /// shipping a full vocabulary vector; the result must equal the corresponding entry of
    /// [`MaskedLm::masked_logprobs`].
    fn token_logprob(&self, token_ids: &[u32], masked_position: usize, target: u32) -> Result<f64> {
        let lp = self.masked_logprobs(token_ids, masked_position)?;
        lp.get(target as usize).copied().ok_or_else(|| {
            Error::Backend(format!(
                "token id {target} outside vocabulary of size {}",
                lp.len()
            ))
        })
    }

    /// Whether concurrent read-only calls are allowed.
    fn concurrency_safe(&self) -> bool {
        true
    }
}

/// Produces a fixed-width pooled representation of a token sequence.
pub trait Encoder: Send + Sync {
    fn id(&self) -> &str;

    fn tokenizer(&self) -> &dyn Tokenizer;

    fn width(&self) -> usize;

    fn pooled(&self, token_ids: &[u32]) -> Vec<f64>;
}

/// An encoder whose parameters can be updated by gradient descent.
pub trait TrainableEncoder: Encoder {
    fn parameters(&self) -> &[f64];

    fn parameters_mut(&mut self) -> &mut [f64];

    /// Adds `d loss / d params` for one sequence into `grad`, given `d loss / d pooled`.
    fn accumulate_grad(&self, token_ids: &[u32], grad_pooled: &[f64], grad: &mut [f64]);
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
