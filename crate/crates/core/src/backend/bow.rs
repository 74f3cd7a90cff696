use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Encoder, TrainableEncoder};
use crate::error::{Error, Result};
use crate::tokenize::{HashTokenizer, Tokenizer, PAD_ID};

/// Toy trainable encoder: `tanh(mean of token embeddings)`.
///
/// Sequences carry no distinguished first-position state, so pooling is the mean over all
/// non-padding positions including the boundary tokens.
#[derive(Debug, Clone)]
pub struct BowEncoder {
    tokenizer: HashTokenizer,
    width: usize,
    embeddings: Vec<f64>,
}

impl BowEncoder {
    pub fn new(vocab_size: usize, width: usize, seed: u64) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("encoder width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = (0..vocab_size * width)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect();
        Ok(BowEncoder {
            tokenizer: HashTokenizer::new(vocab_size)?,
            width,
            embeddings,
        })
    }

    pub fn from_parameters(vocab_size: usize, width: usize, parameters: Vec<f64>) -> Result<Self> {
        if parameters.len() != vocab_size * width {
            return Err(Error::Config(format!(
                "expected {} encoder parameters, found {}",
                vocab_size * width,
                parameters.len()
            )));
        }
        Ok(BowEncoder {
            tokenizer: HashTokenizer::new(vocab_size)?,
            width,
            embeddings: parameters,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokenizer.vocab_size()
    }

    fn mean(&self, token_ids: &[u32]) -> (Vec<f64>, usize) {
        let mut acc = vec![0.0; self.width];
        let mut n = 0usize;
        for &t in token_ids.iter().filter(|&&t| t != PAD_ID) {
            let row = &self.embeddings[t as usize * self.width..(t as usize + 1) * self.width];
            for (a, e) in acc.iter_mut().zip(row) {
                *a += e;
            }
            n += 1;
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        (acc, n)
    }
}

impl Encoder for BowEncoder {
    fn id(&self) -> &str {
        "toy-bow"
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &self.tokenizer
    }

    fn width(&self) -> usize {
        self.width
    }

    fn pooled(&self, token_ids: &[u32]) -> Vec<f64> {
        self.mean(token_ids).0.into_iter().map(f64::tanh).collect()
    }
}

impl TrainableEncoder for BowEncoder {
    fn parameters(&self) -> &[f64] {
        &self.embeddings
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.embeddings
    }

    fn accumulate_grad(&self, token_ids: &[u32], grad_pooled: &[f64], grad: &mut [f64]) {
        let (mean, n) = self.mean(token_ids);
        if n == 0 {
            return;
        }
        let grad_mean: Vec<f64> = mean
            .iter()
            .zip(grad_pooled)
            .map(|(m, g)| {
                let h = m.tanh();
                g * (1.0 - h * h) / n as f64
            })
            .collect();
        for &t in token_ids.iter().filter(|&&t| t != PAD_ID) {
            let row = &mut grad[t as usize * self.width..(t as usize + 1) * self.width];
            for (r, g) in row.iter_mut().zip(&grad_mean) {
                *r += g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let enc = BowEncoder::new(20, 3, 5).unwrap();
        let ids = [1u32, 7, 9, 7, 2];
        let upstream = [0.3, -1.2, 0.7];
        // loss = upstream . pooled
        let loss = |e: &BowEncoder| -> f64 {
            e.pooled(&ids).iter().zip(&upstream).map(|(h, u)| h * u).sum()
        };
        let mut grad = vec![0.0; enc.parameters().len()];
        enc.accumulate_grad(&ids, &upstream, &mut grad);
        let eps = 1e-6;
        for idx in [7 * 3, 7 * 3 + 2, 9 * 3 + 1, 1 * 3, 4 * 3] {
            let mut plus = enc.clone();
            plus.parameters_mut()[idx] += eps;
            let mut minus = enc.clone();
            minus.parameters_mut()[idx] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            assert!((fd - grad[idx]).abs() < 1e-8, "param {idx}: fd {fd} vs {}", grad[idx]);
        }
    }
}
