use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{log_softmax, Encoder};
use crate::data::McpExample;
use crate::error::{Error, Result};

/// Smallest probability the loss will take a logarithm of.
pub const PROB_FLOOR: f64 = 1e-12;

/// Linear plausibility head: `o = w . h + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl McpHead {
    pub fn zeros(width: usize) -> Self {
        McpHead {
            w: vec![0.0; width],
            b: 0.0,
        }
    }

    pub fn random(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (width.max(1) as f64).sqrt();
        McpHead {
            w: (0..width).map(|_| rng.gen_range(-scale..scale)).collect(),
            b: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.w.len()
    }

    pub fn logit(&self, h: &[f64]) -> f64 {
        self.w.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    pub fn check_width(&self, width: usize) -> Result<()> {
        if self.w.len() != width {
            return Err(Error::Config(format!(
                "head width {} does not match pooled width {width}",
                self.w.len()
            )));
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub value: f64,
    /// Set when the label probability fell below [`PROB_FLOOR`].
    pub clamped: bool,
}

/// Cross-entropy of a probability vector against a single label.
pub fn mcp_loss(z: &[f64], label: usize) -> Loss {
    let p = z[label];
    if p < PROB_FLOOR {
        tracing::warn!("label probability {p:e} clamped to {PROB_FLOOR:e}");
        Loss {
            value: -PROB_FLOOR.ln(),
            clamped: true,
        }
    } else {
        Loss {
            value: (-p.ln()).max(0.0),
            clamped: false,
        }
    }
}

/// Plausibility distribution over the candidates of one example.
pub fn mcp_forward(example: &McpExample, encoder: &dyn Encoder, head: &McpHead) -> Result<Vec<f64>> {
    head.check_width(encoder.width())?;
    let tok = encoder.tokenizer();
    let logits: Vec<f64> = example
        .candidates()
        .iter()
        .map(|a| head.logit(&encoder.pooled(&tok.tokenize(a.text(), a.language()).token_ids)))
        .collect();
    Ok(softmax(&logits))
}

/// Gradients of the loss for one choice set with respect to the head and the pooled inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub loss: Loss,
    pub w: Vec<f64>,
    pub b: f64,
    /// `d loss / d h_i` for every candidate.
    pub pooled: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

/// Loss and analytic gradients given the pooled representations of the candidates.
pub fn head_gradient(head: &McpHead, pooled: &[Vec<f64>], label: usize) -> HeadGradient {
    let logits: Vec<f64> = pooled.iter().map(|h| head.logit(h)).collect();
    let z = softmax(&logits);
    let loss = mcp_loss(&z, label);
    let mut gw = vec![0.0; head.width()];
    let mut gb = 0.0;
    let mut gh = Vec::with_capacity(pooled.len());
    for (i, h) in pooled.iter().enumerate() {
        let d = z[i] - if i == label { 1.0 } else { 0.0 };
        gb += d;
        for (g, x) in gw.iter_mut().zip(h) {
            *g += d * x;
        }
        gh.push(head.w.iter().map(|w| d * w).collect());
    }
    HeadGradient {
        loss,
        w: gw,
        b: gb,
        pooled: gh,
        probabilities: z,
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_two_zero_zero_zero() {
        let z = softmax(&[2.0, 0.0, 0.0, 0.0]);
        let e2 = 2f64.exp();
        assert!((z[0] - e2 / (e2 + 3.0)).abs() < 1e-12);
        assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_edges() {
        assert!((mcp_loss(&[0.25; 4], 1).value - 4f64.ln()).abs() < 1e-12);
        assert_eq!(mcp_loss(&[1.0, 0.0], 0).value, 0.0);
        let l = mcp_loss(&[1.0, 0.0], 1);
        assert!(l.clamped);
        assert!((l.value - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 4]), 0);
    }
}
