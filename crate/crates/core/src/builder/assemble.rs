use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::{pos_filter, FilterStats};
use super::masking::{decode_distractor, plan_masks, DistractorCandidate, RankWindow};
use super::tagger::Tagger;
use crate::backend::MaskedLm;
use crate::data::{Assertion, LanguageCode, MickeyCorpus, MickeyProbe};
use crate::error::{Error, Result};
use crate::tokenize::stable_hash;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssembleConfig {
    pub k: usize,
    /// Number of fresh mask sets tried per truth.
    pub max_rounds: usize,
    /// Distractors decoded from each mask set before filtering.
    pub candidates_per_round: usize,
    pub window: RankWindow,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            k: 5,
            max_rounds: 8,
            candidates_per_round: 16,
            window: RankWindow::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoEligibleWords,
    TooFewDistractors,
    TaggerFailure,
}

#[derive(Debug, Clone)]
pub enum AssembleOutcome {
    Probe {
        probe: MickeyProbe,
        distractors: Vec<DistractorCandidate>,
        stats: FilterStats,
    },
    Skipped {
        reason: SkipReason,
        detail: String,
        stats: FilterStats,
    },
}

/// Builds one English probe from a truth assertion, or reports why it was skipped.
pub fn assemble_probe<R: Rng + ?Sized>(
    probe_id: &str,
    truth: &Assertion,
    backend: &dyn MaskedLm,
    tagger: &dyn Tagger,
    rng: &mut R,
    cfg: &AssembleConfig,
) -> Result<AssembleOutcome> {
    if cfg.k < 2 {
        return Err(Error::Config(format!("K must be at least 2, got {}", cfg.k)));
    }
    let needed = cfg.k - 1;
    let mut stats = FilterStats::default();
    let mut pool: Vec<DistractorCandidate> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();

    for _ in 0..cfg.max_rounds {
        let plan = match plan_masks(truth, tagger, rng) {
            Ok(Some(plan)) => plan,
            Ok(None) => {
                return Ok(AssembleOutcome::Skipped {
                    reason: SkipReason::NoEligibleWords,
                    detail: "no noun, verb or adjective to mask".into(),
                    stats,
                })
            }
            Err(e) => {
                return Ok(AssembleOutcome::Skipped {
                    reason: SkipReason::TaggerFailure,
                    detail: e.to_string(),
                    stats,
                })
            }
        };
        let decoded = (0..cfg.candidates_per_round)
            .map(|_| decode_distractor(&plan, backend, rng, cfg.window))
            .collect::<Result<Vec<_>>>()?;
        let filtered = match pos_filter(truth, &decoded, tagger) {
            Ok(f) => f,
            Err(e) => {
                return Ok(AssembleOutcome::Skipped {
                    reason: SkipReason::TaggerFailure,
                    detail: e.to_string(),
                    stats,
                })
            }
        };
        stats.identical += filtered.stats.identical;
        stats.tag_mismatch += filtered.stats.tag_mismatch;
        stats.tagger_failures += filtered.stats.tagger_failures;
        for c in filtered.kept {
            if seen.insert(c.text.clone()) {
                pool.push(c);
            }
        }
        if pool.len() >= needed {
            break;
        }
    }

    if pool.len() < needed {
        return Ok(AssembleOutcome::Skipped {
            reason: SkipReason::TooFewDistractors,
            detail: format!("{} distinct distractors after {} rounds, need {needed}", pool.len(), cfg.max_rounds),
            stats,
        });
    }

    let chosen: Vec<DistractorCandidate> = sample(rng, pool.len(), needed)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    let truth_index = rng.gen_range(0..cfg.k);
    let mut seq: Vec<Assertion> = chosen
        .iter()
        .map(|c| Assertion::new(&c.text, truth.language().clone()))
        .collect::<Result<_>>()?;
    seq.insert(truth_index, truth.clone());
    let mut candidates = BTreeMap::new();
    candidates.insert(truth.language().clone(), seq);
    Ok(AssembleOutcome::Probe {
        probe: MickeyProbe::new(probe_id, truth_index, candidates)?,
        distractors: chosen,
        stats,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub truths: usize,
    pub probes: usize,
    pub skipped: BTreeMap<SkipReason, usize>,
    pub skipped_ids: Vec<(String, SkipReason, String)>,
    pub filter: FilterStats,
}

/// Independent generator for item `index` under `seed`.
pub fn sub_rng(seed: u64, stream: &str, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(&[
        &seed.to_le_bytes(),
        stream.as_bytes(),
        &(index as u64).to_le_bytes(),
    ]))
}

pub fn probe_id_for(index: usize) -> String {
    format!("p{index:06}")
}

/// Assembles an English corpus from truth sentences. Each truth uses its own seeded
/// generator, so the output does not depend on scheduling.
pub fn build_english_corpus(
    truths: &[String],
    backend: &dyn MaskedLm,
    tagger: &dyn Tagger,
    seed: u64,
    cfg: &AssembleConfig,
) -> Result<(MickeyCorpus, BuildDiagnostics)> {
    let en = LanguageCode::english();
    let run = |(i, text): (usize, &String)| -> Result<(String, AssembleOutcome)> {
        let id = probe_id_for(i);
        let truth = Assertion::new(text, en.clone())?;
        let mut rng = sub_rng(seed, "assemble", i);
        let outcome = assemble_probe(&id, &truth, backend, tagger, &mut rng, cfg)?;
        Ok((id, outcome))
    };
    let outcomes: Vec<(String, AssembleOutcome)> = if backend.concurrency_safe() {
        truths.par_iter().enumerate().map(run).collect::<Result<_>>()?
    } else {
        truths.iter().enumerate().map(run).collect::<Result<_>>()?
    };

    let mut diag = BuildDiagnostics {
        truths: truths.len(),
        ..Default::default()
    };
    let mut probes = Vec::new();
    for (id, outcome) in outcomes {
        let stats = match outcome {
            AssembleOutcome::Probe { probe, stats, .. } => {
                probes.push(probe);
                stats
            }
            AssembleOutcome::Skipped {
                reason,
                detail,
                stats,
            } => {
                tracing::info!(probe = %id, ?reason, "skipped: {detail}");
                *diag.skipped.entry(reason.clone()).or_default() += 1;
                diag.skipped_ids.push((id, reason, detail));
                stats
            }
        };
        diag.filter.identical += stats.identical;
        diag.filter.tag_mismatch += stats.tag_mismatch;
        diag.filter.tagger_failures += stats.tagger_failures;
    }
    diag.probes = probes.len();
    Ok((MickeyCorpus::new(probes)?, diag))
}
