use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::embed::{cosine, EmbeddingBackend};
use super::gate::{GateScope, QualityRecord};
use super::translate::{run_stage, Journal, Segment, TranslateConfig, TranslatorClient};
use crate::data::{LanguageCode, McqItem};
use crate::error::{Error, Result};

/// Translated multiple-choice items per language, after the round-trip gate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct McqTranslation {
    pub items: BTreeMap<LanguageCode, Vec<McqItem>>,
    pub records: Vec<QualityRecord>,
    pub dropped: BTreeMap<LanguageCode, Vec<String>>,
    pub provider_calls: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McqGate {
    pub threshold: f64,
    pub scope: GateScope,
}

fn item_segments(item: &McqItem) -> Vec<Segment> {
    let mut out = vec![Segment {
        id: format!("{}#q", item.item_id),
        text: item.prompt.clone(),
    }];
    out.extend(item.options.iter().enumerate().map(|(i, o)| Segment {
        id: format!("{}#o{i}", item.item_id),
        text: o.clone(),
    }));
    out
}

/// Translates English items into each target language. An item is kept in a language when the
/// prompt and every option clear the gate. Answer indices and categories carry over unchanged.
pub fn translate_mcq(
    items: &[McqItem],
    targets: &[LanguageCode],
    client: &dyn TranslatorClient,
    embedder: &dyn EmbeddingBackend,
    cfg: &TranslateConfig,
    gate: McqGate,
) -> Result<McqTranslation> {
    let en = LanguageCode::english();
    if let Some(bad) = items.iter().find(|i| !i.language.is_english()) {
        return Err(Error::validation(&bad.item_id, "only English items can be translated"));
    }
    let journal = cfg.journal.as_deref().map(Journal::open).transpose()?;
    let calls = AtomicUsize::new(0);
    let source: Vec<Segment> = items.iter().flat_map(item_segments).collect();
    let originals: BTreeMap<&str, &str> = source.iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();

    let mut out = McqTranslation::default();
    for target in targets.iter().filter(|t| **t != en) {
        let fwd = run_stage(&format!("mcq-forward:{target}"), &source, &en, target, client, cfg, journal.as_ref(), &calls)?;
        let back_in: Vec<Segment> = source
            .iter()
            .filter_map(|s| fwd.outputs.get(&s.id).map(|t| Segment { id: s.id.clone(), text: t.clone() }))
            .collect();
        let back = run_stage(&format!("mcq-back:{target}"), &back_in, target, &en, client, cfg, journal.as_ref(), &calls)?;

        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for item in items {
            let segs = item_segments(item);
            let texts: Option<Vec<(String, String)>> = segs
                .iter()
                .map(|s| Some((fwd.outputs.get(&s.id)?.clone(), back.outputs.get(&s.id)?.clone())))
                .collect();
            let Some(texts) = texts else {
                dropped.push(item.item_id.clone());
                continue;
            };
            let orig: Vec<String> = segs.iter().map(|s| originals[s.id.as_str()].to_string()).collect();
            let bt: Vec<String> = texts.iter().map(|(_, b)| b.clone()).collect();
            let a = embedder.embed(&orig)?;
            let b = embedder.embed(&bt)?;
            let record = QualityRecord {
                probe_id: item.item_id.clone(),
                language: target.clone(),
                cosines: a.iter().zip(&b).map(|(x, y)| cosine(x, y)).collect(),
                truth_index: 0,
            };
            if record.passes(gate.threshold, gate.scope) {
                kept.push(McqItem::new(
                    item.item_id.clone(),
                    &texts[0].0,
                    texts[1..].iter().map(|(f, _)| f.clone()).collect(),
                    item.answer_index,
                    target.clone(),
                    item.category.clone(),
                )?);
            } else {
                dropped.push(item.item_id.clone());
            }
            out.records.push(record);
        }
        out.items.insert(target.clone(), kept);
        out.dropped.insert(target.clone(), dropped);
    }
    out.provider_calls = calls.load(Ordering::SeqCst);
    Ok(out)
}
