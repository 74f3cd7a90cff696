//! Zero-shot cross-lingual multiple-choice fine-tuning and evaluation.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Encoder, TrainableEncoder};
use crate::data::{LanguageCode, McqItem};
use crate::error::{Error, Result};
use crate::mcp::{argmax, choice_scores, train, ChoiceSet, LogEntry, McpHead, TrainOutcome, TrainingConfig};
use crate::report::{
    box_plot_svg, column_order, mean, BoxSummary, MetricRow, MetricTable, ValueFormat,
    TRANSFER_LANGUAGE_ORDER,
};
use crate::tokenize::{EncodedPair, Tokenizer};

/// Category assigned to items that carry none.
pub const FALLBACK_CATEGORY: &str = "Others";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedChoice {
    pub item_id: String,
    pub option_index: usize,
    pub pair: EncodedPair,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeFlags {
    pub empty_options: Vec<usize>,
    pub truncated_options: Vec<usize>,
}

/// One `[CLS] prompt [SEP] option [SEP]` sequence per option, in option order.
pub fn encode_item(
    item: &McqItem,
    tokenizer: &dyn Tokenizer,
    max_len: usize,
) -> Result<(Vec<EncodedChoice>, EncodeFlags)> {
    let mut flags = EncodeFlags::default();
    let mut out = Vec::with_capacity(item.options.len());
    for (i, option) in item.options.iter().enumerate() {
        if option.trim().is_empty() {
            tracing::debug!(item = %item.item_id, option = i, "empty option");
            flags.empty_options.push(i);
        }
        let pair = tokenizer
            .encode_pair(&item.prompt, option, &item.language, max_len)
            .map_err(|e| Error::validation(&item.item_id, e.to_string()))?;
        if pair.token_ids.len() > max_len {
            return Err(Error::validation(
                &item.item_id,
                format!("encoded length {} exceeds {max_len}", pair.token_ids.len()),
            ));
        }
        if pair.truncated {
            flags.truncated_options.push(i);
        }
        out.push(EncodedChoice {
            item_id: item.item_id.clone(),
            option_index: i,
            pair,
        });
    }
    Ok((out, flags))
}

pub fn item_choice_set(item: &McqItem, tokenizer: &dyn Tokenizer, max_len: usize) -> Result<ChoiceSet> {
    let (choices, _) = encode_item(item, tokenizer, max_len)?;
    Ok(ChoiceSet {
        id: item.item_id.clone(),
        language: item.language.clone(),
        sequences: choices.into_iter().map(|c| c.pair.token_ids).collect(),
        label: item.answer_index,
    })
}

/// `(step, dev accuracy)` points with strictly increasing steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn from_log(log: &[LogEntry]) -> Self {
        let mut points: Vec<(usize, f64)> = Vec::new();
        for e in log {
            if let Some(acc) = e.dev_acc {
                if points.last().map_or(true, |(s, _)| e.step > *s) {
                    points.push((e.step, acc));
                }
            }
        }
        LearningCurve { points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub training: TrainOutcome,
    pub curve: LearningCurve,
    pub encode_flags: BTreeMap<String, EncodeFlags>,
}

/// Fine-tunes on English items only. `aux_train` items (e.g. extra English scene-completion
/// data) are appended to the training set. Dev selection uses the English dev items.
pub fn finetune(
    train_items: &[McqItem],
    aux_train: &[McqItem],
    dev_items: &[McqItem],
    encoder: &mut dyn TrainableEncoder,
    head: &mut McpHead,
    cfg: &TrainingConfig,
) -> Result<FinetuneOutcome> {
    let all_train: Vec<&McqItem> = train_items.iter().chain(aux_train).collect();
    if let Some(bad) = all_train.iter().find(|i| !i.language.is_english()) {
        return Err(Error::Protocol(format!(
            "training item `{}` is in `{}`; only English items may be used for training",
            bad.item_id, bad.language
        )));
    }
    let mut encode_flags = BTreeMap::new();
    let mut train_sets = Vec::with_capacity(all_train.len());
    for item in &all_train {
        let (choices, flags) = encode_item(item, encoder.tokenizer(), cfg.max_seq_len)?;
        if !flags.empty_options.is_empty() || !flags.truncated_options.is_empty() {
            encode_flags.insert(item.item_id.clone(), flags);
        }
        train_sets.push(ChoiceSet {
            id: item.item_id.clone(),
            language: item.language.clone(),
            sequences: choices.into_iter().map(|c| c.pair.token_ids).collect(),
            label: item.answer_index,
        });
    }
    let dev_sets = dev_items
        .iter()
        .filter(|i| i.language.is_english())
        .map(|i| item_choice_set(i, encoder.tokenizer(), cfg.max_seq_len))
        .collect::<Result<Vec<_>>>()?;
    let guard = |s: &ChoiceSet| -> Result<()> {
        if s.language.is_english() {
            Ok(())
        } else {
            Err(Error::Protocol(format!("training loop received `{}` item `{}`", s.language, s.id)))
        }
    };
    let training = train(encoder, head, &train_sets, &dev_sets, cfg, &guard)?;
    let curve = LearningCurve::from_log(&training.log);
    Ok(FinetuneOutcome {
        training,
        curve,
        encode_flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPrediction {
    pub item_id: String,
    pub language: LanguageCode,
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub answer: Option<usize>,
    pub category: Option<String>,
}

impl ItemPrediction {
    pub fn correct(&self) -> Option<bool> {
        self.answer.map(|a| a == self.predicted)
    }
}

/// Scores and predicts every item; ties go to the lowest option index.
pub fn predict_items(
    encoder: &dyn Encoder,
    head: &McpHead,
    items: &[McqItem],
    max_len: usize,
) -> Result<Vec<ItemPrediction>> {
    head.check_width(encoder.width())?;
    items
        .par_iter()
        .map(|item| {
            let set = item_choice_set(item, encoder.tokenizer(), max_len)?;
            let scores = choice_scores(encoder, head, &set);
            Ok(ItemPrediction {
                item_id: item.item_id.clone(),
                language: item.language.clone(),
                predicted: argmax(&scores),
                scores,
                answer: item.answer_index,
                category: item.category.clone(),
            })
        })
        .collect()
}

fn graded_accuracy<'a>(preds: impl IntoIterator<Item = &'a ItemPrediction>) -> Option<(f64, usize)> {
    let graded: Vec<bool> = preds.into_iter().filter_map(|p| p.correct()).collect();
    if graded.is_empty() {
        None
    } else {
        Some((graded.iter().filter(|c| **c).count() as f64 / graded.len() as f64, graded.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub model: String,
    pub task: String,
    pub accuracy: BTreeMap<LanguageCode, f64>,
    /// Mean over every evaluated language, English included.
    pub avg: f64,
    pub graded_items: BTreeMap<LanguageCode, usize>,
    /// Declared languages with no test data or no graded item.
    pub absent: Vec<LanguageCode>,
    pub delta: Option<BTreeMap<LanguageCode, f64>>,
    pub delta_avg: Option<f64>,
    pub baseline_model: Option<String>,
    pub predictions: Vec<ItemPrediction>,
}

/// Builds the report from stored predictions.
pub fn transfer_report(
    model: &str,
    task: &str,
    declared: &[LanguageCode],
    predictions: Vec<ItemPrediction>,
) -> TransferReport {
    let mut accuracy = BTreeMap::new();
    let mut graded_items = BTreeMap::new();
    let mut absent = Vec::new();
    for lang in declared {
        match graded_accuracy(predictions.iter().filter(|p| &p.language == lang)) {
            Some((acc, n)) => {
                accuracy.insert(lang.clone(), acc);
                graded_items.insert(lang.clone(), n);
            }
            None => absent.push(lang.clone()),
        }
    }
    if !absent.is_empty() {
        tracing::warn!(?absent, "languages without graded test data are excluded from avg");
    }
    TransferReport {
        model: model.to_string(),
        task: task.to_string(),
        avg: mean(accuracy.values().copied()),
        accuracy,
        graded_items,
        absent,
        delta: None,
        delta_avg: None,
        baseline_model: None,
        predictions,
    }
}

/// Predicts every test set and reports accuracy per declared language.
pub fn evaluate_transfer(
    model: &str,
    task: &str,
    encoder: &dyn Encoder,
    head: &McpHead,
    test_sets: &BTreeMap<LanguageCode, Vec<McqItem>>,
    declared: &[LanguageCode],
    max_len: usize,
) -> Result<TransferReport> {
    let mut predictions = Vec::new();
    for lang in declared {
        if let Some(items) = test_sets.get(lang) {
            if let Some(bad) = items.iter().find(|i| &i.language != lang) {
                return Err(Error::validation(
                    &bad.item_id,
                    format!("item language `{}` in the `{lang}` test set", bad.language),
                ));
            }
            predictions.extend(predict_items(encoder, head, items, max_len)?);
        }
    }
    Ok(transfer_report(model, task, declared, predictions))
}

impl TransferReport {
    /// Adds the per-language difference to `baseline`, over languages both reports cover.
    pub fn with_baseline(mut self, baseline: &TransferReport) -> Self {
        let delta: BTreeMap<LanguageCode, f64> = self
            .accuracy
            .iter()
            .filter_map(|(l, a)| baseline.accuracy.get(l).map(|b| (l.clone(), a - b)))
            .collect();
        self.delta_avg = Some(self.avg - baseline.avg);
        self.delta = Some(delta);
        self.baseline_model = Some(baseline.model.clone());
        self
    }

    pub fn table(&self) -> MetricTable {
        let mut langs: BTreeSet<LanguageCode> = self.accuracy.keys().cloned().collect();
        langs.extend(self.absent.iter().cloned());
        let mut rows = vec![MetricRow {
            name: self.model.clone(),
            values: self.accuracy.clone(),
            avg: self.avg,
            format: ValueFormat::Percent,
        }];
        if let (Some(d), Some(avg)) = (&self.delta, self.delta_avg) {
            rows.push(MetricRow {
                name: format!("Δ({})", self.baseline_model.as_deref().unwrap_or("baseline")),
                values: d.clone(),
                avg,
                format: ValueFormat::DeltaPercent,
            });
        }
        MetricTable {
            title: format!("{} \\ L", self.task),
            columns: column_order(&langs, &TRANSFER_LANGUAGE_ORDER),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    /// `accuracy[category][language]`
    pub accuracy: BTreeMap<String, BTreeMap<LanguageCode, f64>>,
    /// Spread of each category's accuracy across languages.
    pub summaries: BTreeMap<String, BoxSummary>,
    /// Population variance across languages.
    pub variance: BTreeMap<String, f64>,
}

/// Accuracy per (category, language). Items without a category count as "Others".
pub fn category_report(predictions: &[ItemPrediction]) -> CategoryReport {
    let mut groups: BTreeMap<String, BTreeMap<LanguageCode, Vec<&ItemPrediction>>> = BTreeMap::new();
    for p in predictions {
        let cat = p.category.clone().unwrap_or_else(|| FALLBACK_CATEGORY.to_string());
        groups.entry(cat).or_default().entry(p.language.clone()).or_default().push(p);
    }
    let mut accuracy = BTreeMap::new();
    let mut summaries = BTreeMap::new();
    let mut variance = BTreeMap::new();
    for (cat, by_lang) in groups {
        let accs: BTreeMap<LanguageCode, f64> = by_lang
            .into_iter()
            .filter_map(|(l, ps)| graded_accuracy(ps).map(|(a, _)| (l, a)))
            .collect();
        if accs.is_empty() {
            continue;
        }
        let values: Vec<f64> = accs.values().copied().collect();
        let m = mean(values.iter().copied());
        variance.insert(cat.clone(), mean(values.iter().map(|v| (v - m) * (v - m))));
        if let Some(s) = BoxSummary::from_values(&values) {
            summaries.insert(cat.clone(), s);
        }
        accuracy.insert(cat, accs);
    }
    CategoryReport {
        accuracy,
        summaries,
        variance,
    }
}

impl CategoryReport {
    pub fn table(&self) -> MetricTable {
        let langs: BTreeSet<LanguageCode> = self.accuracy.values().flat_map(|m| m.keys().cloned()).collect();
        MetricTable {
            title: "category \\ L".to_string(),
            columns: column_order(&langs, &TRANSFER_LANGUAGE_ORDER),
            rows: self
                .accuracy
                .iter()
                .map(|(c, v)| MetricRow::averaged(c.clone(), v.clone(), ValueFormat::Percent))
                .collect(),
        }
    }

    pub fn box_plot(&self, title: &str) -> String {
        let boxes: Vec<(String, BoxSummary)> = self.summaries.iter().map(|(c, s)| (c.clone(), *s)).collect();
        box_plot_svg(title, &boxes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::WordTokenizer;

    fn item(id: &str, lang: &str, answer: usize, n: usize) -> McqItem {
        McqItem::new(
            id,
            "where do birds live",
            (0..n).map(|i| format!("opt {i}")).collect(),
            Some(answer),
            LanguageCode::new(lang).unwrap(),
            None,
        )
        .unwrap()
    }

    fn pred(lang: &str, predicted: usize, answer: usize, cat: Option<&str>) -> ItemPrediction {
        ItemPrediction {
            item_id: "i".into(),
            language: LanguageCode::new(lang).unwrap(),
            scores: vec![],
            predicted,
            answer: Some(answer),
            category: cat.map(String::from),
        }
    }

    #[test]
    fn encodes_one_pair_per_option_and_flags_empty() {
        let tok = WordTokenizer::from_texts(["where do birds live opt 0 1 2 3 4"], 0);
        let mut it = item("q1", "en", 0, 5);
        it.options[3] = String::new();
        let (choices, flags) = encode_item(&it, &tok, 64).unwrap();
        assert_eq!(choices.len(), 5);
        assert_eq!(flags.empty_options, vec![3]);
        assert_eq!(choices[3].pair.option_len, 0);
    }

    #[test]
    fn always_zero_on_balanced_labels_is_one_fifth() {
        let preds: Vec<ItemPrediction> = (0..100).map(|i| pred("en", 0, i % 5, None)).collect();
        let r = transfer_report("m", "xcsqa", &[LanguageCode::english()], preds);
        assert!((r.accuracy[&LanguageCode::english()] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn absent_language_is_flagged_and_excluded() {
        let preds = vec![pred("en", 1, 1, None), pred("de", 0, 1, None)];
        let langs: Vec<LanguageCode> = ["en", "de", "fr"].iter().map(|l| LanguageCode::new(l).unwrap()).collect();
        let r = transfer_report("m", "xcsqa", &langs, preds);
        assert_eq!(r.absent, vec![LanguageCode::new("fr").unwrap()]);
        assert!((r.avg - 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_english_training_item_is_a_protocol_error() {
        let mut enc = crate::backend::BowEncoder::new(50, 4, 0).unwrap();
        let mut head = McpHead::zeros(4);
        let err = finetune(&[item("d1", "de", 0, 4)], &[], &[], &mut enc, &mut head, &TrainingConfig::default());
        assert!(matches!(err, Err(Error::Protocol(_))));
    }

    #[test]
    fn missing_category_groups_under_others() {
        let r = category_report(&[pred("en", 0, 0, None), pred("en", 0, 1, Some("Negation"))]);
        assert_eq!(r.accuracy["Others"][&LanguageCode::english()], 1.0);
        assert_eq!(r.accuracy["Negation"][&LanguageCode::english()], 0.0);
    }
}
