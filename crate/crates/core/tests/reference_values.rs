//! Published reference numbers that the implementation's conventions must reproduce.

use std::collections::BTreeMap;

use mickey_core::data::{corpus_stats, LanguageCode};
use mickey_core::mcp::{Backbone, Optimizer, Task, TrainingConfig};
use mickey_core::report::{MetricRow, ValueFormat, PROBE_LANGUAGE_ORDER, TRANSFER_LANGUAGE_ORDER};
use mickey_core::xcsr::{transfer_report, ItemPrediction};

fn langs(order: &[&str]) -> Vec<LanguageCode> {
    order.iter().map(|l| LanguageCode::new(l).unwrap()).collect()
}

/// Predictions reproducing `acc_pct` exactly on 1000 graded items per language.
fn predictions_for(order: &[&str], acc_pct: &[f64]) -> Vec<ItemPrediction> {
    let mut out = Vec::new();
    for (l, a) in langs(order).into_iter().zip(acc_pct) {
        let correct = (a * 10.0).round() as usize;
        for i in 0..1000 {
            out.push(ItemPrediction {
                item_id: format!("{l}-{i}"),
                language: l.clone(),
                scores: vec![0.0; 5],
                predicted: if i < correct { 0 } else { 1 },
                answer: Some(0),
                category: None,
            });
        }
    }
    out
}

// Sixteen languages followed by the published avg.
const XCSQA_ROWS: [(&str, [f64; 17]); 8] = [
    ("mBERT", [38.8, 29.6, 36.4, 35.3, 33.8, 32.6, 32.7, 22.2, 37.8, 21.1, 27.2, 27.7, 31.4, 34.1, 21.8, 23.7, 30.4]),
    ("XLM-100", [34.3, 26.7, 28.5, 29.3, 28.3, 27.2, 29.9, 21.1, 28.6, 22.1, 26.6, 26.3, 25.1, 30.9, 20.1, 21.7, 26.7]),
    ("XLM-R-B", [51.5, 44.1, 42.1, 44.8, 44.0, 43.3, 39.5, 42.6, 40.6, 34.6, 40.2, 38.4, 37.5, 43.4, 29.6, 33.0, 40.6]),
    ("XLM-R-L", [66.7, 56.1, 58.2, 59.5, 60.3, 56.8, 52.1, 51.4, 52.7, 48.7, 53.9, 48.4, 50.0, 59.9, 41.6, 45.2, 53.8]),
    ("MCP(XLM-R-B)", [52.1, 46.2, 45.6, 44.3, 44.7, 45.3, 42.8, 45.3, 44.3, 36.8, 41.4, 36.8, 37.5, 44.9, 28.1, 33.4, 41.9]),
    ("MCP(XLM-R-L)", [69.5, 59.3, 60.3, 61.4, 60.0, 61.1, 57.5, 55.7, 56.7, 51.3, 56.1, 52.3, 50.2, 60.7, 43.3, 48.8, 56.5]),
    ("X-CODAH XLM-R-L", [66.4, 59.6, 59.9, 60.9, 60.1, 59.3, 56.3, 57.4, 57.3, 49.1, 57.5, 51.2, 53.8, 58.2, 42.2, 46.6, 56.0]),
    ("X-CODAH MCP(XLM-R-L)", [69.9, 60.7, 61.9, 60.7, 61.4, 60.7, 58.6, 62.3, 61.9, 53.7, 59.0, 54.1, 54.7, 60.8, 44.6, 48.0, 58.3]),
];

#[test]
fn transfer_avg_includes_english() {
    let mut en_excluded_mismatch = 0;
    for (name, row) in XCSQA_ROWS {
        let (accs, published) = (&row[..16], row[16]);
        let report = transfer_report(name, "xcsqa", &langs(&TRANSFER_LANGUAGE_ORDER), predictions_for(&TRANSFER_LANGUAGE_ORDER, accs));
        assert!(report.absent.is_empty());
        // Each cell and the avg are rounded to 0.1 separately: at most 0.05 of error from each.
        let avg = report.avg * 100.0;
        assert!((avg - published).abs() <= 0.1 + 1e-9, "{name}: avg {avg:.3} vs {published}");
        let without_en = accs[1..].iter().sum::<f64>() / 15.0;
        if (without_en - published).abs() > 0.1 {
            en_excluded_mismatch += 1;
        }
    }
    assert!(en_excluded_mismatch > 0, "rows do not discriminate between the two conventions");
}

#[test]
fn transfer_delta_row_matches_published_delta() {
    let base = transfer_report("XLM-R-L", "xcsqa", &langs(&TRANSFER_LANGUAGE_ORDER), predictions_for(&TRANSFER_LANGUAGE_ORDER, &XCSQA_ROWS[3].1[..16]));
    let mcp = transfer_report("MCP(XLM-R-L)", "xcsqa", &langs(&TRANSFER_LANGUAGE_ORDER), predictions_for(&TRANSFER_LANGUAGE_ORDER, &XCSQA_ROWS[5].1[..16]))
        .with_baseline(&base);
    let published = [2.8, 3.3, 2.2, 1.9, -0.4, 4.3, 5.4, 4.3, 4.0, 2.6, 2.1, 3.9, 0.2, 0.8, 1.7, 3.6];
    let delta = mcp.delta.as_ref().unwrap();
    for (l, want) in langs(&TRANSFER_LANGUAGE_ORDER).iter().zip(published) {
        // Cells are rounded (0.05 each) and the published delta is rounded too (0.05).
        assert!((delta[l] * 100.0 - want).abs() <= 0.15 + 1e-9, "{l}: {} vs {want}", delta[l] * 100.0);
    }
    assert!((mcp.delta_avg.unwrap() * 100.0 - 2.7).abs() <= 0.1 + 1e-9);
    assert!(mcp.table().render_text().contains("Δ(XLM-R-L)"));
}

#[test]
fn probe_table_means_include_english() {
    let shortest = [23.17, 27.21, 29.93, 31.00, 35.84, 31.68, 18.55, 22.01, 15.46, 25.07, 20.66];
    let xlmr_b = [89.69, 58.94, 53.45, 60.88, 49.12, 59.99, 45.74, 45.26, 41.65, 51.02, 40.73];
    for (values, published) in [(shortest, 25.51), (xlmr_b, 54.22)] {
        let map: BTreeMap<LanguageCode, f64> = langs(&PROBE_LANGUAGE_ORDER).into_iter().zip(values).collect();
        let row = MetricRow::averaged("row", map, ValueFormat::Raw);
        assert!((row.avg - published).abs() <= 0.005 + 1e-9, "{} vs {published}", row.avg);
    }
}

#[test]
fn corpus_total_sentences() {
    let s = corpus_stats(10_200, 5, 11);
    assert_eq!(s.sentences, 561_000);
}

#[test]
fn presets_match_tuned_hyperparameters() {
    let table = [
        (Backbone::Mbert, Task::Xcodah, 3e-5, 20, 100, 128),
        (Backbone::Mbert, Task::Xcsqa, 3e-5, 30, 100, 64),
        (Backbone::Xlm100, Task::Xcodah, 1e-5, 20, 100, 64),
        (Backbone::Xlm100, Task::Xcsqa, 1e-5, 20, 300, 64),
        (Backbone::XlmRBase, Task::Xcodah, 1e-5, 20, 100, 128),
        (Backbone::XlmRBase, Task::Xcsqa, 1e-5, 30, 100, 144),
        (Backbone::XlmRLarge, Task::Xcodah, 6e-6, 10, 100, 64),
        (Backbone::XlmRLarge, Task::Xcsqa, 6e-6, 10, 100, 64),
    ];
    for (b, t, lr, epochs, warmup, batch) in table {
        let c = TrainingConfig::preset(b, t);
        assert_eq!((c.learning_rate, c.epochs, c.warmup_steps, c.batch_size), (lr, epochs, warmup, batch), "{b:?} {t:?}");
        assert_eq!(c.eval_interval, 100);
        assert_eq!(c.seed, 42);
        assert_eq!(c.optimizer, Optimizer::Adam);
    }
    assert_eq!(Task::Xcsqa.max_seq_len(), 64);
    assert_eq!(Task::Xcodah.max_seq_len(), 100);
    assert_eq!(Task::Xcsqa.num_options(), 5);
    assert_eq!(Task::Xcodah.num_options(), 4);
}

#[test]
fn option_zero_predictor_on_balanced_labels_is_chance() {
    let en = LanguageCode::english();
    let preds: Vec<ItemPrediction> = (0..1000)
        .map(|i| ItemPrediction {
            item_id: i.to_string(),
            language: en.clone(),
            scores: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            predicted: 0,
            answer: Some(i % 5),
            category: None,
        })
        .collect();
    let r = transfer_report("first", "xcsqa", &[en.clone()], preds);
    assert!((r.accuracy[&en] - 0.20).abs() < 1e-12);
}
