use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use mickey_core::backend::{BowEncoder, LexiconLm, MaskedLm, TrainableEncoder};
use mickey_core::builder::{
    assemble_multilingual, build_english_corpus, culture_filter, decode_distractor, plan_masks,
    rank_tokens, translate_corpus, AssembleConfig, CorpusTranslation, GateScope, HashTagger,
    IdentityTranslator, KeywordList, ProviderError, QualityRecord, RankWindow, RetryPolicy, Segment,
    TranslateConfig, TranslatorClient,
};
use mickey_core::data::{
    load_mcq, load_probes, save_mcq, save_probes, Assertion, LanguageCode, McqItem, MickeyCorpus, MickeyProbe,
};
use mickey_core::mcp::{argmax, softmax, train, ChoiceSet, McpHead, TrainingConfig};
use mickey_core::probe::{rank_of_truth, TieMode};
use mickey_core::tokenize::{split_words, MASK_ID};
use mickey_core::{toy, Error};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn lang(code: &str) -> LanguageCode {
    LanguageCode::new(code).unwrap()
}

fn chi_square_p(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-zé]{1,8}", 1..6).prop_map(|w| w.join(" "))
}

fn corpus_strategy() -> impl Strategy<Value = MickeyCorpus> {
    (1usize..6, 2usize..5, 1usize..4).prop_flat_map(|(t, k, l)| {
        let codes = ["en", "de", "fr", "zh"][..l].to_vec();
        prop::collection::vec((0..k, prop::collection::vec(sentence(), k * l)), t).prop_map(move |probes| {
            let probes = probes
                .into_iter()
                .enumerate()
                .map(|(i, (truth, texts))| {
                    let cands = codes
                        .iter()
                        .enumerate()
                        .map(|(li, c)| {
                            let seq = texts[li * k..(li + 1) * k].iter().map(|t| Assertion::new(t, lang(c)).unwrap()).collect();
                            (lang(c), seq)
                        })
                        .collect();
                    MickeyProbe::new(format!("p{i}"), truth, cands).unwrap()
                })
                .collect();
            MickeyCorpus::new(probes).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn probe_file_round_trip_is_lossless(corpus in corpus_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        save_probes(&corpus, &a).unwrap();
        let loaded = load_probes(&a).unwrap();
        prop_assert_eq!(&loaded, &corpus);
        save_probes(&loaded, &b).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn sentence_count_matches_enumeration(corpus in corpus_strategy()) {
        let counted: usize = corpus.probes().iter().map(|p| p.candidates().values().map(Vec::len).sum::<usize>()).sum();
        prop_assert_eq!(corpus.stats().sentences, counted);
    }

    #[test]
    fn mcq_file_round_trip_is_lossless(
        prompt in sentence(),
        options in prop::collection::vec(sentence(), 4),
        answer in prop::option::of(0usize..4),
        category in prop::option::of("[A-Z][a-z]{2,6}"),
    ) {
        let item = McqItem::new("q1", &prompt, options, answer, lang("de"), category).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        save_mcq(std::slice::from_ref(&item), &p).unwrap();
        prop_assert_eq!(load_mcq(&p, 4).unwrap(), vec![item]);
    }

    #[test]
    fn softmax_is_shift_invariant(logits in prop::collection::vec(-30.0f64..30.0, 2..8), c in -100.0f64..100.0) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_and_argmax_depend_only_on_score_order(
        scores in prop::collection::vec(-5i32..5, 2..8),
        scale in 0.1f64..10.0,
        offset in -50.0f64..50.0,
        truth_seed in 0usize..100,
    ) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let t: Vec<f64> = s.iter().map(|x| scale * x + offset).collect();
        let truth = truth_seed % s.len();
        for mode in [TieMode::Pessimistic, TieMode::Optimistic, TieMode::Random { seed: 3 }] {
            prop_assert_eq!(rank_of_truth(&s, truth, mode, "k"), rank_of_truth(&t, truth, mode, "k"));
        }
        prop_assert_eq!(argmax(&s), argmax(&t));
        let pess = rank_of_truth(&s, truth, TieMode::Pessimistic, "k");
        let opt = rank_of_truth(&s, truth, TieMode::Optimistic, "k");
        let rnd = rank_of_truth(&s, truth, TieMode::Random { seed: 9 }, "k");
        prop_assert!(opt <= rnd && rnd <= pess);
    }

    #[test]
    fn gate_survivors_shrink_as_threshold_rises(seed in 0u64..1000, lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let (en, tr, records) = gate_inputs(seed);
        let langs: Vec<LanguageCode> = ["en", "de", "fr"].iter().map(|c| lang(c)).collect();
        for scope in [GateScope::AllCandidates, GateScope::TruthOnly] {
            let ids = |th: f64| -> BTreeSet<String> {
                let (c, _) = assemble_multilingual(&en, &tr, &records, &langs, th, scope).unwrap();
                c.probes().iter().map(|p| p.probe_id().to_string()).collect()
            };
            prop_assert!(ids(hi).is_subset(&ids(lo)));
        }
        let all = assemble_multilingual(&en, &tr, &records, &langs, lo, GateScope::AllCandidates).unwrap().0;
        let truth = assemble_multilingual(&en, &tr, &records, &langs, lo, GateScope::TruthOnly).unwrap().0;
        prop_assert!(all.len() <= truth.len());
    }

    #[test]
    fn decoded_tokens_come_from_the_rank_window(seed in 0u64..500, lo in 1usize..40, width in 0usize..10) {
        let text = toy::truths(1, seed).remove(0);
        let lm = LexiconLm::new([text.as_str()], std::iter::empty(), 60);
        let window = RankWindow::new(lo, lo + width).unwrap();
        let truth = Assertion::new(&text, LanguageCode::english()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plan = plan_masks(&truth, &AllNouns, &mut rng).unwrap().unwrap();
        let cand = decode_distractor(&plan, &lm, &mut rng, window).unwrap();
        let mut ids = lm.tokenizer().tokenize(&plan.masked_text(), &LanguageCode::english()).token_ids;
        let positions: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == MASK_ID).collect();
        for (pos, step) in positions.into_iter().zip(&cand.decode_trace) {
            let lp = lm.masked_logprobs(&ids, pos).unwrap();
            let mut order: Vec<u32> = (5..60).collect();
            order.sort_by(|a, b| lp[*b as usize].partial_cmp(&lp[*a as usize]).unwrap().then(a.cmp(b)));
            let reachable: BTreeSet<u32> = order[lo - 1..lo + width].iter().copied().collect();
            prop_assert!(reachable.contains(&step.token_id));
            prop_assert_eq!(order[step.rank - 1], step.token_id);
            ids[pos] = step.token_id;
        }
    }

    #[test]
    fn culture_filter_matches_word_scan(
        texts in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["Tea", "tea", "teapot", "rice", "Wedding", "bird", "fly", "tea."]), 1..6), 1..20),
        keywords in prop::collection::vec(prop::sample::select(vec!["tea", "wedding", "rice"]), 0..3),
    ) {
        let items: Vec<Assertion> = texts.iter().map(|w| Assertion::new(&w.join(" "), LanguageCode::english()).unwrap()).collect();
        let list = KeywordList::new(&keywords).unwrap();
        let (kept, log) = culture_filter(&items, &list, None).unwrap();
        let oracle: Vec<Assertion> = items
            .iter()
            .filter(|a| {
                !a.text()
                    .split(|c: char| !c.is_alphanumeric())
                    .any(|w| keywords.iter().any(|k| w.eq_ignore_ascii_case(k)))
            })
            .cloned()
            .collect();
        prop_assert_eq!(log.len(), items.len() - oracle.len());
        prop_assert_eq!(kept, oracle);
    }
}

struct AllNouns;

impl mickey_core::builder::Tagger for AllNouns {
    fn tag(&self, text: &str, _language: &LanguageCode) -> mickey_core::Result<Vec<mickey_core::builder::TaggedWord>> {
        Ok(split_words(text)
            .into_iter()
            .map(|w| mickey_core::builder::TaggedWord {
                surface: w,
                pos: "NOUN".into(),
                features: BTreeMap::new(),
            })
            .collect())
    }
}

fn gate_inputs(seed: u64) -> (MickeyCorpus, CorpusTranslation, Vec<QualityRecord>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 3;
    let probes: Vec<MickeyProbe> = (0..30)
        .map(|i| {
            let seq = (0..k).map(|j| Assertion::new(&format!("s {i} {j}"), LanguageCode::english()).unwrap()).collect();
            MickeyProbe::new(format!("p{i}"), rng.gen_range(0..k), [(LanguageCode::english(), seq)].into()).unwrap()
        })
        .collect();
    let en = MickeyCorpus::new(probes).unwrap();
    let mut tr = CorpusTranslation::default();
    let mut records = Vec::new();
    for l in ["de", "fr"] {
        let mut fwd = BTreeMap::new();
        for p in en.probes() {
            fwd.insert(p.probe_id().to_string(), (0..k).map(|j| format!("{l} {} {j}", p.probe_id())).collect::<Vec<_>>());
            records.push(QualityRecord {
                probe_id: p.probe_id().to_string(),
                language: lang(l),
                cosines: (0..k).map(|_| rng.gen_range(0.0..1.0)).collect(),
                truth_index: p.truth_index(),
            });
        }
        tr.forward.insert(lang(l), fwd.clone());
        tr.back.insert(lang(l), fwd);
    }
    (en, tr, records)
}

/// Returns segments in a shuffled order; alignment must restore them by id.
struct Shuffling;

impl TranslatorClient for Shuffling {
    fn provider_id(&self) -> &str {
        "shuffling"
    }

    fn translate(&self, batch: &[Segment], _s: &LanguageCode, _t: &LanguageCode) -> Result<Vec<Segment>, ProviderError> {
        let mut out: Vec<Segment> = batch.to_vec();
        out.reverse();
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(batch.len() as u64));
        Ok(out)
    }
}

/// Silently loses the last segment of every batch.
struct Dropping;

impl TranslatorClient for Dropping {
    fn provider_id(&self) -> &str {
        "dropping"
    }

    fn translate(&self, batch: &[Segment], _s: &LanguageCode, _t: &LanguageCode) -> Result<Vec<Segment>, ProviderError> {
        Ok(batch[..batch.len() - 1].to_vec())
    }
}

/// Fails transiently on the first `fail_first` calls.
struct Flaky {
    fail_first: usize,
    calls: AtomicUsize,
}

impl TranslatorClient for Flaky {
    fn provider_id(&self) -> &str {
        "flaky"
    }

    fn translate(&self, batch: &[Segment], _s: &LanguageCode, _t: &LanguageCode) -> Result<Vec<Segment>, ProviderError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.fail_first {
            return Err(ProviderError::Transient("busy".into()));
        }
        Ok(batch.to_vec())
    }
}

fn toy_english_corpus(n: usize, seed: u64) -> MickeyCorpus {
    let truths = toy::truths(n, seed);
    let lm = LexiconLm::new(truths.iter().map(String::as_str), std::iter::empty(), 420);
    build_english_corpus(&truths, &lm, &HashTagger, seed, &AssembleConfig { k: 4, ..Default::default() })
        .unwrap()
        .0
}

fn quick_cfg() -> TranslateConfig {
    TranslateConfig {
        batch_size: 5,
        workers: 3,
        retry: RetryPolicy::no_backoff(3),
        ..Default::default()
    }
}

#[test]
fn shuffled_responses_are_realigned_by_id() {
    let corpus = toy_english_corpus(12, 1);
    let targets = [lang("de")];
    let a = translate_corpus(&corpus, &targets, &IdentityTranslator, &quick_cfg()).unwrap();
    let b = translate_corpus(&corpus, &targets, &Shuffling, &quick_cfg()).unwrap();
    assert_eq!(a.forward, b.forward);
    assert_eq!(a.back, b.back);
    assert!(b.failed.is_empty());
}

#[test]
fn dropped_segments_are_an_alignment_error() {
    let corpus = toy_english_corpus(4, 2);
    let err = translate_corpus(&corpus, &[lang("de")], &Dropping, &quick_cfg()).unwrap_err();
    assert!(matches!(err, Error::Provider(_)), "{err}");
}

#[test]
fn transient_failures_are_retried() {
    let corpus = toy_english_corpus(4, 3);
    let cfg = TranslateConfig { workers: 1, ..quick_cfg() };
    let flaky = Flaky { fail_first: 2, calls: AtomicUsize::new(0) };
    let out = translate_corpus(&corpus, &[lang("de")], &flaky, &cfg).unwrap();
    assert!(out.failed.is_empty());
    assert_eq!(out.forward[&lang("de")].len(), corpus.len());
}

#[test]
fn exhausted_retries_mark_items_failed() {
    let corpus = toy_english_corpus(4, 3);
    let cfg = TranslateConfig { workers: 1, ..quick_cfg() };
    let flaky = Flaky { fail_first: usize::MAX, calls: AtomicUsize::new(0) };
    let out = translate_corpus(&corpus, &[lang("de")], &flaky, &cfg).unwrap();
    assert_eq!(out.failed.len(), corpus.len());
}

#[test]
fn journal_resume_skips_completed_segments() {
    let corpus = toy_english_corpus(8, 4);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TranslateConfig {
        journal: Some(dir.path().join("journal.jsonl")),
        ..quick_cfg()
    };
    let first = translate_corpus(&corpus, &[lang("de")], &IdentityTranslator, &cfg).unwrap();
    assert!(first.provider_calls > 0);
    let second = translate_corpus(&corpus, &[lang("de")], &IdentityTranslator, &cfg).unwrap();
    assert_eq!(second.provider_calls, 0);
    assert_eq!(first.forward, second.forward);
}

#[test]
fn corpus_build_is_deterministic_for_a_seed() {
    assert_eq!(toy_english_corpus(15, 5), toy_english_corpus(15, 5));
    assert_ne!(toy_english_corpus(15, 5), toy_english_corpus(15, 6));
}

#[test]
fn truth_index_is_uniform() {
    let corpus = toy_english_corpus(400, 8);
    let mut counts = vec![0usize; corpus.k()];
    for p in corpus.probes() {
        counts[p.truth_index()] += 1;
    }
    let p = chi_square_p(&counts);
    assert!(p > 0.001, "counts {counts:?}, p = {p}");
}

#[test]
fn mask_count_is_uniform_over_one_to_three() {
    let truth = Assertion::new("alpha beta gamma delta epsilon", LanguageCode::english()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut counts = [0usize; 3];
    let mut positions = [0usize; 5];
    for _ in 0..6000 {
        let plan = plan_masks(&truth, &AllNouns, &mut rng).unwrap().unwrap();
        counts[plan.masked_word_positions.len() - 1] += 1;
        for &i in &plan.masked_word_positions {
            positions[i] += 1;
        }
    }
    assert!(chi_square_p(&counts) > 0.001, "{counts:?}");
    assert!(chi_square_p(&positions) > 0.001, "{positions:?}");
}

#[test]
fn top_one_window_is_greedy_decoding() {
    let lm = LexiconLm::new(["one two three four five"], std::iter::empty(), 80);
    let truth = Assertion::new("one two three four five", LanguageCode::english()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let plan = plan_masks(&truth, &AllNouns, &mut rng).unwrap().unwrap();
        let cand = decode_distractor(&plan, &lm, &mut rng, RankWindow::new(1, 1).unwrap()).unwrap();
        let mut ids = lm.tokenizer().tokenize(&plan.masked_text(), &LanguageCode::english()).token_ids;
        let positions: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] == MASK_ID).collect();
        for (pos, step) in positions.into_iter().zip(&cand.decode_trace) {
            let lp = lm.masked_logprobs(&ids, pos).unwrap();
            let best = (5..lp.len()).max_by(|&a, &b| lp[a].partial_cmp(&lp[b]).unwrap().then(b.cmp(&a))).unwrap() as u32;
            assert_eq!(step.token_id, best);
            assert_eq!(rank_tokens(&lp, &[0, 1, 2, 3, 4])[0], best);
            ids[pos] = best;
        }
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let mut enc = BowEncoder::new(64, 4, 1).unwrap();
    let mut head = McpHead::random(4, 2);
    let sets: Vec<ChoiceSet> = (0..6)
        .map(|i| ChoiceSet {
            id: format!("s{i}"),
            language: LanguageCode::english(),
            sequences: vec![vec![1, 5 + i, 2], vec![1, 20 + i, 2]],
            label: Some(0),
        })
        .collect();
    let before = (enc.parameters().to_vec(), head.clone());
    let cfg = TrainingConfig {
        learning_rate: 0.0,
        batch_size: 2,
        epochs: 3,
        eval_interval: 2,
        ..TrainingConfig::default()
    };
    let out = train(&mut enc, &mut head, &sets, &sets, &cfg, &|_| Ok(())).unwrap();
    assert!(out.steps > 0);
    assert_eq!(enc.parameters(), &before.0[..]);
    assert_eq!(head, before.1);
}
