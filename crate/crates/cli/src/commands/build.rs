use mickey_core::builder::{
    assemble_multilingual, build_english_corpus, culture_filter, language_quality, quality_records, select_languages,
    translate_corpus, AssembleConfig, GateScope, KeywordList, RankWindow, RetryPolicy, TranslateConfig,
    PROBE_GATE_THRESHOLD,
};
use mickey_core::data::jsonl::write_records;
use mickey_core::data::{save_probes, Assertion, LanguageCode};
use serde_json::json;

use super::{languages, read_text};
use crate::config::{required, BackendArgs, BuildArgs};
use crate::failure::Failure;
use crate::registry;
use crate::run::RunDir;

pub const JOURNAL: &str = "journal.jsonl";

fn parse_scope(s: Option<&str>) -> Result<GateScope, Failure> {
    match s.unwrap_or("all") {
        "all" => Ok(GateScope::AllCandidates),
        "truth" => Ok(GateScope::TruthOnly),
        other => Err(Failure::Usage(format!("unknown gate scope `{other}` (all or truth)"))),
    }
}

pub fn build(args: &BuildArgs, backend: &BackendArgs, seed: u64, run: &mut RunDir) -> Result<(), Failure> {
    let en = LanguageCode::english();
    let truths_path = required(&args.truths, "truths")?;
    run.record_input(&truths_path)?;
    let mut truths: Vec<String> = read_text(&truths_path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    if truths.is_empty() {
        return Err(Failure::Usage(format!("{} holds no truth sentences", truths_path.display())));
    }
    if let Some(path) = &args.keywords {
        run.record_input(path)?;
        let list = KeywordList::from_file(path)?;
        let items = truths
            .iter()
            .map(|t| Assertion::new(t, en.clone()))
            .collect::<mickey_core::Result<Vec<_>>>()?;
        let (kept, removed) = culture_filter(&items, &list, None)?;
        run.write_json("culture_removals.json", &removed)?;
        truths = kept.iter().map(|a| a.text().to_string()).collect();
    }

    let lm = registry::masked_lm(backend, &truths, seed)?;
    let tagger = registry::tagger(args.tagger.as_deref(), args.tagger_path.as_ref(), args.tagger_url.as_deref(), backend)?;
    let defaults = AssembleConfig::default();
    let window = RankWindow::new(
        args.rank_lo.unwrap_or(defaults.window.lo),
        args.rank_hi.unwrap_or(defaults.window.hi),
    )?;
    let assemble = AssembleConfig {
        k: args.k.unwrap_or(defaults.k),
        max_rounds: args.max_rounds.unwrap_or(defaults.max_rounds),
        candidates_per_round: args.candidates_per_round.unwrap_or(defaults.candidates_per_round),
        window,
    };
    let (english, diagnostics) = build_english_corpus(&truths, lm.as_ref(), tagger.as_ref(), seed, &assemble)?;
    save_probes(&english, &run.path("probes_en.jsonl"))?;
    run.add_artifact("probes_en.jsonl");
    run.write_json("diagnostics.json", &diagnostics)?;
    tracing::info!(truths = truths.len(), probes = english.len(), skipped = ?diagnostics.skipped, "English corpus built");

    let targets: Vec<LanguageCode> = languages(args.languages.as_deref())?.into_iter().filter(|l| *l != en).collect();
    if targets.is_empty() {
        save_probes(&english, &run.path("probes.jsonl"))?;
        run.add_artifact("probes.jsonl");
        return run.write_json("summary.json", &json!({"truths": truths.len(), "probes": english.len(), "languages": ["en"]}));
    }

    let client = registry::translator(
        args.translator.as_deref(),
        args.translator_endpoint.as_deref(),
        args.api_key_env.as_deref(),
        backend,
    )?;
    let tdefaults = TranslateConfig::default();
    let tcfg = TranslateConfig {
        batch_size: args.batch_size.unwrap_or(tdefaults.batch_size),
        workers: args.workers.unwrap_or(tdefaults.workers),
        min_interval_ms: args.min_interval_ms.unwrap_or(tdefaults.min_interval_ms),
        retry: RetryPolicy {
            max_attempts: args.max_attempts.unwrap_or(tdefaults.retry.max_attempts),
            ..tdefaults.retry
        },
        journal: Some(run.path(JOURNAL)),
    };
    run.add_artifact(JOURNAL);
    let translation = translate_corpus(&english, &targets, client.as_ref(), &tcfg)?;
    run.write_json("translations.json", &translation)?;

    let embedder = registry::embedder(args.embedder.as_deref(), args.embedder_url.as_deref(), backend)?;
    let records = quality_records(&english, &translation, embedder.as_ref())?;
    write_records(&run.path("quality.jsonl"), &records)?;
    run.add_artifact("quality.jsonl");
    let quality = language_quality(&records);
    let selected = match args.select_top {
        Some(n) => select_languages(&quality, n),
        None => targets.clone(),
    };
    let mut all = vec![en];
    all.extend(selected);
    let threshold = args.gate_threshold.unwrap_or(PROBE_GATE_THRESHOLD);
    let (corpus, gate) = assemble_multilingual(&english, &translation, &records, &all, threshold, parse_scope(args.gate_scope.as_deref())?)?;
    save_probes(&corpus, &run.path("probes.jsonl"))?;
    run.add_artifact("probes.jsonl");
    run.write_json("gate_report.json", &gate)?;
    tracing::info!(kept = corpus.len(), dropped = gate.dropped.len(), "multilingual corpus gated");
    run.write_json(
        "summary.json",
        &json!({
            "truths": truths.len(),
            "english_probes": english.len(),
            "probes": corpus.len(),
            "languages": all,
            "mean_cosine": quality,
            "failed_translations": translation.failed.len(),
            "provider_calls": translation.provider_calls,
        }),
    )
}
