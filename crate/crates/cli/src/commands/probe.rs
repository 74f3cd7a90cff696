use mickey_core::builder::{language_quality, QualityRecord};
use mickey_core::data::jsonl::read_records;
use mickey_core::data::{load_probes, LanguageCode};
use mickey_core::probe::{baseline_report, evaluate_mickey, TieMode};
use mickey_core::report::bar_chart_svg;
use mickey_core::scoring::PllScorer;

use crate::config::{required, BackendArgs, ProbeArgs, StatsArgs};
use crate::failure::Failure;
use crate::registry;
use crate::run::RunDir;

fn parse_ks(list: Option<&str>) -> Result<Vec<usize>, Failure> {
    let ks = list
        .unwrap_or("1")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Failure::Usage(format!("invalid k `{s}` in --ks"))))
        .collect::<Result<Vec<_>, _>>()?;
    if ks.is_empty() {
        return Err(Failure::Usage("--ks is empty".into()));
    }
    Ok(ks)
}

fn parse_ties(s: Option<&str>, seed: u64) -> Result<TieMode, Failure> {
    match s.unwrap_or("pessimistic") {
        "pessimistic" => Ok(TieMode::Pessimistic),
        "optimistic" => Ok(TieMode::Optimistic),
        "random" => Ok(TieMode::Random { seed }),
        other => Err(Failure::Usage(format!("unknown tie mode `{other}`"))),
    }
}

pub fn probe(args: &ProbeArgs, backend: &BackendArgs, seed: u64, run: &mut RunDir) -> Result<(), Failure> {
    let path = required(&args.corpus, "corpus")?;
    run.record_input(&path)?;
    let corpus = load_probes(&path)?;
    let ks = parse_ks(args.ks.as_deref())?;
    let mode = parse_ties(args.ties.as_deref(), args.seed.unwrap_or(seed))?;
    let references: Vec<String> = corpus
        .probes()
        .iter()
        .flat_map(|p| p.candidates().values().map(move |seq| seq[p.truth_index()].text().to_string()))
        .collect();
    let lm = registry::masked_lm(backend, &references, seed)?;
    let scorer = PllScorer::new(lm.as_ref());
    let mut report = evaluate_mickey(&corpus, &scorer, lm.id(), &ks, mode)?;
    if args.shortest.unwrap_or(false) {
        report.shortest = Some(baseline_report(&corpus, lm.tokenizer())?);
    }
    if let Some(q) = &args.quality {
        run.record_input(q)?;
        let records: Vec<QualityRecord> = read_records(q)?.into_iter().map(|(_, r)| r).collect();
        let mut cos = language_quality(&records);
        cos.insert(LanguageCode::english(), 1.0);
        cos.retain(|l, _| corpus.languages().contains(l));
        report.bt_cosine = Some(cos);
    }
    if report.has_failures() {
        tracing::warn!(failures = report.failures.len(), "some probes could not be scored");
    }
    run.write_json("report.json", &report)?;
    run.write_text("report.txt", &report.table().render_text())?;
    for k in &ks {
        run.write_text(&format!("hit{k}.svg"), &bar_chart_svg(&format!("{} hit@{k}", report.model), &report.bars(*k)))?;
    }
    print!("{}", report.table().render_text());
    Ok(())
}

pub fn stats(args: &StatsArgs, run: &mut RunDir) -> Result<(), Failure> {
    let path = required(&args.corpus, "corpus")?;
    run.record_input(&path)?;
    let corpus = load_probes(&path)?;
    let stats = corpus.stats();
    run.write_json("stats.json", &stats)?;
    println!("{}", serde_json::to_string(&stats).unwrap_or_default());
    Ok(())
}
