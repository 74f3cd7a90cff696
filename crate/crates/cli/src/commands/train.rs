use std::collections::BTreeMap;
use std::path::Path;

use mickey_core::backend::{BowEncoder, Encoder, TrainableEncoder};
use mickey_core::data::{load_mcp, load_mcq, save_mcp, LanguageCode, McqItem};
use mickey_core::mcp::{
    accuracy, build_mcp_dataset, encode_mcp_example, train, write_log_csv, Checkpoint, ConversionConfig, McpHead, Task,
    TrainingConfig,
};
use mickey_core::xcsr::{category_report, evaluate_transfer, finetune as run_finetune, TransferReport};
use serde_json::json;

use super::{languages, parse_task, read_text, training_config};
use crate::config::{required, ConvertArgs, EvalArgs, FinetuneArgs, McpTrainArgs};
use crate::failure::Failure;
use crate::registry::{self, TOY_ENCODER};
use crate::run::RunDir;

const CHECKPOINT: &str = "checkpoint.json";
const DEFAULT_ENCODER_VOCAB: usize = 4096;
const DEFAULT_WIDTH: usize = 32;

pub fn mcp_convert(args: &ConvertArgs, seed: u64, run: &mut RunDir) -> Result<(), Failure> {
    let path = required(&args.corpus, "corpus")?;
    run.record_input(&path)?;
    let corpus = mickey_core::data::load_probes(&path)?;
    let cfg = ConversionConfig {
        v: args.v.unwrap_or(ConversionConfig::default().v),
        seed: args.seed.unwrap_or(seed),
        multiplier: args.multiplier.unwrap_or(1),
    };
    let examples = build_mcp_dataset(&corpus, &cfg)?;
    save_mcp(&examples, &run.path("examples.jsonl"))?;
    run.add_artifact("examples.jsonl");
    run.write_json("summary.json", &json!({"probes": corpus.len(), "examples": examples.len(), "v": cfg.v}))
}

fn head_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

fn save_checkpoint(run: &mut RunDir, encoder: &BowEncoder, head: &McpHead) -> Result<(), Failure> {
    Checkpoint {
        encoder: TOY_ENCODER.to_string(),
        vocab_size: encoder.vocab_size(),
        width: encoder.width(),
        parameters: encoder.parameters().to_vec(),
        head: head.clone(),
    }
    .save(&run.path(CHECKPOINT))?;
    run.add_artifact(CHECKPOINT);
    Ok(())
}

fn load_checkpoint(path: &Path, run: &mut RunDir) -> Result<(BowEncoder, McpHead), Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    run.record_input(path)?;
    let ckpt = Checkpoint::load(path)?;
    if ckpt.encoder != TOY_ENCODER {
        return Err(Failure::Usage(format!("checkpoint encoder `{}` is not supported", ckpt.encoder)));
    }
    let encoder = BowEncoder::from_parameters(ckpt.vocab_size, ckpt.width, ckpt.parameters)?;
    Ok((encoder, ckpt.head))
}

pub fn mcp_train(args: &McpTrainArgs, seed: u64, run: &mut RunDir) -> Result<(), Failure> {
    let train_path = required(&args.train, "train")?;
    run.record_input(&train_path)?;
    let mut train_examples = load_mcp(&train_path)?;
    let dev_examples = match &args.dev {
        Some(p) => {
            run.record_input(p)?;
            load_mcp(p)?
        }
        None => {
            let held = (train_examples.len() / 10).max(1);
            if train_examples.len() <= held {
                return Err(Failure::Usage("too few examples to hold out a dev split; pass --dev".into()));
            }
            train_examples.split_off(train_examples.len() - held)
        }
    };
    // Selection pretraining shares the question-answering preset column.
    let cfg = training_config(&args.training, Task::Xcsqa, TrainingConfig::default(), seed)?;
    let name = args.encoder.as_deref().unwrap_or(TOY_ENCODER);
    let width = args.width.unwrap_or(DEFAULT_WIDTH);
    let mut encoder = registry::fresh_encoder(name, args.encoder_vocab.unwrap_or(DEFAULT_ENCODER_VOCAB), width, cfg.seed)?;
    let mut head = McpHead::random(width, head_seed(cfg.seed));
    let train_sets: Vec<_> = train_examples
        .iter()
        .map(|e| encode_mcp_example(e, encoder.tokenizer(), cfg.max_seq_len))
        .collect();
    let dev_sets: Vec<_> = dev_examples
        .iter()
        .map(|e| encode_mcp_example(e, encoder.tokenizer(), cfg.max_seq_len))
        .collect();
    let outcome = train(&mut encoder, &mut head, &train_sets, &dev_sets, &cfg, &|_| Ok(()))?;
    write_log_csv(&run.path("log.csv"), &outcome.log)?;
    run.add_artifact("log.csv");
    run.write_json("training.json", &json!({"config": cfg, "outcome": outcome, "final_dev_acc": accuracy(&encoder, &head, &dev_sets)}))?;
    save_checkpoint(run, &encoder, &head)
}

fn load_items(path: &Path, task: Task, run: &mut RunDir) -> Result<Vec<McqItem>, Failure> {
    run.record_input(path)?;
    Ok(load_mcq(path, task.num_options())?)
}

pub fn finetune(args: &FinetuneArgs, seed: u64, run: &mut RunDir) -> Result<(), Failure> {
    let task = super::parse_task(args.task.as_deref())?;
    let base = TrainingConfig {
        max_seq_len: task.max_seq_len(),
        ..TrainingConfig::default()
    };
    let cfg = training_config(&args.training, task, base, seed)?;
    let (mut encoder, mut head) = match (&args.checkpoint, args.fresh.unwrap_or(false)) {
        (Some(p), false) => load_checkpoint(p, run)?,
        (None, true) => {
            let width = args.width.unwrap_or(DEFAULT_WIDTH);
            let enc = registry::fresh_encoder(TOY_ENCODER, args.encoder_vocab.unwrap_or(DEFAULT_ENCODER_VOCAB), width, cfg.seed)?;
            (enc, McpHead::random(width, head_seed(cfg.seed)))
        }
        (Some(_), true) => return Err(Failure::Usage("--checkpoint and --fresh are mutually exclusive".into())),
        (None, false) => {
            return Err(Failure::Usage(
                "finetune needs --checkpoint (or --fresh to start from an untrained encoder)".into(),
            ))
        }
    };
    let train_items = load_items(&required(&args.train, "train")?, task, run)?;
    let dev_items = load_items(&required(&args.dev, "dev")?, task, run)?;
    let aux = match &args.aux_train {
        Some(p) => load_items(p, task, run)?,
        None => Vec::new(),
    };
    let outcome = run_finetune(&train_items, &aux, &dev_items, &mut encoder, &mut head, &cfg)?;
    write_log_csv(&run.path("log.csv"), &outcome.training.log)?;
    run.add_artifact("log.csv");
    run.write_json("curve.json", &outcome.curve)?;
    run.write_json("encode_flags.json", &outcome.encode_flags)?;
    run.write_json("training.json", &json!({"config": cfg, "task": task, "outcome": outcome.training}))?;
    save_checkpoint(run, &encoder, &head)
}

pub fn eval(args: &EvalArgs, run: &mut RunDir) -> Result<(), Failure> {
    let task = parse_task(args.task.as_deref())?;
    let ckpt = required(&args.checkpoint, "checkpoint")?;
    let (encoder, head) = load_checkpoint(&ckpt, run)?;
    let dir = required(&args.test_dir, "test-dir")?;
    run.record_input(&dir)?;
    let mut test_sets: BTreeMap<LanguageCode, Vec<McqItem>> = BTreeMap::new();
    let entries = std::fs::read_dir(&dir).map_err(|e| Failure::Infrastructure(format!("{}: {e}", dir.display())))?;
    for entry in entries.filter_map(|e| e.ok()) {
        let p = entry.path();
        if p.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let lang = LanguageCode::new(stem)?;
        test_sets.insert(lang, load_mcq(&p, task.num_options())?);
    }
    let declared = match &args.languages {
        Some(list) => languages(Some(list))?,
        None => test_sets.keys().cloned().collect(),
    };
    if declared.is_empty() {
        return Err(Failure::Usage(format!("no <lang>.jsonl test files in {}", dir.display())));
    }
    let model = args.model.as_deref().unwrap_or("model");
    let max_len = args.max_seq_len.unwrap_or(task.max_seq_len());
    let mut report = evaluate_transfer(model, &task.to_string(), &encoder, &head, &test_sets, &declared, max_len)?;
    if let Some(base_dir) = &args.baseline_run {
        let base_path = base_dir.join("report.json");
        if !base_path.is_file() {
            return Err(Failure::Usage(format!("baseline run has no report: {}", base_path.display())));
        }
        run.record_input(&base_path)?;
        let baseline: TransferReport = serde_json::from_str(&read_text(&base_path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", base_path.display())))?;
        report = report.with_baseline(&baseline);
    }
    run.write_json("report.json", &report)?;
    run.write_text("report.txt", &report.table().render_text())?;
    let categories = category_report(&report.predictions);
    run.write_json("categories.json", &categories)?;
    run.write_text("categories.txt", &categories.table().render_text())?;
    run.write_text("categories.svg", &categories.box_plot(&format!("{model} accuracy by category")))?;
    print!("{}", report.table().render_text());
    Ok(())
}
