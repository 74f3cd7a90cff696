use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mickey_core::builder::{translate_mcq, GateScope, HashingEmbedder, McqGate, ReversingTranslator, TranslateConfig};
use mickey_core::data::{save_mcq, LanguageCode};
use mickey_core::probe::MickeyReport;
use mickey_core::toy;
use mickey_core::xcsr::TransferReport;
use sha2::{Digest, Sha256};

fn mickey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mickey")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mickey(args);
    assert!(
        out.status.success(),
        "mickey {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn digest(p: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(p).unwrap()))
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_truths(dir: &Path) -> PathBuf {
    let p = dir.join("truths.txt");
    std::fs::write(&p, toy::truths(20, 9).join("\n") + "\n").unwrap();
    p
}

const BUILD_FLAGS: [&str; 8] = ["--languages", "en,xx", "--vocab-size", "420", "--k", "4", "--gate-threshold", "0.75"];

fn build(out: &Path, truths: &Path) -> Output {
    let mut args = vec!["build", "--out", s(out), "--truths", s(truths)];
    args.extend(BUILD_FLAGS);
    ok(&args)
}

/// English train/dev and a gated translated test directory for the four-option task.
fn write_mcq(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let train = dir.join("train.jsonl");
    let dev = dir.join("dev.jsonl");
    let test_dir = dir.join("test");
    std::fs::create_dir_all(&test_dir).unwrap();
    save_mcq(&toy::mcq_items(300, 4, 7, "train-").unwrap(), &train).unwrap();
    save_mcq(&toy::mcq_items(60, 4, 8, "dev-").unwrap(), &dev).unwrap();
    let test_en = toy::mcq_items(120, 4, 9, "test-").unwrap();
    let xx = LanguageCode::new("xx").unwrap();
    let gate = McqGate { threshold: 0.85, scope: GateScope::AllCandidates };
    let tr = translate_mcq(
        &test_en,
        &[xx.clone()],
        &ReversingTranslator::default(),
        &HashingEmbedder::default(),
        &TranslateConfig::default(),
        gate,
    )
    .unwrap();
    save_mcq(&test_en, &test_dir.join("en.jsonl")).unwrap();
    save_mcq(&tr.items[&xx], &test_dir.join("xx.jsonl")).unwrap();
    (train, dev, test_dir)
}

#[test]
fn full_pipeline_writes_manifests_and_consistent_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let truths = write_truths(root);
    let truths_digest = digest(&truths);

    let b = root.join("build");
    build(&b, &truths);
    for f in ["probes.jsonl", "probes_en.jsonl", "quality.jsonl", "gate_report.json", "config.toml", "manifest.json"] {
        assert!(b.join(f).is_file(), "missing {f}");
    }
    assert!(!b.join("run.lock").exists());
    let manifest = json(&b.join("manifest.json"));
    assert_eq!(manifest["status"], "success");
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["inputs"][s(&truths)], truths_digest.as_str());
    assert_eq!(digest(&truths), truths_digest, "input was modified");

    let p = root.join("probe");
    let q = b.join("quality.jsonl");
    ok(&["probe", "--out", s(&p), "--corpus", s(&b.join("probes.jsonl")), "--ks", "1,2", "--shortest", "--quality", s(&q), "--vocab-size", "420"]);
    let report: MickeyReport = serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.hit.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    assert!(report.shortest.is_some() && report.bt_cosine.is_some());
    assert_eq!(report.table().render_text(), std::fs::read_to_string(p.join("report.txt")).unwrap());
    assert!(p.join("hit1.svg").is_file() && p.join("hit2.svg").is_file());

    let c = root.join("convert");
    ok(&["mcp-convert", "--out", s(&c), "--corpus", s(&b.join("probes.jsonl")), "--v", "2", "--multiplier", "20"]);
    let m = root.join("mcp");
    ok(&[
        "mcp-train", "--out", s(&m), "--train", s(&c.join("examples.jsonl")), "--width", "16",
        "--learning-rate", "0.02", "--batch-size", "16", "--warmup-steps", "20", "--eval-interval", "20", "--max-steps", "200",
    ]);
    assert!(m.join("checkpoint.json").is_file() && m.join("log.csv").is_file());

    let (train, dev, test_dir) = write_mcq(root);
    let ft_flags = ["--task", "xcodah", "--learning-rate", "0.01", "--max-steps", "150", "--batch-size", "16", "--warmup-steps", "10", "--eval-interval", "25"];
    let base_ft = root.join("ft-base");
    let mut args = vec!["finetune", "--out", s(&base_ft), "--fresh", "--width", "16", "--train", s(&train), "--dev", s(&dev)];
    args.extend(ft_flags);
    ok(&args);
    let ft = root.join("ft");
    let ckpt = m.join("checkpoint.json");
    let mut args = vec!["finetune", "--out", s(&ft), "--checkpoint", s(&ckpt), "--train", s(&train), "--dev", s(&dev)];
    args.extend(ft_flags);
    ok(&args);
    for f in ["curve.json", "encode_flags.json", "log.csv", "checkpoint.json"] {
        assert!(ft.join(f).is_file(), "missing {f}");
    }

    let eb = root.join("eval-base");
    ok(&["eval", "--out", s(&eb), "--checkpoint", s(&base_ft.join("checkpoint.json")), "--task", "xcodah", "--test-dir", s(&test_dir), "--model", "base"]);
    let e = root.join("eval");
    let ft_ckpt = ft.join("checkpoint.json");
    let eval_args = [
        "eval", "--out", s(&e), "--checkpoint", s(&ft_ckpt), "--task", "xcodah",
        "--test-dir", s(&test_dir), "--model", "mcp", "--baseline-run", s(&eb),
    ];
    let stdout = String::from_utf8(ok(&eval_args).stdout).unwrap();
    let report: TransferReport = serde_json::from_str(&std::fs::read_to_string(e.join("report.json")).unwrap()).unwrap();
    assert!(report.delta.is_some());
    assert!(stdout.contains("Δ(base)"), "{stdout}");
    let rendered = std::fs::read_to_string(e.join("report.txt")).unwrap();
    assert_eq!(report.table().render_text(), rendered);
    for f in ["categories.json", "categories.txt", "categories.svg"] {
        assert!(e.join(f).is_file(), "missing {f}");
    }

    // Re-evaluating the same checkpoint reproduces the report exactly.
    let first = std::fs::read(e.join("report.json")).unwrap();
    ok(&eval_args);
    assert_eq!(first, std::fs::read(e.join("report.json")).unwrap());
}

#[test]
fn same_seed_rebuild_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let truths = write_truths(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    build(&a, &truths);
    build(&b, &truths);
    for f in ["probes.jsonl", "probes_en.jsonl", "quality.jsonl", "gate_report.json"] {
        assert_eq!(digest(&a.join(f)), digest(&b.join(f)), "{f} differs");
    }
}

#[test]
fn rerun_resumes_from_journal_without_provider_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let truths = write_truths(tmp.path());
    let out = tmp.path().join("run");
    build(&out, &truths);
    let first = json(&out.join("summary.json"));
    assert!(first["provider_calls"].as_u64().unwrap() > 0);
    let probes = digest(&out.join("probes.jsonl"));
    build(&out, &truths);
    let second = json(&out.join("summary.json"));
    assert_eq!(second["provider_calls"], 0);
    assert_eq!(probes, digest(&out.join("probes.jsonl")));
}

#[test]
fn config_file_fills_unset_flags_and_is_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let truths = write_truths(tmp.path());
    let cfg = tmp.path().join("mickey.toml");
    std::fs::write(&cfg, format!("seed = 7\n[backend]\nvocab_size = 420\n[build]\ntruths = {:?}\nk = 4\n", s(&truths))).unwrap();
    let out = tmp.path().join("run");
    ok(&["build", "--config", s(&cfg), "--out", s(&out), "--k", "3"]);
    let echo: toml::Value = toml::from_str(&std::fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echo["seed"].as_integer(), Some(7));
    assert_eq!(echo["params"]["k"].as_integer(), Some(3));
    assert_eq!(echo["backend"]["vocab_size"].as_integer(), Some(420));
}

#[test]
fn failures_map_to_exit_codes_and_still_write_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ft");
    let missing = tmp.path().join("nope.json");
    let train = tmp.path().join("train.jsonl");
    save_mcq(&toy::mcq_items(10, 4, 1, "t-").unwrap(), &train).unwrap();
    let r = mickey(&["finetune", "--out", s(&out), "--checkpoint", s(&missing), "--task", "xcodah", "--train", s(&train), "--dev", s(&train)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("does not exist"));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["exit_code"], 1);

    let r = mickey(&["finetune", "--out", s(&out), "--task", "xcodah", "--train", s(&train), "--dev", s(&train)]);
    assert_eq!(r.status.code(), Some(1));

    let r = mickey(&["stats", "--out", s(&tmp.path().join("st")), "--corpus", s(&missing)]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));

    let locked = tmp.path().join("locked");
    std::fs::create_dir_all(&locked).unwrap();
    std::fs::write(locked.join("run.lock"), "1").unwrap();
    let r = mickey(&["stats", "--out", s(&locked), "--corpus", s(&train)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn stats_reports_sentence_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let truths = write_truths(tmp.path());
    let b = tmp.path().join("b");
    build(&b, &truths);
    let st = tmp.path().join("st");
    ok(&["stats", "--out", s(&st), "--corpus", s(&b.join("probes.jsonl"))]);
    let stats = json(&st.join("stats.json"));
    let probes = stats["probes"].as_u64().unwrap();
    let langs = stats["languages"].as_u64().unwrap();
    assert_eq!(stats["sentences"].as_u64().unwrap(), probes * langs * 4);
}
