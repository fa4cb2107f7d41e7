use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use motas::augment::{read_plan, FailureRecord};
use motas::cache::FeatureCache;
use motas::harness::{parse_manifest, RunResult};
use motas::metrics::MetricsReport;
use motas::{Label, Source};

fn motas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motas"))
        .args(args)
        .env_remove("MOTAS_SEED")
        .env_remove("MOTAS_TOOL_TIMEOUT_S")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = motas(args);
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "motas {args:?}: {err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_wav(path: &Path, seconds: f64, freq: f64, silent: bool) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..(seconds * 16_000.0) as usize {
        let v = if silent {
            0.0
        } else {
            (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin() * 0.3
        };
        w.write_sample((v * 32767.0) as i16).unwrap();
    }
    w.finalize().unwrap();
}

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
    }
    p
}

/// Six AD and six CN training recordings with inline transcripts.
fn real_cohort(dir: &Path) -> PathBuf {
    let mut lines = String::new();
    for i in 0..12 {
        let (id, label) = if i < 6 {
            (format!("ad{i:03}"), "AD")
        } else {
            (format!("cn{i:03}"), "CN")
        };
        let wav = dir.join(format!("{id}.wav"));
        write_wav(&wav, 1.5, 200.0 + 40.0 * i as f64, false);
        lines.push_str(&format!(
            "{{\"id\":\"{id}\",\"label\":\"{label}\",\"split\":\"train\",\"audio\":{:?},\"transcript\":\"the boy takes a cookie {i}\"}}\n",
            s(&wav)
        ));
    }
    let path = dir.join("train.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}

fn read_failures(path: &Path) -> Vec<FailureRecord> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn tts_failures_are_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = real_cohort(d);
    let plan = d.join("plan.jsonl");
    ok(&["plan-aug", "--manifest", s(&train), "--factor", "2", "--seed", "3", "--out", s(&plan)]);
    let records = read_plan(&plan).unwrap();
    assert_eq!(records.len(), 12);

    // The stub fails for plan records 3 and 7 and copies the voice otherwise.
    let bad = [&records[3].synth_id, &records[7].synth_id];
    let tts = script(
        d,
        "tts.sh",
        &format!(
            "case \"$3\" in *{}.wav|*{}.wav) echo boom >&2; exit 4;; esac\ncp \"$1\" \"$3\"",
            bad[0], bad[1]
        ),
    );
    let cmd = format!("{} {{voice_audio}} {{text}} {{out}}", s(&tts));
    let out_dir = d.join("tts");
    let run = |extra: &[&str]| {
        let mut args = vec!["run-tts", "--plan", s(&plan), "--manifest", s(&train), "--cmd", &cmd];
        args.extend(["--out-dir", s(&out_dir), "--max-retries", "0", "--workers", "3"]);
        args.extend(extra);
        motas(&args)
    };
    let out = run(&["--max-failures", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let synthetic = parse_manifest(out_dir.join("synthetic.jsonl")).unwrap();
    assert_eq!(synthetic.len(), 10);
    assert!(synthetic.iter().all(|r| r.item.source == Source::Synthetic && r.item.audio.as_ref().unwrap().is_file()));
    assert!(synthetic.iter().all(|r| r.id() != bad[0] && r.id() != bad[1]));
    let failures = read_failures(&out_dir.join("failures.jsonl"));
    assert_eq!(failures.iter().map(|f| f.record).collect::<Vec<_>>(), [3, 7]);
    assert!(failures.iter().all(|f| f.stage == "tts" && f.exit_code == Some(4) && f.message.contains("boom")));

    assert_eq!(run(&["--max-failures", "1"]).status.code(), Some(3));

    let merged = d.join("merged.jsonl");
    let summary = ok(&["merge", "--real", s(&train), "--synthetic", s(&out_dir.join("synthetic.jsonl")), "--out", s(&merged)]);
    assert!(summary.contains("excluded invalid: 0"), "{summary}");
    assert_eq!(parse_manifest(&merged).unwrap().len(), 22);
}

#[test]
fn asr_writes_transcripts_and_flags_empty_ones() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = real_cohort(d);
    let asr = script(
        d,
        "asr.sh",
        "case \"$1\" in *ad000.wav) printf '[...] ?!' > \"$2\";; *) echo \"the boy is on the stool\" > \"$2\";; esac",
    );
    let out_dir = d.join("asr");
    ok(&[
        "run-asr",
        "--manifest",
        s(&train),
        "--cmd",
        &format!("{} {{audio}} {{out}}", s(&asr)),
        "--out-dir",
        s(&out_dir),
    ]);
    let recs = parse_manifest(out_dir.join("manifest.jsonl")).unwrap();
    assert_eq!(recs.len(), 12);
    let first = &recs[0].item;
    assert_eq!(first.id, "ad000");
    assert!(first.invalid, "{first:?}");
    for r in &recs[1..] {
        assert!(!r.item.invalid);
        assert!(r.item.transcript.as_deref().unwrap().contains("boy"));
        assert!(out_dir.join(format!("{}.txt", r.id())).is_file());
    }
    assert!(read_failures(&out_dir.join("failures.jsonl")).is_empty());
}

#[test]
fn missing_tool_counts_as_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = real_cohort(d);
    let out = motas(&[
        "run-asr",
        "--manifest",
        s(&train),
        "--cmd",
        "/nonexistent/asr {audio} {out}",
        "--out-dir",
        s(&d.join("asr")),
        "--max-retries",
        "0",
        "--max-failures",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let failures = read_failures(&d.join("asr/failures.jsonl"));
    assert_eq!(failures.len(), 12);
    assert!(failures[0].message.contains("command not found"));
}

#[test]
fn template_without_placeholder_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = real_cohort(dir.path());
    let out = motas(&["run-asr", "--manifest", s(&train), "--cmd", "asr {audio}", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("{out}"));
}

#[test]
fn extract_writes_segment_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_wav(&d.join("a.wav"), 2.5, 300.0, false);
    write_wav(&d.join("b.wav"), 0.4, 500.0, false);
    write_wav(&d.join("z.wav"), 1.0, 0.0, true);
    let m = d.join("m.jsonl");
    let mut lines = String::new();
    for (id, label) in [("a", "AD"), ("b", "CN"), ("z", "CN")] {
        lines.push_str(&format!(
            "{{\"id\":\"{id}\",\"label\":\"{label}\",\"split\":\"train\",\"audio\":{:?}}}\n",
            s(&d.join(format!("{id}.wav")))
        ));
    }
    std::fs::write(&m, lines).unwrap();
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"segment_s": 1.0}"#).unwrap();

    let mfcc = d.join("mfcc.mtas");
    let log = ok(&["extract", "--manifest", s(&m), "--feature", "mfcc", "--config", s(&cfg), "--out-cache", s(&mfcc)]);
    let cache = FeatureCache::read(&mfcc).unwrap();
    // One-second windows: 1 + (16000 - 400) / 160 frames of 13 coefficients.
    assert_eq!(cache.dim(), 98 * 13);
    assert_eq!(cache.ids(), ["a", "a@1", "a@2", "b"]);
    let summary: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(summary["silent_segments_skipped"], 1);
    assert_eq!(summary["records"], 3);

    let spec = d.join("spec.mtas");
    ok(&["extract", "--manifest", s(&m), "--feature", "spec", "--config", s(&cfg), "--out-cache", s(&spec)]);
    let cache = FeatureCache::read(&spec).unwrap();
    assert_eq!(cache.dim(), 224 * 224);
    assert_eq!(cache.len(), 4);
    assert!(cache.iter().all(|(_, r)| r.iter().all(|&p| (0.0..=1.0).contains(&p))));

    std::fs::write(&cfg, r#"{"segment_s": 1.0, "sample_rate": 8000}"#).unwrap();
    let out = motas(&["extract", "--manifest", s(&m), "--feature", "mfcc", "--config", s(&cfg), "--out-cache", s(&mfcc)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no resampling"));
}

#[test]
fn train_then_eval_reproduces_the_first_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("spec.json"),
        r#"{"n_train": 20, "n_test": 10, "factors": [], "separation": 6,
            "dims": {"d_w": 5, "d_m": 5, "d_s": 5, "d_t": 5}}"#,
    )
    .unwrap();
    let cfg = d.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dims": {"d_w": 5, "d_m": 5, "d_s": 5, "d_t": 5}, "d_e": 4, "expert_hidden": 6,
            "mlp_h1": 8, "mlp_h2": 4, "epochs": 15, "seeds": [4, 5]}"#,
    )
    .unwrap();
    let c = d.join("cohort");
    ok(&["synth-cohort", "--out", s(&c), "--spec", s(&d.join("spec.json"))]);
    let (model, result) = (d.join("model.bin"), d.join("result.json"));
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--manifest",
        s(&c.join("train.jsonl")),
        "--caches",
        s(&c.join("caches")),
        "--test-manifest",
        s(&c.join("test.jsonl")),
        "--out-model",
        s(&model),
        "--out-result",
        s(&result),
    ]);
    let r: RunResult = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(r.per_seed.len(), 2);
    assert_eq!(r.per_seed[0].seed, 4);
    assert_eq!(r.evaluated_on, 10);

    let (report, preds) = (d.join("report.json"), d.join("preds.jsonl"));
    ok(&[
        "eval",
        "--model",
        s(&model),
        "--manifest",
        s(&c.join("test.jsonl")),
        "--caches",
        s(&c.join("caches")),
        "--config",
        s(&cfg),
        "--out-report",
        s(&report),
        "--out-predictions",
        s(&preds),
    ]);
    let rep: MetricsReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    // The checkpoint is stored in f32, so allow for rounding in the
    // probabilities but expect identical decisions on a well-separated set.
    assert!((rep.values.accuracy - r.per_seed[0].report.values.accuracy).abs() < 1e-9);
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 10);

    // Training without test records is refused.
    let out = motas(&[
        "train",
        "--config",
        s(&cfg),
        "--manifest",
        s(&c.join("train.jsonl")),
        "--caches",
        s(&c.join("caches")),
        "--out-model",
        s(&model),
        "--out-result",
        s(&result),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_env_matches_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = real_cohort(d);
    let (a, b) = (d.join("a.jsonl"), d.join("b.jsonl"));
    ok(&["plan-aug", "--manifest", s(&train), "--factor", "2.5", "--seed", "9", "--out", s(&a)]);
    let out = Command::new(env!("CARGO_BIN_EXE_motas"))
        .args(["plan-aug", "--manifest", s(&train), "--factor", "2.5", "--out", s(&b)])
        .env("MOTAS_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let plan = read_plan(&a).unwrap();
    assert_eq!(plan.iter().filter(|r| r.label == Label::Ad).count(), 9);
}

#[test]
fn exit_codes() {
    assert_eq!(motas(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(motas(&["--version"]).status.code(), Some(0));
    let out = motas(&["curve", "--results", "/nonexistent/dir", "--out-csv", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("bad.jsonl");
    std::fs::write(&m, "{\"id\":\"a\",\"label\":\"AD\",\"split\":\"train\"}\nnot json\n").unwrap();
    let out = motas(&["plan-aug", "--manifest", s(&m), "--factor", "2", "--out", s(&dir.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:2:"));
}
