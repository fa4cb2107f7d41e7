use std::collections::HashMap;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{clean_transcript, CohortItem, PairRecord};
use crate::error::{Error, Result};
use crate::types::Source;

pub const TIMEOUT_ENV: &str = "MOTAS_TOOL_TIMEOUT_S";

const TTS_PLACEHOLDERS: [&str; 3] = ["voice_audio", "text", "out"];
const ASR_PLACEHOLDERS: [&str; 2] = ["audio", "out"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalToolConfig {
    pub tts_command_template: Option<String>,
    pub asr_command_template: Option<String>,
    pub timeout_s: f64,
    /// Extra attempts after the first failure.
    pub max_retries: u32,
    /// Concurrent external processes.
    pub workers: usize,
}

impl Default for ExternalToolConfig {
    fn default() -> Self {
        ExternalToolConfig {
            tts_command_template: None,
            asr_command_template: None,
            timeout_s: 600.0,
            max_retries: 1,
            workers: 1,
        }
    }
}

impl ExternalToolConfig {
    /// The configured timeout unless the environment overrides it.
    pub fn effective_timeout(&self) -> Result<Duration> {
        let secs = match std::env::var(TIMEOUT_ENV) {
            Ok(v) => v
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{TIMEOUT_ENV}={v:?} is not a number")))?,
            Err(_) => self.timeout_s,
        };
        if !(secs > 0.0) || !secs.is_finite() {
            return Err(Error::InvalidArgument(format!("tool timeout must be positive, got {secs}")));
        }
        Ok(Duration::from_secs_f64(secs))
    }

    fn template(&self, stage: &str) -> Result<&str> {
        let (t, required): (&Option<String>, &[&str]) = match stage {
            "tts" => (&self.tts_command_template, &TTS_PLACEHOLDERS),
            _ => (&self.asr_command_template, &ASR_PLACEHOLDERS),
        };
        let t = t
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("no {stage} command template configured")))?;
        for p in required {
            if !t.contains(&format!("{{{p}}}")) {
                return Err(Error::InvalidArgument(format!(
                    "{stage} command template lacks the {{{p}}} placeholder"
                )));
            }
        }
        if shlex::split(t).is_none_or(|v| v.is_empty()) {
            return Err(Error::InvalidArgument(format!("cannot parse {stage} command template {t:?}")));
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    /// Index of the plan record or input item.
    pub record: usize,
    pub stage: String,
    pub exit_code: Option<i32>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobReport {
    pub items: Vec<CohortItem>,
    pub failures: Vec<FailureRecord>,
}

pub fn write_failures(failures: &[FailureRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for f in failures {
        serde_json::to_writer(&mut buf, f)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Replace each `{name}` with its value in one left-to-right pass, so values
/// that themselves contain braces are never re-expanded.
pub fn substitute(token: &str, values: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(token.len());
    let mut rest = token;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if values.contains_key(&after[..close]) => {
                out.push_str(&values[&after[..close]]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

struct ToolFailure {
    exit_code: Option<i32>,
    message: String,
}

fn run_once(template: &str, values: &HashMap<&str, String>, timeout: Duration, out: &Path) -> Result<(), ToolFailure> {
    let fail = |exit_code, message: String| ToolFailure { exit_code, message };
    let argv: Vec<String> = shlex::split(template)
        .unwrap_or_default()
        .iter()
        .map(|t| substitute(t, values))
        .collect();
    let _ = std::fs::remove_file(out);
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => fail(None, format!("command not found: {}", argv[0])),
            _ => fail(None, format!("failed to start {}: {e}", argv[0])),
        })?;
    let mut stderr = child.stderr.take().expect("piped");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            let _ = reader.join();
            return Err(fail(None, format!("timed out after {:.1}s", timeout.as_secs_f64())));
        }
        Err(e) => return Err(fail(None, format!("wait failed: {e}"))),
    };
    let err_text = reader.join().unwrap_or_default();
    if !status.success() {
        let tail = err_text.lines().last().unwrap_or("").trim();
        let msg = if tail.is_empty() {
            format!("exited with {status}")
        } else {
            format!("exited with {status}: {tail}")
        };
        return Err(fail(status.code(), msg));
    }
    if !out.is_file() {
        return Err(fail(Some(0), format!("no output file at {}", out.display())));
    }
    Ok(())
}

/// Run `job(i)` for every index on `workers` threads, collecting results by
/// index so ordering never depends on completion order.
fn run_indexed<T: Send>(n: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = job(i);
                slots.lock().expect("no panics while held")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no panics while held")
        .into_iter()
        .map(|r| r.expect("every index ran"))
        .collect()
}

fn with_retries(
    template: &str,
    values: &HashMap<&str, String>,
    timeout: Duration,
    out: &Path,
    retries: u32,
) -> Result<(), ToolFailure> {
    let mut last = None;
    for attempt in 0..=retries {
        match run_once(template, values, timeout, out) {
            Ok(()) => return Ok(()),
            Err(f) => {
                log::warn!("attempt {} for {} failed: {}", attempt + 1, out.display(), f.message);
                last = Some(f);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Synthesize one clip per plan record. Failed records are reported and
/// skipped; they never abort the batch.
pub fn run_tts_jobs(
    plan: &[PairRecord],
    cohort: &[CohortItem],
    cfg: &ExternalToolConfig,
    out_dir: impl AsRef<Path>,
) -> Result<JobReport> {
    let out_dir = out_dir.as_ref();
    let template = cfg.template("tts")?;
    let timeout = cfg.effective_timeout()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let by_id: HashMap<&str, &CohortItem> = cohort.iter().map(|c| (c.id.as_str(), c)).collect();

    // Resolve every input up front: a missing donor is a setup error, not a
    // per-record tool failure.
    let mut jobs = Vec::with_capacity(plan.len());
    for r in plan {
        let donor = |id: &str| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("plan record {} names unknown id {id}", r.synth_id)))
        };
        let voice = donor(&r.voice_id)?;
        let text_donor = donor(&r.transcript_id)?;
        if voice.label != r.label || text_donor.label != r.label {
            return Err(Error::Validation(format!("plan record {} pairs across classes", r.synth_id)));
        }
        let audio = voice
            .audio
            .clone()
            .filter(|p| p.is_file())
            .ok_or_else(|| Error::Validation(format!("voice donor {} has no readable audio", voice.id)))?;
        let text = text_donor
            .transcript_text()?
            .ok_or_else(|| Error::Validation(format!("transcript donor {} has no transcript", text_donor.id)))?;
        jobs.push((audio, text, out_dir.join(format!("{}.wav", r.synth_id))));
    }

    let results = run_indexed(jobs.len(), cfg.workers, |i| {
        let (audio, text, out) = &jobs[i];
        let values = HashMap::from([
            ("voice_audio", audio.display().to_string()),
            ("text", text.clone()),
            ("out", out.display().to_string()),
        ]);
        with_retries(template, &values, timeout, out, cfg.max_retries)
    });

    let mut report = JobReport {
        items: Vec::new(),
        failures: Vec::new(),
    };
    for (i, (res, r)) in results.into_iter().zip(plan).enumerate() {
        match res {
            Ok(()) => report.items.push(CohortItem {
                audio: Some(jobs[i].2.clone()),
                source: Source::Synthetic,
                voice_of: Some(r.voice_id.clone()),
                transcript_of: Some(r.transcript_id.clone()),
                ..CohortItem::real(r.synth_id.clone(), r.label)
            }),
            Err(f) => report.failures.push(FailureRecord {
                record: i,
                stage: "tts".into(),
                exit_code: f.exit_code,
                message: f.message,
            }),
        }
    }
    Ok(report)
}

/// Transcribe each item, storing the cleaned text both inline and in
/// `<out_dir>/<id>.txt`. Items whose text cleans to nothing are flagged
/// invalid.
pub fn run_asr_jobs(items: &[CohortItem], cfg: &ExternalToolConfig, out_dir: impl AsRef<Path>) -> Result<JobReport> {
    let out_dir = out_dir.as_ref();
    let template = cfg.template("asr")?;
    let timeout = cfg.effective_timeout()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut audio: Vec<PathBuf> = Vec::with_capacity(items.len());
    for it in items {
        audio.push(
            it.audio
                .clone()
                .filter(|p| p.is_file())
                .ok_or_else(|| Error::Validation(format!("item {} has no readable audio", it.id)))?,
        );
    }

    let results = run_indexed(items.len(), cfg.workers, |i| {
        let out = out_dir.join(format!("{}.txt", items[i].id));
        let values = HashMap::from([("audio", audio[i].display().to_string()), ("out", out.display().to_string())]);
        with_retries(template, &values, timeout, &out, cfg.max_retries)?;
        let raw = std::fs::read_to_string(&out).map_err(|e| ToolFailure {
            exit_code: Some(0),
            message: format!("unreadable transcript {}: {e}", out.display()),
        })?;
        let cleaned = clean_transcript(&raw);
        std::fs::write(&out, &cleaned).map_err(|e| ToolFailure {
            exit_code: Some(0),
            message: format!("cannot store transcript {}: {e}", out.display()),
        })?;
        Ok::<_, ToolFailure>((out, cleaned))
    });

    let mut report = JobReport {
        items: Vec::new(),
        failures: Vec::new(),
    };
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok((path, text)) => report.items.push(CohortItem {
                invalid: text.is_empty(),
                transcript: Some(text),
                transcript_path: Some(path),
                ..items[i].clone()
            }),
            Err(f) => report.failures.push(FailureRecord {
                record: i,
                stage: "asr".into(),
                exit_code: f.exit_code,
                message: f.message,
            }),
        }
    }
    Ok(report)
}
