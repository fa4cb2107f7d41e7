//! Intra-class voice/transcript pairing, external TTS and ASR drivers, and
//! merging real with synthetic items.

mod plan;
mod runner;

pub use plan::{plan_pairs, read_plan, synthetic_quota, write_plan, PairPlan, PairRecord};
pub use runner::{
    run_asr_jobs, run_tts_jobs, substitute, write_failures, ExternalToolConfig, FailureRecord, JobReport,
    TIMEOUT_ENV,
};

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, Source};

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortItem {
    pub id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    /// Inline transcript text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_of: Option<String>,
    /// Set when the transcript cleaned to nothing.
    #[serde(default, skip_serializing_if = "is_false")]
    pub invalid: bool,
    /// Speaker or session grouping for subject-level scoring; defaults to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl CohortItem {
    pub fn real(id: impl Into<String>, label: Label) -> Self {
        CohortItem {
            id: id.into(),
            label,
            audio: None,
            transcript: None,
            transcript_path: None,
            source: Source::Real,
            voice_of: None,
            transcript_of: None,
            invalid: false,
            subject: None,
        }
    }

    pub fn subject(&self) -> &str {
        self.subject.as_deref().unwrap_or(&self.id)
    }

    /// Inline text if present, otherwise the contents of `transcript_path`.
    pub fn transcript_text(&self) -> Result<Option<String>> {
        if let Some(t) = &self.transcript {
            return Ok(Some(t.clone()));
        }
        match &self.transcript_path {
            Some(p) => std::fs::read_to_string(p).map(Some).map_err(|e| Error::io(p, e)),
            None => Ok(None),
        }
    }

    /// Provenance rules: real items carry no donors; synthetic items carry
    /// two distinct donors.
    pub fn check_provenance(&self) -> Result<()> {
        match self.source {
            Source::Real if self.voice_of.is_some() || self.transcript_of.is_some() => Err(Error::Validation(
                format!("real item {} must not name voice/transcript donors", self.id),
            )),
            Source::Synthetic => match (&self.voice_of, &self.transcript_of) {
                (Some(v), Some(t)) if v != t => Ok(()),
                (Some(_), Some(_)) => Err(Error::Validation(format!(
                    "synthetic item {} uses the same donor for voice and transcript",
                    self.id
                ))),
                _ => Err(Error::Validation(format!(
                    "synthetic item {} must name both donors",
                    self.id
                ))),
            },
            Source::Real => Ok(()),
        }
    }
}

/// Lowercase, keep `[a-z0-9 '-]`, turn any whitespace into a single space,
/// trim. Everything else is dropped.
pub fn clean_transcript(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '\'' || ch == '-' {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub real: usize,
    pub synthetic: usize,
}

impl ClassSummary {
    /// `synthetic / real`, or 0 when there are no real items.
    pub fn synthetic_ratio(&self) -> f64 {
        if self.real == 0 {
            0.0
        } else {
            self.synthetic as f64 / self.real as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedManifest {
    pub items: Vec<CohortItem>,
    pub summary: BTreeMap<Label, ClassSummary>,
    pub excluded_invalid: usize,
}

/// Union of real and synthetic items (invalid ones dropped), with per-class
/// counts.
pub fn merge_augmented(real: &[CohortItem], synthetic: &[CohortItem]) -> Result<AugmentedManifest> {
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(real.len() + synthetic.len());
    let mut summary: BTreeMap<Label, ClassSummary> = Label::ALL.iter().map(|&l| (l, ClassSummary::default())).collect();
    let mut excluded_invalid = 0;
    for item in real.iter().chain(synthetic) {
        if !seen.insert(item.id.as_str()) {
            return Err(Error::DuplicateId(item.id.clone()));
        }
        if item.invalid {
            excluded_invalid += 1;
            continue;
        }
        let s = summary.get_mut(&item.label).expect("both labels present");
        match item.source {
            Source::Real => s.real += 1,
            Source::Synthetic => s.synthetic += 1,
        }
        items.push(item.clone());
    }
    Ok(AugmentedManifest {
        items,
        summary,
        excluded_invalid,
    })
}
