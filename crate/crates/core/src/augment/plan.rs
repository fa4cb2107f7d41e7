use std::collections::{HashMap, HashSet};
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CohortItem;
use crate::error::{Error, Result};
use crate::tensor::Rng;
use crate::types::{Label, Source};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub synth_id: String,
    pub label: Label,
    pub voice_id: String,
    pub transcript_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairPlan {
    pub records: Vec<PairRecord>,
    pub factor: f64,
    pub seed: u64,
}

/// `round((factor - 1) * n)`, halves rounded away from zero.
pub fn synthetic_quota(factor: f64, n: usize) -> usize {
    ((factor - 1.0) * n as f64).round().max(0.0) as usize
}

/// Deterministic intra-class pairing.
///
/// Classes are handled AD then CN from one seeded stream. Voices cycle
/// through a shuffled roster; each voice draws its transcript uniformly from
/// the other class members it has not been paired with yet, starting over
/// once all have been used.
pub fn plan_pairs(cohort: &[CohortItem], factor: f64, seed: u64) -> Result<PairPlan> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("augmentation factor must be >= 1, got {factor}")));
    }
    let mut rng = Rng::derived(seed, "plan_pairs");
    let mut records = Vec::new();
    for label in Label::ALL {
        let ids: Vec<&str> = cohort
            .iter()
            .filter(|c| c.label == label && c.source == Source::Real && !c.invalid)
            .map(|c| c.id.as_str())
            .collect();
        let quota = synthetic_quota(factor, ids.len());
        if quota == 0 {
            continue;
        }
        if ids.len() < 2 {
            return Err(Error::Validation(format!(
                "class {label} needs at least two real items to pair, has {}",
                ids.len()
            )));
        }
        let mut roster = ids.clone();
        rng.shuffle(&mut roster);
        let mut used: HashMap<&str, HashSet<&str>> = HashMap::new();
        let tag = label.as_str().to_ascii_lowercase();
        for q in 0..quota {
            let voice = roster[q % roster.len()];
            let seen = used.entry(voice).or_default();
            let mut candidates: Vec<&str> = ids.iter().copied().filter(|&t| t != voice && !seen.contains(t)).collect();
            if candidates.is_empty() {
                seen.clear();
                candidates = ids.iter().copied().filter(|&t| t != voice).collect();
            }
            let transcript = candidates[rng.index(candidates.len())];
            seen.insert(transcript);
            records.push(PairRecord {
                synth_id: format!("syn_{tag}_{q:05}"),
                label,
                voice_id: voice.to_owned(),
                transcript_id: transcript.to_owned(),
            });
        }
    }
    Ok(PairPlan { records, factor, seed })
}

pub fn write_plan(plan: &PairPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in &plan.records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
