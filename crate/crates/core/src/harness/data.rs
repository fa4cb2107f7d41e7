use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::ManifestRecord;
use crate::cache::FeatureCache;
use crate::dsp::{load_wav, pad_or_split, MfccExtractor, MfccSequence, SpectrogramImage, IMAGE_SIZE};
use crate::encoders::{load_external_embedding, pool_patches};
use crate::error::{Error, Result};
use crate::model::{MfccFeature, MfccInput, ModelConfig, Sample, SpecFeature, SpecInput};
use crate::types::Modality;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AudioFeature {
    Mfcc,
    Spec,
}

/// Row id of segment `n` of a recording: the bare id for the first window,
/// `<id>@<n>` afterwards.
pub fn segment_id(id: &str, n: usize) -> String {
    if n == 0 {
        id.to_owned()
    } else {
        format!("{id}@{n}")
    }
}

/// Inverse of [`segment_id`].
pub fn split_segment_id(row: &str) -> (&str, usize) {
    match row.rsplit_once('@') {
        Some((base, n)) if !base.is_empty() && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => {
            match n.parse() {
                Ok(k) if k > 0 => (base, k),
                _ => (row, 0),
            }
        }
        _ => (row, 0),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub records: usize,
    pub segments: usize,
    pub silent_segments_skipped: usize,
    pub dim: usize,
}

/// Segment every record's audio and store one row per non-silent window:
/// flattened MFCC frames (`T × n_mfcc`) or the 224×224 image.
pub fn extract_features(
    records: &[ManifestRecord],
    feature: AudioFeature,
    cfg: &ExperimentConfig,
) -> Result<(FeatureCache, ExtractSummary)> {
    let ext = MfccExtractor::new(&cfg.frames, cfg.sample_rate)?;
    let window = (cfg.segment_s * f64::from(cfg.sample_rate)).round() as usize;
    let dim = match feature {
        AudioFeature::Mfcc => {
            let t = ext.frames().num_frames(window).ok_or_else(|| {
                Error::Validation(format!("segments of {} s are shorter than one frame", cfg.segment_s))
            })?;
            t * ext.frames().n_mfcc
        }
        AudioFeature::Spec => IMAGE_SIZE * IMAGE_SIZE,
    };
    let mut cache = FeatureCache::new(dim);
    let mut summary = ExtractSummary {
        dim,
        ..Default::default()
    };
    for rec in records {
        let audio = rec
            .item
            .audio
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("record {} has no audio path", rec.id())))?;
        let clip = load_wav(audio)?;
        if clip.sample_rate() != cfg.sample_rate {
            return Err(Error::Validation(format!(
                "{} is sampled at {} Hz, expected {} (no resampling is done)",
                audio.display(),
                clip.sample_rate(),
                cfg.sample_rate
            )));
        }
        summary.records += 1;
        for (n, seg) in pad_or_split(&clip, cfg.segment_s)?.iter().enumerate() {
            if seg.is_silent() {
                log::info!("skipping silent segment {n} of {}", rec.id());
                summary.silent_segments_skipped += 1;
                continue;
            }
            let row = match feature {
                AudioFeature::Mfcc => ext.mfcc(seg)?.data().to_vec(),
                AudioFeature::Spec => ext.spectrogram(seg)?.pixels().to_vec(),
            };
            cache.push_f64(segment_id(rec.id(), n), &row)?;
            summary.segments += 1;
        }
    }
    Ok((cache, summary))
}

/// Lazily opened caches: `<dir>/<modality>.mtas` unless a record points
/// elsewhere.
#[derive(Debug)]
pub struct CacheSet {
    dir: PathBuf,
    open: HashMap<PathBuf, FeatureCache>,
    segments: HashMap<PathBuf, HashMap<String, Vec<(usize, String)>>>,
}

impl CacheSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CacheSet {
            dir: dir.into(),
            open: HashMap::new(),
            segments: HashMap::new(),
        }
    }

    pub fn default_path(&self, m: Modality) -> PathBuf {
        self.dir.join(format!("{m}.mtas"))
    }

    fn path_for(&self, rec: &ManifestRecord, m: Modality) -> PathBuf {
        rec.cache_refs
            .as_ref()
            .and_then(|r| r.get(&m).cloned())
            .unwrap_or_else(|| self.default_path(m))
    }

    fn load(&mut self, path: &Path) -> Result<&FeatureCache> {
        if !self.open.contains_key(path) {
            let cache = FeatureCache::read(path)?;
            let mut segs: HashMap<String, Vec<(usize, String)>> = HashMap::new();
            for id in cache.ids() {
                let (base, n) = split_segment_id(id);
                segs.entry(base.to_owned()).or_default().push((n, id.clone()));
            }
            segs.values_mut().for_each(|v| v.sort());
            self.segments.insert(path.to_owned(), segs);
            self.open.insert(path.to_owned(), cache);
        }
        Ok(&self.open[path])
    }

    pub fn cache(&mut self, rec: &ManifestRecord, m: Modality) -> Result<&FeatureCache> {
        let p = self.path_for(rec, m);
        self.load(&p)
    }

    /// Segment row ids for a record in modality `m`, in window order.
    fn segments_of(&mut self, rec: &ManifestRecord, m: Modality) -> Result<Vec<String>> {
        let p = self.path_for(rec, m);
        self.load(&p)?;
        Ok(self.segments[&p]
            .get(rec.id())
            .map(|v| v.iter().map(|(_, id)| id.clone()).collect())
            .unwrap_or_default())
    }
}

fn lookup(caches: &mut CacheSet, rec: &ManifestRecord, m: Modality, seg: &str, dim: usize) -> Result<Vec<f64>> {
    let cache = caches.cache(rec, m)?;
    // Recording-level vectors (speech and text embeddings) are shared by all
    // of the recording's segments.
    let key = if cache.contains(seg) { seg } else { rec.id() };
    load_external_embedding(cache, m, key, dim)
}

/// Expand records into per-segment samples. Segments are the rows of the
/// audio-derived caches (MFCC, or spectrogram when MFCC embeddings are
/// recording-level); records with no segments are skipped with a warning.
pub fn resolve_samples(records: &[ManifestRecord], caches: &mut CacheSet, cfg: &ModelConfig) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    let d = cfg.dims;
    for rec in records {
        if rec.item.invalid {
            log::warn!("skipping invalid record {}", rec.id());
            continue;
        }
        let mut segs = caches.segments_of(rec, Modality::Mfcc)?;
        if segs.is_empty() {
            segs = caches.segments_of(rec, Modality::Spec)?;
        }
        if segs.is_empty() {
            return Err(Error::MissingEmbedding {
                id: rec.id().to_owned(),
                modality: "mfcc".into(),
            });
        }
        for seg in segs {
            let mfcc = match cfg.mfcc_input {
                MfccInput::Embedding => MfccFeature::Embedding(lookup(caches, rec, Modality::Mfcc, &seg, d.d_m)?),
                MfccInput::Sequence => {
                    let cache = caches.cache(rec, Modality::Mfcc)?;
                    if cache.dim() % cfg.n_mfcc != 0 {
                        return Err(Error::DimensionMismatch {
                            id: format!("{seg} (mfcc frames)"),
                            expected: cfg.n_mfcc,
                            found: cache.dim(),
                        });
                    }
                    let flat = load_external_embedding(cache, Modality::Mfcc, &seg, cache.dim())?;
                    MfccFeature::Sequence(MfccSequence::from_flat(flat, cfg.n_mfcc)?)
                }
            };
            let spec = match cfg.spec_input {
                SpecInput::Embedding => SpecFeature::Embedding(lookup(caches, rec, Modality::Spec, &seg, d.d_s)?),
                SpecInput::Image => {
                    let px = lookup(caches, rec, Modality::Spec, &seg, IMAGE_SIZE * IMAGE_SIZE)?;
                    // f32 storage can push normalized pixels a hair outside [0, 1].
                    let px = px.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
                    SpecFeature::Pooled(pool_patches(&SpectrogramImage::new(px)?))
                }
            };
            out.push(Sample {
                id: seg.clone(),
                subject: rec.item.subject().to_owned(),
                label: rec.item.label,
                w: lookup(caches, rec, Modality::W2v, &seg, d.d_w)?,
                mfcc,
                spec,
                text: lookup(caches, rec, Modality::Text, &seg, d.d_t)?,
            });
        }
    }
    Ok(out)
}

/// Class counts of records, for summaries.
pub fn class_counts(records: &[ManifestRecord]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in records {
        *m.entry(r.item.label.to_string()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_ids() {
        assert_eq!(segment_id("s1", 0), "s1");
        assert_eq!(segment_id("s1", 2), "s1@2");
        assert_eq!(split_segment_id("s1@2"), ("s1", 2));
        assert_eq!(split_segment_id("s1"), ("s1", 0));
        assert_eq!(split_segment_id("a@b"), ("a@b", 0));
        assert_eq!(split_segment_id("a@0"), ("a@0", 0));
        assert_eq!(split_segment_id("@3"), ("@3", 0));
    }
}
