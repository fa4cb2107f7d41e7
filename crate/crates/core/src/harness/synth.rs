//! Desk-scale stand-in cohort: Gaussian embeddings with one informative
//! modality, plus augmented training sets built from planned voice/transcript
//! pairs.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablate::{Cell, GridSpec};
use super::data::segment_id;
use super::manifest::{write_manifest, ManifestRecord, Split};
use crate::augment::{merge_augmented, plan_pairs, write_plan, CohortItem};
use crate::cache::FeatureCache;
use crate::encoders::{EmbeddingBundle, EmbeddingDims, Separation, SyntheticGenerator, DEFAULT_DIRECTION_SEED};
use crate::error::{Error, Result};
use crate::tensor::Rng;
use crate::types::{Label, Modality, Source};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub dims: EmbeddingDims,
    pub informative: Modality,
    pub separation: f64,
    /// Augmentation factors above 1 to build training manifests for.
    pub factors: Vec<f64>,
    pub segments: usize,
    /// Standard deviation of the noise added to donor vectors.
    pub donor_noise: f64,
    pub seed: u64,
    pub cells: Option<Vec<Cell>>,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_train: 100,
            n_test: 60,
            dims: EmbeddingDims::default(),
            informative: Modality::Text,
            separation: 4.0,
            factors: vec![1.5, 2.0, 2.5, 3.0],
            segments: 1,
            donor_noise: 0.5,
            seed: 0,
            cells: None,
        }
    }
}

/// Per-segment acoustic rows and recording-level speech/text vectors.
struct Subject {
    mfcc: Vec<Vec<f64>>,
    spec: Vec<Vec<f64>>,
    w2v: Vec<f64>,
    text: Vec<f64>,
}

fn draw_subject(gen: &SyntheticGenerator, spec: &CohortSpec, id: &str, label: Label) -> Result<Subject> {
    let sep = Separation::only(spec.informative, spec.separation);
    let mut bundles: Vec<EmbeddingBundle> = Vec::with_capacity(spec.segments);
    for n in 0..spec.segments {
        let sid = segment_id(id, n);
        let seed = Rng::derived(spec.seed, &format!("subject.{sid}")).next_u64();
        bundles.push(gen.sample(seed, sid, label, &sep)?);
    }
    Ok(Subject {
        w2v: bundles[0].x_w.clone(),
        text: bundles[0].x_t.clone(),
        mfcc: bundles.iter().map(|b| b.x_m.clone()).collect(),
        spec: bundles.into_iter().map(|b| b.x_s).collect(),
    })
}

fn noisy(v: &[f64], sd: f64, rng: &mut Rng) -> Vec<f64> {
    v.iter().map(|&x| x + sd * rng.normal()).collect()
}

#[derive(Default)]
struct Caches(BTreeMap<Modality, FeatureCache>);

impl Caches {
    fn new(dims: &EmbeddingDims) -> Self {
        Caches(Modality::ALL.iter().map(|&m| (m, FeatureCache::new(dims.get(m)))).collect())
    }

    fn add(&mut self, id: &str, s: &Subject) -> Result<()> {
        let c = &mut self.0;
        c.get_mut(&Modality::W2v).unwrap().push_f64(id, &s.w2v)?;
        c.get_mut(&Modality::Text).unwrap().push_f64(id, &s.text)?;
        for (n, (m, sp)) in s.mfcc.iter().zip(&s.spec).enumerate() {
            let sid = segment_id(id, n);
            c.get_mut(&Modality::Mfcc).unwrap().push_f64(&sid, m)?;
            c.get_mut(&Modality::Spec).unwrap().push_f64(&sid, sp)?;
        }
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (m, c) in &self.0 {
            c.write(dir.join(format!("{m}.mtas")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortFiles {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub augmented: BTreeMap<String, PathBuf>,
    pub caches: PathBuf,
    pub grid: PathBuf,
}

fn factor_key(f: f64) -> String {
    format!("{f}")
}

/// Write the cohort under `out`: `train.jsonl`, `test.jsonl`,
/// `train_aug_<f>.jsonl` with `plan_<f>.jsonl`, real-record caches in
/// `caches/`, synthetic-record caches in `aug_<f>/`, and `grid.json`.
///
/// A synthetic record takes its acoustic vectors from the voice donor and
/// its text vector from the transcript donor, each with added noise.
pub fn write_synthetic_cohort(spec: &CohortSpec, out: impl AsRef<Path>) -> Result<CohortFiles> {
    let out = out.as_ref();
    spec.dims.validate()?;
    if spec.n_train < 4 || spec.n_test < 2 || spec.segments == 0 {
        return Err(Error::InvalidArgument(
            "need at least 4 training subjects, 2 test subjects and 1 segment".into(),
        ));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let gen = SyntheticGenerator::new(DEFAULT_DIRECTION_SEED ^ spec.seed, spec.dims);
    let mut caches = Caches::new(&spec.dims);
    let mut subjects: HashMap<String, Subject> = HashMap::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (split, n, prefix) in [(Split::Train, spec.n_train, "tr"), (Split::Test, spec.n_test, "te")] {
        for i in 0..n {
            let id = format!("{prefix}{i:04}");
            let label = if i % 2 == 0 { Label::Ad } else { Label::Cn };
            let s = draw_subject(&gen, spec, &id, label)?;
            caches.add(&id, &s)?;
            let rec = ManifestRecord::new(CohortItem::real(&id, label), split);
            if split == Split::Train {
                subjects.insert(id, s);
                train.push(rec);
            } else {
                test.push(rec);
            }
        }
    }
    let caches_dir = out.join("caches");
    caches.write(&caches_dir)?;
    let train_manifest = out.join("train.jsonl");
    let test_manifest = out.join("test.jsonl");
    write_manifest(&train, &train_manifest)?;
    write_manifest(&test, &test_manifest)?;

    let real: Vec<CohortItem> = train.iter().map(|r| r.item.clone()).collect();
    let mut augmented = BTreeMap::new();
    augmented.insert(factor_key(1.0), train_manifest.clone());
    for &f in &spec.factors {
        let key = factor_key(f);
        let plan = plan_pairs(&real, f, spec.seed)?;
        write_plan(&plan, out.join(format!("plan_{key}.jsonl")))?;
        let aug_dir = format!("aug_{key}");
        let mut aug = Caches::new(&spec.dims);
        let mut synthetic = Vec::with_capacity(plan.records.len());
        for p in &plan.records {
            let voice = &subjects[&p.voice_id];
            let words = &subjects[&p.transcript_id];
            let mut rng = Rng::derived(spec.seed, &format!("donor.{key}.{}", p.synth_id));
            let sd = spec.donor_noise;
            let s = Subject {
                w2v: noisy(&voice.w2v, sd, &mut rng),
                mfcc: voice.mfcc.iter().map(|v| noisy(v, sd, &mut rng)).collect(),
                spec: voice.spec.iter().map(|v| noisy(v, sd, &mut rng)).collect(),
                text: noisy(&words.text, sd, &mut rng),
            };
            aug.add(&p.synth_id, &s)?;
            synthetic.push(CohortItem {
                source: Source::Synthetic,
                voice_of: Some(p.voice_id.clone()),
                transcript_of: Some(p.transcript_id.clone()),
                ..CohortItem::real(&p.synth_id, p.label)
            });
        }
        aug.write(&out.join(&aug_dir))?;
        let merged = merge_augmented(&real, &synthetic)?;
        let records: Vec<ManifestRecord> = merged
            .items
            .into_iter()
            .map(|item| {
                let synthetic = item.source == Source::Synthetic;
                let mut r = ManifestRecord::new(item, Split::Train);
                if synthetic {
                    r.cache_refs = Some(
                        Modality::ALL
                            .iter()
                            .map(|&m| (m, PathBuf::from(&aug_dir).join(format!("{m}.mtas"))))
                            .collect(),
                    );
                }
                r
            })
            .collect();
        let path = out.join(format!("train_aug_{key}.jsonl"));
        write_manifest(&records, &path)?;
        augmented.insert(key, path);
    }

    let rel = |p: &Path| p.strip_prefix(out).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let grid_spec = GridSpec {
        test_manifest: rel(&test_manifest),
        caches: PathBuf::from("caches"),
        test_caches: None,
        manifests: augmented.iter().map(|(k, p)| (k.clone(), rel(p))).collect(),
        cells: spec.cells.clone(),
    };
    let grid = out.join("grid.json");
    std::fs::write(&grid, serde_json::to_string_pretty(&grid_spec)?).map_err(|e| Error::io(&grid, e))?;
    Ok(CohortFiles {
        train_manifest,
        test_manifest,
        augmented,
        caches: caches_dir,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::data::{resolve_samples, CacheSet};
    use crate::harness::manifest::parse_manifest;
    use crate::model::{MfccFeature, ModelConfig};

    fn small() -> CohortSpec {
        CohortSpec {
            n_train: 8,
            n_test: 4,
            dims: EmbeddingDims {
                d_w: 3,
                d_m: 4,
                d_s: 5,
                d_t: 6,
            },
            factors: vec![2.0],
            segments: 2,
            ..Default::default()
        }
    }

    #[test]
    fn cohort_resolves_with_segments_and_refs() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let files = write_synthetic_cohort(&spec, dir.path()).unwrap();
        let cfg = ModelConfig {
            dims: spec.dims,
            ..Default::default()
        };
        let recs = parse_manifest(&files.augmented["2"]).unwrap();
        assert_eq!(recs.len(), 16);
        let mut caches = CacheSet::new(&files.caches);
        let samples = resolve_samples(&recs, &mut caches, &cfg).unwrap();
        assert_eq!(samples.len(), 32);
        assert_eq!(samples[0].id, "tr0000");
        assert_eq!(samples[1].id, "tr0000@1");
        assert_eq!(samples[1].subject, "tr0000");
        // Recording-level vectors are shared across segments.
        assert_eq!(samples[0].w, samples[1].w);
        let (MfccFeature::Embedding(a), MfccFeature::Embedding(b)) = (&samples[0].mfcc, &samples[1].mfcc) else {
            panic!()
        };
        assert_ne!(a, b);

        let grid = GridSpec::load(&files.grid).unwrap();
        assert_eq!(grid.manifest_for(2.0).unwrap(), files.augmented["2"]);
    }

    #[test]
    fn cohort_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_synthetic_cohort(&small(), a.path()).unwrap();
        write_synthetic_cohort(&small(), b.path()).unwrap();
        for f in ["train_aug_2.jsonl", "plan_2.jsonl", "caches/text.mtas", "aug_2/mfcc.mtas"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }
}
