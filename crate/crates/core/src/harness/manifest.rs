use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::CohortItem;
use crate::error::{Error, Result};
use crate::types::{Modality, Source};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(flatten)]
    pub item: CohortItem,
    pub split: Split,
    /// Per-modality cache files overriding `<caches>/<modality>.mtas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_refs: Option<BTreeMap<Modality, PathBuf>>,
    /// Unrecognized keys, kept so rewriting a manifest loses nothing.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl ManifestRecord {
    pub fn new(item: CohortItem, split: Split) -> Self {
        ManifestRecord {
            item,
            split,
            cache_refs: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.item.id
    }
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Read and validate a JSON-lines manifest. Relative paths are taken relative
/// to the manifest's directory.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let at = |line: usize, message: String| Error::Manifest {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ManifestRecord = serde_json::from_str(line).map_err(|e| at(n, e.to_string()))?;
        if rec.item.id.is_empty() {
            return Err(at(n, "empty id".into()));
        }
        if !seen.insert(rec.item.id.clone()) {
            return Err(at(n, format!("duplicate id {:?}", rec.item.id)));
        }
        if rec.split == Split::Test && rec.item.source == Source::Synthetic {
            return Err(at(
                n,
                format!("synthetic record {:?} in the test split (only training data is augmented)", rec.item.id),
            ));
        }
        rec.item.check_provenance().map_err(|e| at(n, e.to_string()))?;
        if let Some(p) = rec.item.audio.as_mut() {
            absolutize(base, p);
        }
        if let Some(p) = rec.item.transcript_path.as_mut() {
            absolutize(base, p);
        }
        if let Some(refs) = rec.cache_refs.as_mut() {
            refs.values_mut().for_each(|p| absolutize(base, p));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Label;

    fn parse(text: &str) -> Result<Vec<ManifestRecord>> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, text).unwrap();
        parse_manifest(&p)
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn missing_label_cites_line() {
        let text = "{\"id\":\"a\",\"label\":\"AD\",\"split\":\"train\"}\n{\"id\":\"b\",\"split\":\"train\"}\n";
        match parse(text) {
            Err(Error::Manifest { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("label"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_synthetic_test_records() {
        let dup = "{\"id\":\"a\",\"label\":\"AD\",\"split\":\"train\"}\n{\"id\":\"a\",\"label\":\"CN\",\"split\":\"test\"}\n";
        assert!(matches!(parse(dup), Err(Error::Manifest { line: 2, .. })));
        let syn = r#"{"id":"s","label":"AD","split":"test","source":"synthetic","voice_of":"a","transcript_of":"b"}"#;
        let err = parse(syn).unwrap_err();
        assert!(err.to_string().contains("synthetic"), "{err}");
        let ok = syn.replace("\"test\"", "\"train\"");
        assert_eq!(parse(&ok).unwrap()[0].item.source, Source::Synthetic);
    }

    #[test]
    fn unknown_fields_survive_a_rewrite() {
        let text = r#"{"id":"a","label":"CN","split":"train","mmse":28,"site":"x","audio":"/abs/a.wav"}"#;
        let recs = parse(text).unwrap();
        assert_eq!(recs[0].extra["mmse"], 28);
        assert_eq!(recs[0].item.label, Label::Cn);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.jsonl");
        write_manifest(&recs, &p).unwrap();
        assert_eq!(parse_manifest(&p).unwrap(), recs);
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        std::fs::write(&p, r#"{"id":"a","label":"AD","split":"train","audio":"wav/a.wav","cache_refs":{"text":"c/t.mtas"}}"#).unwrap();
        let r = &parse_manifest(&p).unwrap()[0];
        assert_eq!(r.item.audio.as_deref(), Some(dir.path().join("wav/a.wav").as_path()));
        assert_eq!(r.cache_refs.as_ref().unwrap()[&Modality::Text], dir.path().join("c/t.mtas"));
    }
}
