//! The full classifier: optional built-in encoders, per-modality compression
//! (expert layers or a plain projection), fusion and the MLP head.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::FeatureCache;
use crate::dsp::MfccSequence;
use crate::encoders::{EmbeddingBundle, EmbeddingDims, MfccEncoderParams, SpecFallbackParams, POOLED_DIM};
use crate::error::{Error, Result};
use crate::fusion::{fuse_vars, MlpParams};
use crate::moe::{moe_apply_all, MoeLayer, MoeLayers};
use crate::tensor::{init_linear, Graph, LinearParams, ParamStore, Rng, Tensor, Var};
use crate::types::{Label, Modality};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfccInput {
    /// Precomputed `d_m` vector from a cache.
    #[default]
    Embedding,
    /// Raw MFCC frames through the built-in BiLSTM.
    Sequence,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecInput {
    #[default]
    Embedding,
    /// Patch-pooled image through the built-in linear fallback.
    Image,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dims: EmbeddingDims,
    pub d_e: usize,
    pub k: usize,
    pub expert_hidden: usize,
    pub moe_enabled: bool,
    pub mlp_h1: usize,
    pub mlp_h2: usize,
    pub dropout_p: f64,
    pub mfcc_input: MfccInput,
    pub spec_input: SpecInput,
    pub n_mfcc: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dims: EmbeddingDims::default(),
            d_e: 128,
            k: 3,
            expert_hidden: 64,
            moe_enabled: true,
            mlp_h1: 256,
            mlp_h2: 64,
            dropout_p: 0.3,
            mfcc_input: MfccInput::Embedding,
            spec_input: SpecInput::Embedding,
            n_mfcc: 13,
            lstm_hidden: 128,
            lstm_layers: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let positive = [
            ("d_e", self.d_e),
            ("k", self.k),
            ("expert_hidden", self.expert_hidden),
            ("mlp_h1", self.mlp_h1),
            ("mlp_h2", self.mlp_h2),
            ("n_mfcc", self.n_mfcc),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Validation(format!("dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        Ok(())
    }

    pub fn fusion_dim(&self) -> usize {
        3 * self.d_e + self.dims.d_w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MfccFeature {
    Embedding(Vec<f64>),
    Sequence(MfccSequence),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpecFeature {
    Embedding(Vec<f64>),
    /// 196 patch means of a spectrogram image.
    Pooled(Vec<f64>),
}

/// One training or evaluation unit (a segment). `subject` groups segments for
/// subject-level scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub subject: String,
    pub label: Label,
    pub w: Vec<f64>,
    pub mfcc: MfccFeature,
    pub spec: SpecFeature,
    pub text: Vec<f64>,
}

impl From<EmbeddingBundle> for Sample {
    fn from(b: EmbeddingBundle) -> Self {
        Sample {
            subject: b.sample_id.clone(),
            id: b.sample_id,
            label: b.label,
            w: b.x_w,
            mfcc: MfccFeature::Embedding(b.x_m),
            spec: SpecFeature::Embedding(b.x_s),
            text: b.x_t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Compression {
    Moe(MoeLayers),
    /// `proj.<modality>.{w,b}`: one linear map per modality.
    Linear {
        mfcc: LinearParams,
        spec: LinearParams,
        text: LinearParams,
    },
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub mfcc_encoder: Option<MfccEncoderParams>,
    pub spec_encoder: Option<SpecFallbackParams>,
    pub compression: Compression,
    pub mlp: MlpParams,
}

impl Model {
    /// Each component draws from its own stream, so toggling the expert
    /// layers leaves encoder and head initialization unchanged.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config;
        let mut store = ParamStore::new();
        let mfcc_encoder = match c.mfcc_input {
            MfccInput::Sequence => Some(MfccEncoderParams::init(
                &mut store,
                c.n_mfcc,
                c.lstm_hidden,
                c.lstm_layers,
                c.dims.d_m,
                &mut Rng::derived(seed, "init.enc.mfcc"),
            )?),
            MfccInput::Embedding => None,
        };
        let spec_encoder = match c.spec_input {
            SpecInput::Image => Some(SpecFallbackParams::init(
                &mut store,
                c.dims.d_s,
                &mut Rng::derived(seed, "init.enc.spec"),
            )?),
            SpecInput::Embedding => None,
        };
        let compression = if c.moe_enabled {
            let mut layer = |m: Modality| {
                let mut rng = Rng::derived(seed, &format!("init.moe.{m}"));
                MoeLayer::init(&mut store, m, c.dims.get(m), c.k, c.expert_hidden, c.d_e, &mut rng)
            };
            Compression::Moe(MoeLayers {
                mfcc: layer(Modality::Mfcc)?,
                spec: layer(Modality::Spec)?,
                text: layer(Modality::Text)?,
            })
        } else {
            let mut proj = |m: Modality| {
                let mut rng = Rng::derived(seed, &format!("init.proj.{m}"));
                init_linear(&mut store, &format!("proj.{m}"), c.dims.get(m), c.d_e, &mut rng)
            };
            Compression::Linear {
                mfcc: proj(Modality::Mfcc)?,
                spec: proj(Modality::Spec)?,
                text: proj(Modality::Text)?,
            }
        };
        let mlp = MlpParams::init(
            &mut store,
            c.fusion_dim(),
            c.mlp_h1,
            c.mlp_h2,
            c.dropout_p,
            &mut Rng::derived(seed, "init.mlp"),
        )?;
        Ok(Model {
            config: config.clone(),
            store,
            mfcc_encoder,
            spec_encoder,
            compression,
            mlp,
        })
    }

    fn stack(batch: &[&Sample], dim: usize, m: Modality, pick: impl Fn(&Sample) -> Option<&[f64]>) -> Result<Tensor> {
        let mut data = Vec::with_capacity(batch.len() * dim);
        for s in batch {
            let Some(v) = pick(s) else {
                return Err(Error::Validation(format!(
                    "sample {} has the wrong {m} input kind for this model",
                    s.id
                )));
            };
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    id: format!("{} ({m})", s.id),
                    expected: dim,
                    found: v.len(),
                });
            }
            data.extend_from_slice(v);
        }
        Tensor::new(batch.len(), dim, data)
    }

    /// Probabilities (`B × 1`) for a batch, evaluated against `store` (which
    /// must share this model's layout).
    pub fn forward_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &[&Sample],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let c = &self.config;
        let x_w = g.constant(Self::stack(batch, c.dims.d_w, Modality::W2v, |s| Some(&s.w))?)?;
        let x_t = g.constant(Self::stack(batch, c.dims.d_t, Modality::Text, |s| Some(&s.text))?)?;
        let x_m = match &self.mfcc_encoder {
            None => g.constant(Self::stack(batch, c.dims.d_m, Modality::Mfcc, |s| match &s.mfcc {
                MfccFeature::Embedding(v) => Some(v),
                MfccFeature::Sequence(_) => None,
            })?)?,
            Some(enc) => {
                let seqs = batch
                    .iter()
                    .map(|s| match &s.mfcc {
                        MfccFeature::Sequence(q) => Ok(q),
                        MfccFeature::Embedding(_) => Err(Error::Validation(format!(
                            "sample {} has an MFCC embedding but the model expects frames",
                            s.id
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                enc.encode_batch(g, store, &seqs)?
            }
        };
        let x_s = match &self.spec_encoder {
            None => g.constant(Self::stack(batch, c.dims.d_s, Modality::Spec, |s| match &s.spec {
                SpecFeature::Embedding(v) => Some(v),
                SpecFeature::Pooled(_) => None,
            })?)?,
            Some(enc) => {
                let pooled = g.constant(Self::stack(batch, POOLED_DIM, Modality::Spec, |s| match &s.spec {
                    SpecFeature::Pooled(v) => Some(v),
                    SpecFeature::Embedding(_) => None,
                })?)?;
                enc.encode(g, store, pooled)?
            }
        };
        let (m, s, t) = match &self.compression {
            Compression::Moe(layers) => moe_apply_all(g, store, layers, x_m, x_s, x_t)?,
            Compression::Linear { mfcc, spec, text } => (
                mfcc.forward(g, store, x_m)?,
                spec.forward(g, store, x_s)?,
                text.forward(g, store, x_t)?,
            ),
        };
        let fused = fuse_vars(g, m, s, t, x_w, c.d_e, c.dims.d_w)?;
        self.mlp.forward(g, store, fused, training, rng)
    }

    pub fn forward(&self, g: &mut Graph, batch: &[&Sample], training: bool, rng: &mut Rng) -> Result<Var> {
        self.forward_with(g, &self.store, batch, training, rng)
    }

    /// Summed binary cross-entropy over the batch.
    pub fn loss_batch_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &[&Sample],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let probs = self.forward_with(g, store, batch, training, rng)?;
        let labels: Vec<f64> = batch.iter().map(|s| s.label.target()).collect();
        g.bce(probs, &labels)
    }

    pub fn loss_batch(&self, batch: &[&Sample]) -> Result<f64> {
        let mut g = Graph::new();
        let l = self.loss_batch_with(&mut g, &self.store, batch, false, &mut Rng::new(0))?;
        Ok(g.value(l).item())
    }

    /// Inference probabilities, one per sample, in order.
    pub fn predict_proba(&self, samples: &[&Sample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(256) {
            let mut g = Graph::new();
            let p = self.forward(&mut g, chunk, false, &mut Rng::new(0))?;
            out.extend_from_slice(g.value(p).data());
        }
        Ok(out)
    }

    /// Parameter names and shapes outside the compression block.
    pub fn shared_inventory(&self) -> Vec<(String, [usize; 2])> {
        self.store
            .inventory()
            .into_iter()
            .filter(|(n, _)| !n.starts_with("moe.") && !n.starts_with("proj."))
            .collect()
    }

    /// Sidecar holding the model configuration next to a checkpoint.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Parameters go in consecutive cache containers, one per flattened
    /// length, ids being parameter names. Values are narrowed to `f32`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut groups: Vec<FeatureCache> = Vec::new();
        for (_, name, t) in self.store.iter() {
            let pos = match groups.iter().position(|c| c.dim() == t.len()) {
                Some(i) => i,
                None => {
                    groups.push(FeatureCache::new(t.len()));
                    groups.len() - 1
                }
            };
            groups[pos].push_f64(name, t.data())?;
        }
        let mut bytes = Vec::new();
        for g in &groups {
            bytes.extend(g.to_bytes()?);
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.config)?;
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = Self::sidecar_path(path);
        let json = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let config: ModelConfig = serde_json::from_str(&json)?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut values: HashMap<String, Vec<f64>> = HashMap::new();
        let mut rest = &bytes[..];
        while !rest.is_empty() {
            let (cache, used) = FeatureCache::decode_prefix(rest)?;
            rest = &rest[used..];
            for (id, row) in cache.iter() {
                if values.insert(id.to_owned(), row.iter().map(|&v| f64::from(v)).collect()).is_some() {
                    return Err(Error::DuplicateId(id.to_owned()));
                }
            }
        }
        let mut model = Model::init(&config, 0)?;
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let name = model.store.name(id).to_owned();
            let [r, c] = model.store.get(id).shape();
            let v = values.remove(&name).ok_or_else(|| {
                Error::Validation(format!("checkpoint {} lacks parameter {name}", path.display()))
            })?;
            if v.len() != r * c {
                return Err(Error::DimensionMismatch {
                    id: name,
                    expected: r * c,
                    found: v.len(),
                });
            }
            model.store.set(id, Tensor::new(r, c, v)?)?;
        }
        if let Some(extra) = values.keys().next() {
            return Err(Error::Validation(format!(
                "checkpoint {} has unknown parameter {extra}",
                path.display()
            )));
        }
        Ok(model)
    }
}
