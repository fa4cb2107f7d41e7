//! The four per-sample embeddings: a trainable BiLSTM over MFCC frames, a
//! patch-pool fallback for spectrogram images, loaders for externally
//! computed vectors, and a Gaussian generator for synthetic cohorts.

use serde::{Deserialize, Serialize};

use crate::cache::FeatureCache;
use crate::dsp::{MfccSequence, SpectrogramImage, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::tensor::{init_linear, lstm_cell, Graph, LinearParams, LstmParams, ParamStore, Rng, Tensor, Var};
use crate::types::{Label, Modality, Source};

pub const PATCH: usize = 16;
pub const POOLED_DIM: usize = (IMAGE_SIZE / PATCH) * (IMAGE_SIZE / PATCH);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingDims {
    pub d_w: usize,
    pub d_m: usize,
    pub d_s: usize,
    pub d_t: usize,
}

impl Default for EmbeddingDims {
    fn default() -> Self {
        EmbeddingDims {
            d_w: 768,
            d_m: 128,
            d_s: 1000,
            d_t: 1024,
        }
    }
}

impl EmbeddingDims {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::W2v => self.d_w,
            Modality::Mfcc => self.d_m,
            Modality::Spec => self.d_s,
            Modality::Text => self.d_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in Modality::ALL {
            if self.get(m) == 0 {
                return Err(Error::Validation(format!("embedding dim for {m} must be positive")));
            }
        }
        Ok(())
    }
}

/// One sample's four modality vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBundle {
    pub sample_id: String,
    pub label: Label,
    pub source: Source,
    pub x_w: Vec<f64>,
    pub x_m: Vec<f64>,
    pub x_s: Vec<f64>,
    pub x_t: Vec<f64>,
}

impl EmbeddingBundle {
    pub fn get(&self, m: Modality) -> &[f64] {
        match m {
            Modality::W2v => &self.x_w,
            Modality::Mfcc => &self.x_m,
            Modality::Spec => &self.x_s,
            Modality::Text => &self.x_t,
        }
    }

    pub fn get_mut(&mut self, m: Modality) -> &mut Vec<f64> {
        match m {
            Modality::W2v => &mut self.x_w,
            Modality::Mfcc => &mut self.x_m,
            Modality::Spec => &mut self.x_s,
            Modality::Text => &mut self.x_t,
        }
    }

    pub fn validate(&self, dims: &EmbeddingDims) -> Result<()> {
        for m in Modality::ALL {
            let v = self.get(m);
            if v.len() != dims.get(m) {
                return Err(Error::DimensionMismatch {
                    id: format!("{} ({m})", self.sample_id),
                    expected: dims.get(m),
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{m} embedding of {}", self.sample_id)));
            }
        }
        Ok(())
    }
}

/// Stacked bidirectional LSTM over MFCC frames followed by a projection of
/// the top layer's final states.
#[derive(Clone, Debug, PartialEq)]
pub struct MfccEncoderParams {
    /// `layers[l] = [forward, backward]`.
    pub layers: Vec<[LstmParams; 2]>,
    pub proj: LinearParams,
    pub n_mfcc: usize,
    pub hidden: usize,
}

impl MfccEncoderParams {
    /// Registers `enc.mfcc.l<i>.{fwd,bwd}.*` and `enc.mfcc.proj.*`.
    pub fn init(
        store: &mut ParamStore,
        n_mfcc: usize,
        hidden: usize,
        n_layers: usize,
        d_m: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_layers == 0 || hidden == 0 || n_mfcc == 0 {
            return Err(Error::InvalidArgument(
                "MFCC encoder needs at least one layer and positive widths".into(),
            ));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let d_in = if l == 0 { n_mfcc } else { 2 * hidden };
            let fwd = LstmParams::init(store, &format!("enc.mfcc.l{l}.fwd"), d_in, hidden, rng)?;
            let bwd = LstmParams::init(store, &format!("enc.mfcc.l{l}.bwd"), d_in, hidden, rng)?;
            layers.push([fwd, bwd]);
        }
        let proj = init_linear(store, "enc.mfcc.proj", 2 * hidden, d_m, rng)?;
        Ok(MfccEncoderParams {
            layers,
            proj,
            n_mfcc,
            hidden,
        })
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        self.proj.out_dim(store)
    }

    /// Encode a batch of sequences into a `B × d_m` variable. Sequences of
    /// equal length run as one batched recurrence; mixed lengths fall back to
    /// one pass per sequence.
    pub fn encode_batch(&self, g: &mut Graph, store: &ParamStore, seqs: &[&MfccSequence]) -> Result<Var> {
        if seqs.is_empty() {
            return Err(Error::InvalidArgument("empty MFCC batch".into()));
        }
        for s in seqs {
            if s.n_mfcc() != self.n_mfcc {
                return Err(Error::shape(
                    "encode_mfcc",
                    format!("sequence has {} coefficients, encoder expects {}", s.n_mfcc(), self.n_mfcc),
                ));
            }
        }
        let t0 = seqs[0].num_frames();
        if seqs.iter().all(|s| s.num_frames() == t0) {
            return self.encode_uniform(g, store, seqs);
        }
        let parts = seqs
            .iter()
            .map(|s| self.encode_uniform(g, store, std::slice::from_ref(s)))
            .collect::<Result<Vec<_>>>()?;
        g.concat_rows(&parts)
    }

    pub fn encode(&self, g: &mut Graph, store: &ParamStore, seq: &MfccSequence) -> Result<Var> {
        self.encode_batch(g, store, &[seq])
    }

    fn encode_uniform(&self, g: &mut Graph, store: &ParamStore, seqs: &[&MfccSequence]) -> Result<Var> {
        let b = seqs.len();
        let t_len = seqs[0].num_frames();
        if t_len == 0 {
            return Err(Error::InvalidArgument("empty MFCC sequence".into()));
        }
        let mut inputs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let data = seqs.iter().flat_map(|s| s.frame(t).iter().copied()).collect();
            inputs.push(g.constant(Tensor::new(b, self.n_mfcc, data)?)?);
        }
        let zero = g.constant(Tensor::zeros(b, self.hidden))?;

        let mut fwd_states = Vec::new();
        let mut bwd_states = Vec::new();
        for [fwd, bwd] in &self.layers {
            fwd_states = run_direction(g, store, fwd, &inputs, zero, false)?;
            bwd_states = run_direction(g, store, bwd, &inputs, zero, true)?;
            inputs = fwd_states
                .iter()
                .zip(&bwd_states)
                .map(|(&f, &b)| g.concat_cols(&[f, b]))
                .collect::<Result<_>>()?;
        }
        let last = g.concat_cols(&[fwd_states[t_len - 1], bwd_states[0]])?;
        self.proj.forward(g, store, last)
    }

    /// Inference-only convenience returning a plain vector.
    pub fn encode_values(&self, store: &ParamStore, seq: &MfccSequence) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let v = self.encode(&mut g, store, seq)?;
        Ok(g.value(v).data().to_vec())
    }
}

/// Hidden states of one LSTM direction, indexed by time step.
fn run_direction(
    g: &mut Graph,
    store: &ParamStore,
    p: &LstmParams,
    inputs: &[Var],
    zero: Var,
    reverse: bool,
) -> Result<Vec<Var>> {
    let n = inputs.len();
    let mut out = vec![zero; n];
    let (mut h, mut c) = (zero, zero);
    for step in 0..n {
        let t = if reverse { n - 1 - step } else { step };
        (h, c) = lstm_cell(g, store, p, inputs[t], h, c)?;
        out[t] = h;
    }
    Ok(out)
}

/// Mean of each non-overlapping 16×16 patch, row-major over the 14×14 grid.
pub fn pool_patches(img: &SpectrogramImage) -> Vec<f64> {
    let grid = IMAGE_SIZE / PATCH;
    let mut out = vec![0.0; grid * grid];
    for (pr, row) in out.chunks_mut(grid).enumerate() {
        for (pc, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for r in pr * PATCH..(pr + 1) * PATCH {
                for c in pc * PATCH..(pc + 1) * PATCH {
                    s += img.get(r, c);
                }
            }
            *v = s / (PATCH * PATCH) as f64;
        }
    }
    out
}

/// Patch pooling (fixed) followed by a trainable linear map to `d_s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecFallbackParams {
    pub proj: LinearParams,
}

impl SpecFallbackParams {
    /// Registers `enc.spec.proj.*`.
    pub fn init(store: &mut ParamStore, d_s: usize, rng: &mut Rng) -> Result<Self> {
        Ok(SpecFallbackParams {
            proj: init_linear(store, "enc.spec.proj", POOLED_DIM, d_s, rng)?,
        })
    }

    /// `pooled` is `B × 196`, as produced by [`pool_patches`].
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, pooled: Var) -> Result<Var> {
        if g.value(pooled).cols() != POOLED_DIM {
            return Err(Error::shape(
                "encode_spectrogram",
                format!("pooled width {} != {POOLED_DIM}", g.value(pooled).cols()),
            ));
        }
        self.proj.forward(g, store, pooled)
    }
}

pub fn encode_spectrogram_fallback(
    img: &SpectrogramImage,
    store: &ParamStore,
    params: &SpecFallbackParams,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::row_vector(pool_patches(img))?)?;
    let y = params.encode(&mut g, store, x)?;
    Ok(g.value(y).data().to_vec())
}

/// Fetch a precomputed vector, checking the cache dimension first.
pub fn load_external_embedding(
    cache: &FeatureCache,
    modality: Modality,
    sample_id: &str,
    expected_dim: usize,
) -> Result<Vec<f64>> {
    if cache.dim() != expected_dim {
        return Err(Error::DimensionMismatch {
            id: format!("{sample_id} ({modality})"),
            expected: expected_dim,
            found: cache.dim(),
        });
    }
    cache.get_f64(sample_id).ok_or_else(|| Error::MissingEmbedding {
        id: sample_id.to_owned(),
        modality: modality.to_string(),
    })
}

/// Class separation (distance between class means) per modality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub w: f64,
    pub m: f64,
    pub s: f64,
    pub t: f64,
}

impl Separation {
    pub fn uniform(sep: f64) -> Self {
        Separation {
            w: sep,
            m: sep,
            s: sep,
            t: sep,
        }
    }

    /// `sep` on one modality, zero elsewhere.
    pub fn only(m: Modality, sep: f64) -> Self {
        let mut s = Separation::uniform(0.0);
        match m {
            Modality::W2v => s.w = sep,
            Modality::Mfcc => s.m = sep,
            Modality::Spec => s.s = sep,
            Modality::Text => s.t = sep,
        }
        s
    }

    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::W2v => self.w,
            Modality::Mfcc => self.m,
            Modality::Spec => self.s,
            Modality::Text => self.t,
        }
    }
}

pub const DEFAULT_DIRECTION_SEED: u64 = 0x6d6f_7461_735f_6469;

/// Unit-variance Gaussian classes whose means sit at `±separation/2` along a
/// fixed unit direction per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticGenerator {
    dims: EmbeddingDims,
    directions: [Vec<f64>; 4],
}

impl SyntheticGenerator {
    pub fn new(direction_seed: u64, dims: EmbeddingDims) -> Self {
        let directions = Modality::ALL.map(|m| {
            let mut rng = Rng::derived(direction_seed, &format!("direction.{m}"));
            let mut u: Vec<f64> = (0..dims.get(m)).map(|_| rng.normal()).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            u
        });
        SyntheticGenerator { dims, directions }
    }

    pub fn dims(&self) -> &EmbeddingDims {
        &self.dims
    }

    pub fn direction(&self, m: Modality) -> &[f64] {
        &self.directions[m as usize]
    }

    pub fn sample(
        &self,
        seed: u64,
        sample_id: impl Into<String>,
        label: Label,
        separation: &Separation,
    ) -> Result<EmbeddingBundle> {
        for m in Modality::ALL {
            if !(separation.get(m) >= 0.0) {
                return Err(Error::InvalidArgument(format!("separation for {m} must be >= 0")));
            }
        }
        let mut rng = Rng::derived(seed, "synth.sample");
        let sign = if label == Label::Ad { 0.5 } else { -0.5 };
        let mut vecs = Modality::ALL.map(|m| {
            let shift = sign * separation.get(m);
            self.direction(m).iter().map(|&u| shift * u + rng.normal()).collect::<Vec<f64>>()
        });
        let take = |v: &mut Vec<f64>| std::mem::take(v);
        Ok(EmbeddingBundle {
            sample_id: sample_id.into(),
            label,
            source: Source::Real,
            x_w: take(&mut vecs[0]),
            x_m: take(&mut vecs[1]),
            x_s: take(&mut vecs[2]),
            x_t: take(&mut vecs[3]),
        })
    }
}

/// One synthetic bundle with the same separation on every modality.
pub fn synth_embeddings(seed: u64, label: Label, separation: f64, dims: EmbeddingDims) -> Result<EmbeddingBundle> {
    SyntheticGenerator::new(DEFAULT_DIRECTION_SEED, dims).sample(
        seed,
        format!("synth_{seed}"),
        label,
        &Separation::uniform(separation),
    )
}
