//! Late fusion of the compressed modalities with the raw speech embedding and
//! the three-layer classification head.

use crate::error::{Error, Result};
use crate::tensor::{init_linear, Graph, LinearParams, ParamStore, Rng, Tensor, Var};
use crate::types::Label;

pub const DEFAULT_H1: usize = 256;
pub const DEFAULT_H2: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.3;

/// Concatenate `[mfcc | spec | text | w]` as plain vectors.
pub fn fuse(m: &[f64], s: &[f64], t: &[f64], w: &[f64], d_e: usize, d_w: usize) -> Result<Vec<f64>> {
    for (name, v, want) in [("mfcc", m, d_e), ("spec", s, d_e), ("text", t, d_e), ("w2v", w, d_w)] {
        if v.len() != want {
            return Err(Error::shape("fuse", format!("{name} part has {} values, expected {want}", v.len())));
        }
    }
    Ok([m, s, t, w].concat())
}

/// Graph version of [`fuse`] over `B`-row batches.
pub fn fuse_vars(g: &mut Graph, m: Var, s: Var, t: Var, w: Var, d_e: usize, d_w: usize) -> Result<Var> {
    for (name, v, want) in [("mfcc", m, d_e), ("spec", s, d_e), ("text", t, d_e), ("w2v", w, d_w)] {
        let cols = g.value(v).cols();
        if cols != want {
            return Err(Error::shape("fuse", format!("{name} part has width {cols}, expected {want}")));
        }
    }
    g.concat_cols(&[m, s, t, w])
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub fc1: LinearParams,
    pub fc2: LinearParams,
    pub fc3: LinearParams,
    pub dropout_p: f64,
}

impl MlpParams {
    /// Registers `mlp.fc{1,2,3}.{w,b}`.
    pub fn init(
        store: &mut ParamStore,
        d_in: usize,
        h1: usize,
        h2: usize,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidArgument(format!("dropout p must be in [0, 1), got {dropout_p}")));
        }
        Ok(MlpParams {
            fc1: init_linear(store, "mlp.fc1", d_in, h1, rng)?,
            fc2: init_linear(store, "mlp.fc2", h1, h2, rng)?,
            fc3: init_linear(store, "mlp.fc3", h2, 1, rng)?,
            dropout_p,
        })
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        self.fc1.in_dim(store)
    }

    /// `σ(FC3(Dropout(ReLU(FC2(ReLU(FC1(x)))))))`, giving a `B × 1` column of
    /// probabilities. Dropout is the identity unless `training`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let want = self.in_dim(store);
        if g.value(x).cols() != want {
            return Err(Error::shape(
                "mlp_forward",
                format!("input width {} != {want}", g.value(x).cols()),
            ));
        }
        let h = self.fc1.forward(g, store, x)?;
        let h = g.relu(h)?;
        let h = self.fc2.forward(g, store, h)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, self.dropout_p, training, rng)?;
        let logit = self.fc3.forward(g, store, h)?;
        g.sigmoid(logit)
    }

    pub fn forward_values(&self, store: &ParamStore, x: &[f64]) -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::row_vector(x.to_vec())?)?;
        let y = self.forward(&mut g, store, xv, false, &mut Rng::new(0))?;
        Ok(g.value(y).item())
    }
}

/// Ties go to the positive class.
pub fn predict(prob: f64, threshold: f64) -> Label {
    if prob >= threshold {
        Label::Ad
    } else {
        Label::Cn
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mlp(d_in: usize) -> (ParamStore, MlpParams) {
        let mut store = ParamStore::new();
        let p = MlpParams::init(&mut store, d_in, 8, 4, 0.3, &mut Rng::new(1)).unwrap();
        (store, p)
    }

    #[test]
    fn fuse_layout() {
        let m = vec![1.0; 128];
        let s = vec![2.0; 128];
        let t = vec![3.0; 128];
        let w = vec![4.0; 768];
        let f = fuse(&m, &s, &t, &w, 128, 768).unwrap();
        assert_eq!(f.len(), 1152);
        assert_eq!(&f[0..128], &m[..]);
        assert_eq!(&f[128..256], &s[..]);
        assert_eq!(&f[256..384], &t[..]);
        assert_eq!(&f[384..], &w[..]);
        assert!(fuse(&m, &s, &t, &w[..767], 128, 768).is_err());
        let z = fuse(&[0.0; 2], &[0.0; 2], &[0.0; 2], &[0.0; 3], 2, 3).unwrap();
        assert_eq!(z, vec![0.0; 9]);
    }

    #[test]
    fn zero_params_give_half() {
        let (mut store, p) = mlp(6);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let [r, c] = store.get(id).shape();
            store.set(id, Tensor::zeros(r, c)).unwrap();
        }
        assert_eq!(p.forward_values(&store, &[0.3; 6]).unwrap(), 0.5);
        store.set(p.fc3.b, Tensor::scalar(10.0)).unwrap();
        let y = p.forward_values(&store, &[0.3; 6]).unwrap();
        assert!((y - 0.9999546021312976).abs() < 1e-12);
    }

    #[test]
    fn inference_ignores_rng() {
        let (store, p) = mlp(6);
        let x = Tensor::row_vector(vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        let run = |seed| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone()).unwrap();
            let y = p.forward(&mut g, &store, xv, false, &mut Rng::new(seed)).unwrap();
            g.value(y).item()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn wrong_width_and_dropout_rejected() {
        let (store, p) = mlp(6);
        assert!(p.forward_values(&store, &[0.0; 5]).is_err());
        let mut s = ParamStore::new();
        assert!(MlpParams::init(&mut s, 3, 2, 2, 1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(predict(0.7, 0.5), Label::Ad);
        assert_eq!(predict(0.5, 0.5), Label::Ad);
        assert_eq!(predict(0.49999, 0.5), Label::Cn);
    }
}
