//! Per-modality mixture of experts with dense softmax gating.
//!
//! For an input row `x`: `y_i = W2·ReLU(W1·x + b1) + b2`,
//! `w = softmax(W_g·x + b_g)`, output `Σ_i w_i·y_i`. All `k` experts run on
//! every input.

use crate::error::{Error, Result};
use crate::tensor::{init_linear_named, Graph, LinearParams, ParamId, ParamStore, Rng, Tensor, Var};
use crate::types::Modality;

pub const DEFAULT_EXPERTS: usize = 3;
pub const DEFAULT_EXPERT_HIDDEN: usize = 64;
pub const DEFAULT_EXPERT_OUT: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpertParams {
    pub fc1: LinearParams,
    pub fc2: LinearParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GatingParams {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoeLayer {
    pub modality: Modality,
    pub experts: Vec<ExpertParams>,
    pub gate: GatingParams,
    pub d_x: usize,
    pub d_e: usize,
}

impl MoeLayer {
    /// Registers `moe.<m>.expert<i>.{w1,b1,w2,b2}` and `moe.<m>.gate.{w,b}`.
    pub fn init(
        store: &mut ParamStore,
        modality: Modality,
        d_x: usize,
        k: usize,
        hidden: usize,
        d_e: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if modality == Modality::W2v {
            return Err(Error::InvalidArgument(
                "the deep speech embedding bypasses the expert layers".into(),
            ));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one expert".into()));
        }
        let mut experts = Vec::with_capacity(k);
        for i in 0..k {
            let p = format!("moe.{modality}.expert{i}");
            let fc1 = init_linear_named(store, &format!("{p}.w1"), &format!("{p}.b1"), d_x, hidden, rng)?;
            let fc2 = init_linear_named(store, &format!("{p}.w2"), &format!("{p}.b2"), hidden, d_e, rng)?;
            experts.push(ExpertParams { fc1, fc2 });
        }
        let g = init_linear_named(
            store,
            &format!("moe.{modality}.gate.w"),
            &format!("moe.{modality}.gate.b"),
            d_x,
            k,
            rng,
        )?;
        Ok(MoeLayer {
            modality,
            experts,
            gate: GatingParams { w: g.w, b: g.b },
            d_x,
            d_e,
        })
    }

    pub fn k(&self) -> usize {
        self.experts.len()
    }

    fn check_input(&self, g: &Graph, x: Var, modality: Modality) -> Result<()> {
        if modality != self.modality {
            return Err(Error::InvalidArgument(format!(
                "{modality} input passed to the {} expert layer",
                self.modality
            )));
        }
        let cols = g.value(x).cols();
        if cols != self.d_x {
            return Err(Error::shape(
                "moe_forward",
                format!("{modality} input width {cols}, layer expects {}", self.d_x),
            ));
        }
        Ok(())
    }

    /// `B × d_x → B × d_e` for one expert.
    pub fn expert_forward(&self, g: &mut Graph, store: &ParamStore, x: Var, i: usize) -> Result<Var> {
        let e = &self.experts[i];
        let h = e.fc1.forward(g, store, x)?;
        let h = g.relu(h)?;
        e.fc2.forward(g, store, h)
    }

    /// `B × d_x → B × k`, each row on the simplex.
    pub fn gate(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.gate.w)?;
        let b = g.param(store, self.gate.b)?;
        let logits = g.linear(x, w, Some(b))?;
        g.softmax_rows(logits)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, modality: Modality) -> Result<Var> {
        self.check_input(g, x, modality)?;
        let weights = self.gate(g, store, x)?;
        let mut acc: Option<Var> = None;
        for i in 0..self.k() {
            let y = self.expert_forward(g, store, x, i)?;
            let wi = g.slice_cols(weights, i, 1)?;
            let term = g.scale_rows(y, wi)?;
            acc = Some(match acc {
                Some(a) => g.add(a, term)?,
                None => term,
            });
        }
        Ok(acc.expect("k >= 1"))
    }

    pub fn forward_values(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::row_vector(x.to_vec())?)?;
        let y = self.forward(&mut g, store, xv, self.modality)?;
        Ok(g.value(y).data().to_vec())
    }

    pub fn gate_values(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::row_vector(x.to_vec())?)?;
        self.check_input(&g, xv, self.modality)?;
        let w = self.gate(&mut g, store, xv)?;
        Ok(g.value(w).data().to_vec())
    }

    pub fn expert_values(&self, store: &ParamStore, x: &[f64], i: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::row_vector(x.to_vec())?)?;
        self.check_input(&g, xv, self.modality)?;
        let y = self.expert_forward(&mut g, store, xv, i)?;
        Ok(g.value(y).data().to_vec())
    }
}

/// One expert layer per compressed modality.
#[derive(Clone, Debug, PartialEq)]
pub struct MoeLayers {
    pub mfcc: MoeLayer,
    pub spec: MoeLayer,
    pub text: MoeLayer,
}

impl MoeLayers {
    pub fn get(&self, m: Modality) -> Option<&MoeLayer> {
        match m {
            Modality::Mfcc => Some(&self.mfcc),
            Modality::Spec => Some(&self.spec),
            Modality::Text => Some(&self.text),
            Modality::W2v => None,
        }
    }
}

/// Applies the three layers independently. Any mismatch fails the whole call
/// before anything is computed.
pub fn moe_apply_all(
    g: &mut Graph,
    store: &ParamStore,
    layers: &MoeLayers,
    x_m: Var,
    x_s: Var,
    x_t: Var,
) -> Result<(Var, Var, Var)> {
    layers.mfcc.check_input(g, x_m, Modality::Mfcc)?;
    layers.spec.check_input(g, x_s, Modality::Spec)?;
    layers.text.check_input(g, x_t, Modality::Text)?;
    Ok((
        layers.mfcc.forward(g, store, x_m, Modality::Mfcc)?,
        layers.spec.forward(g, store, x_s, Modality::Spec)?,
        layers.text.forward(g, store, x_t, Modality::Text)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::softmax;
    use crate::tensor::{grad_check, GradCheckOptions};

    fn layer(k: usize, d_x: usize, seed: u64) -> (ParamStore, MoeLayer) {
        let mut store = ParamStore::new();
        let l = MoeLayer::init(&mut store, Modality::Text, d_x, k, 6, 4, &mut Rng::new(seed)).unwrap();
        (store, l)
    }

    fn rand_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    fn zero_all(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let [r, c] = store.get(id).shape();
            store.set(id, Tensor::zeros(r, c)).unwrap();
        }
    }

    #[test]
    fn names_and_shapes() {
        let (store, _) = layer(3, 5, 1);
        assert_eq!(store.by_name("moe.text.expert2.w1").unwrap().shape(), [6, 5]);
        assert_eq!(store.by_name("moe.text.expert0.b2").unwrap().shape(), [1, 4]);
        assert_eq!(store.by_name("moe.text.gate.w").unwrap().shape(), [3, 5]);
        assert_eq!(store.by_name("moe.text.gate.b").unwrap().shape(), [1, 3]);
        assert_eq!(store.len(), 3 * 4 + 2);
    }

    #[test]
    fn expert_zero_and_bias_only() {
        let (mut store, l) = layer(2, 5, 2);
        zero_all(&mut store);
        let x = rand_vec(5, &mut Rng::new(3));
        assert_eq!(l.expert_values(&store, &x, 0).unwrap(), vec![0.0; 4]);
        let b2 = store.id("moe.text.expert0.b2").unwrap();
        store.set(b2, Tensor::row_vector(vec![1.0, -2.0, 0.5, 3.0]).unwrap()).unwrap();
        assert_eq!(l.expert_values(&store, &x, 0).unwrap(), vec![1.0, -2.0, 0.5, 3.0]);
    }

    /// Double-loop evaluation of one expert straight from the parameter store.
    fn expert_oracle(store: &ParamStore, i: usize, x: &[f64]) -> Vec<f64> {
        let p = |n: &str| store.by_name(&format!("moe.text.expert{i}.{n}")).unwrap();
        let (w1, b1, w2, b2) = (p("w1"), p("b1"), p("w2"), p("b2"));
        let mut h = vec![0.0; w1.rows()];
        for (r, hr) in h.iter_mut().enumerate() {
            let mut s = b1.data()[r];
            for (c, xc) in x.iter().enumerate() {
                s += w1.get(r, c) * xc;
            }
            *hr = s.max(0.0);
        }
        (0..w2.rows())
            .map(|r| b2.data()[r] + (0..h.len()).map(|c| w2.get(r, c) * h[c]).sum::<f64>())
            .collect()
    }

    #[test]
    fn expert_matches_loop_oracle() {
        let (store, l) = layer(3, 5, 4);
        let x = rand_vec(5, &mut Rng::new(5));
        for i in 0..3 {
            let got = l.expert_values(&store, &x, i).unwrap();
            for (a, b) in got.iter().zip(expert_oracle(&store, i, &x)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gate_examples() {
        let (mut store, l) = layer(3, 5, 6);
        zero_all(&mut store);
        let x = rand_vec(5, &mut Rng::new(7));
        for w in l.gate_values(&store, &x).unwrap() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        store.set(l.gate.b, Tensor::row_vector(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let w = l.gate_values(&store, &x).unwrap();
        for (a, b) in w.iter().zip([0.09003057317038046, 0.24472847105479767, 0.6652409557748219]) {
            assert!((a - b).abs() < 1e-12);
        }
        let (store1, l1) = layer(1, 5, 8);
        assert_eq!(l1.gate_values(&store1, &x).unwrap(), vec![1.0]);
    }

    #[test]
    fn mixture_compositions() {
        let x = rand_vec(5, &mut Rng::new(9));

        let (store, l) = layer(1, 5, 10);
        assert_eq!(l.forward_values(&store, &x).unwrap(), l.expert_values(&store, &x, 0).unwrap());

        let (store, l) = layer(3, 5, 11);
        let w = l.gate_values(&store, &x).unwrap();
        let ys: Vec<_> = (0..3).map(|i| l.expert_values(&store, &x, i).unwrap()).collect();
        let got = l.forward_values(&store, &x).unwrap();
        for j in 0..4 {
            let want: f64 = (0..3).map(|i| w[i] * ys[i][j]).sum();
            assert!((got[j] - want).abs() < 1e-12);
        }

        let mut uniform = store.clone();
        uniform.set(l.gate.w, Tensor::zeros(3, 5)).unwrap();
        uniform.set(l.gate.b, Tensor::zeros(1, 3)).unwrap();
        let got = l.forward_values(&uniform, &x).unwrap();
        for j in 0..4 {
            let mean = ys.iter().map(|y| y[j]).sum::<f64>() / 3.0;
            assert!((got[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn modality_and_width_checks() {
        let (store, l) = layer(2, 5, 12);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(1, 5)).unwrap();
        assert!(l.forward(&mut g, &store, x, Modality::Spec).is_err());
        let bad = g.constant(Tensor::zeros(1, 4)).unwrap();
        assert!(l.forward(&mut g, &store, bad, Modality::Text).is_err());
        let mut s = ParamStore::new();
        assert!(MoeLayer::init(&mut s, Modality::W2v, 3, 2, 2, 2, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (store, l) = layer(3, 5, 13);
        let mut rng = Rng::new(14);
        let x = Tensor::new(4, 5, rand_vec(20, &mut rng)).unwrap();
        let report = grad_check(&store, &GradCheckOptions::default(), |g, s| {
            let xv = g.constant(x.clone())?;
            let y = l.forward(g, s, xv, Modality::Text)?;
            let y = g.tanh(y)?;
            g.sum(y)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn softmax_reference_agrees() {
        let w = softmax(&[1.0, 2.0, 3.0]);
        assert!((w[2] - 0.6652409557748219).abs() < 1e-15);
    }
}
