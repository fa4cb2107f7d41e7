use super::{Graph, ParamId, ParamStore, Rng, Tensor, Var};
use crate::error::{Error, Result};

fn uniform_tensor(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::new(rows, cols, data).expect("positive dims")
}

/// Weight `out × in` and bias `1 × out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w)?;
        let b = g.param(store, self.b)?;
        g.linear(x, w, Some(b))
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w).cols()
    }

    pub fn out_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w).rows()
    }
}

/// Register `<prefix>.w` and `<prefix>.b`, both uniform in ±1/√fan_in.
pub fn init_linear(
    store: &mut ParamStore,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut Rng,
) -> Result<LinearParams> {
    init_linear_named(store, &format!("{prefix}.w"), &format!("{prefix}.b"), d_in, d_out, rng)
}

pub fn init_linear_named(
    store: &mut ParamStore,
    w_name: &str,
    b_name: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut Rng,
) -> Result<LinearParams> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "linear layer {w_name} needs positive dims, got {d_in} -> {d_out}"
        )));
    }
    let bound = 1.0 / (d_in as f64).sqrt();
    let w = store.insert(w_name, uniform_tensor(d_out, d_in, bound, rng))?;
    let b = store.insert(b_name, uniform_tensor(1, d_out, bound, rng))?;
    Ok(LinearParams { w, b })
}

/// One LSTM direction. Gate rows are stacked in the order input, forget,
/// cell candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    /// Weights uniform in ±1/√hidden, forget-gate bias 1.0.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.insert(
            format!("{prefix}.w_ih"),
            uniform_tensor(4 * hidden, d_in, bound, rng),
        )?;
        let w_hh = store.insert(
            format!("{prefix}.w_hh"),
            uniform_tensor(4 * hidden, hidden, bound, rng),
        )?;
        let mut bias = uniform_tensor(1, 4 * hidden, bound, rng);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.insert(format!("{prefix}.b"), bias)?;
        Ok(LstmParams {
            w_ih,
            w_hh,
            b,
            hidden,
        })
    }

    pub fn in_dim(&self, store: &ParamStore) -> usize {
        store.get(self.w_ih).cols()
    }
}

/// One LSTM step over a batch: `x: B × in`, `h, c: B × hidden`.
///
/// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
/// Gradients through repeated calls give full backpropagation through time.
pub fn lstm_cell(
    graph: &mut Graph,
    store: &ParamStore,
    params: &LstmParams,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let hd = params.hidden;
    if graph.value(h_prev).cols() != hd || graph.value(c_prev).cols() != hd {
        return Err(Error::shape(
            "lstm_cell",
            format!(
                "state widths {} / {} for hidden size {hd}",
                graph.value(h_prev).cols(),
                graph.value(c_prev).cols()
            ),
        ));
    }
    let w_ih = graph.param(store, params.w_ih)?;
    let w_hh = graph.param(store, params.w_hh)?;
    let b = graph.param(store, params.b)?;
    let from_x = graph.linear(x, w_ih, Some(b))?;
    let from_h = graph.linear(h_prev, w_hh, None)?;
    let gates = graph.add(from_x, from_h)?;

    let i_pre = graph.slice_cols(gates, 0, hd)?;
    let f_pre = graph.slice_cols(gates, hd, hd)?;
    let g_pre = graph.slice_cols(gates, 2 * hd, hd)?;
    let o_pre = graph.slice_cols(gates, 3 * hd, hd)?;
    let i = graph.sigmoid(i_pre)?;
    let f = graph.sigmoid(f_pre)?;
    let g = graph.tanh(g_pre)?;
    let o = graph.sigmoid(o_pre)?;

    let keep = graph.mul(f, c_prev)?;
    let write = graph.mul(i, g)?;
    let c = graph.add(keep, write)?;
    let c_act = graph.tanh(c)?;
    let h = graph.mul(o, c_act)?;
    Ok((h, c))
}
