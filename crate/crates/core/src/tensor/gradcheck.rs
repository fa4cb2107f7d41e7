use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many coordinates per parameter (evenly strided).
    /// `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            max_coords_per_param: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
    pub coords: Vec<CoordCheck>,
}

#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

impl GradCheckReport {
    /// Largest relative error among coordinates with `|a| + |b| >= floor`.
    pub fn max_rel_error_above(&self, floor: f64) -> f64 {
        self.coords
            .iter()
            .filter(|c| c.analytic.abs() + c.numeric.abs() >= floor)
            .fold(0.0, |m, c| m.max(c.rel_error))
    }
}

/// Compare reverse-mode gradients of `f` against central differences
/// `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h` for each coordinate, using the
/// relative error `|a − b| / max(1e-8, |a| + |b|)`.
///
/// `f` must build the same computation for the same parameter values (any
/// randomness such as dropout masks must be re-seeded inside `f`).
pub fn grad_check<F>(store: &ParamStore, opts: &GradCheckOptions, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut graph = Graph::new();
    let out = f(&mut graph, store)?;
    let grads = graph.backward(out)?.params(&graph);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let v = f(&mut g, s)?;
        let y = g.value(v).item();
        if !y.is_finite() {
            return Err(Error::NonFinite("grad_check probe".into()));
        }
        Ok(y)
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
        coords: Vec::new(),
    };
    for id in store.ids() {
        let n = store.get(id).len();
        let stride = match opts.max_coords_per_param {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        for i in (0..n).step_by(stride) {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + opts.h;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - opts.h;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * opts.h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            report.coords_checked += 1;
            report.coords.push(CoordCheck {
                param: store.name(id).to_string(),
                index: i,
                analytic,
                numeric,
                rel_error: rel,
            });
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
