use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Graph, ParamStore, Tensor, Var};
use crate::Result;

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Where the largest error occurred, e.g. `input 0[3]` or `conv.kernel[12]`.
    pub worst: String,
    pub checked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Perturbation is `step * max(1, |x|)`.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to rounding do not dominate.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, floor: 1e-4 }
    }
}

fn eval<F>(inputs: &[Tensor], store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect::<Result<_>>()?;
    let loss = f(&mut g, store, &vars)?;
    Ok(g.value(loss).data()[0])
}

/// Check every element of `inputs` and every trainable parameter of `store`
/// for the scalar function `f`. The function must be deterministic (no
/// dropout) for the comparison to be meaningful.
pub fn check_gradients<F>(inputs: &[Tensor], store: &mut ParamStore, cfg: GradCheckConfig, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect::<Result<_>>()?;
    let loss = f(&mut g, store, &vars)?;
    g.backward(loss, store)?;

    let mut out = GradCheck { max_rel_error: 0.0, worst: String::new(), checked: 0 };
    let mut record = |analytic: f64, numeric: f64, at: &dyn Fn() -> String| {
        let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(cfg.floor);
        let rel = libm::fabs(analytic - numeric) / denom;
        out.checked += 1;
        if rel > out.max_rel_error || out.worst.is_empty() {
            out.max_rel_error = rel.max(out.max_rel_error);
            out.worst = at();
        }
    };

    let mut perturbed = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = g.grad(*var).map_or_else(|| alloc::vec![0.0; inputs[k].len()], |t| t.data().to_vec());
        for e in 0..inputs[k].len() {
            let orig = inputs[k].data()[e];
            let h = cfg.step * libm::fabs(orig).max(1.0);
            perturbed[k].data_mut()[e] = orig + h;
            let up = eval(&perturbed, store, &f)?;
            perturbed[k].data_mut()[e] = orig - h;
            let down = eval(&perturbed, store, &f)?;
            perturbed[k].data_mut()[e] = orig;
            record(analytic[e], (up - down) / (2.0 * h), &|| format!("input {k}[{e}]"));
        }
    }

    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let analytic: Vec<f64> =
            store.get(id).grad.as_ref().map_or_else(|| alloc::vec![0.0; store.value(id).len()], |t| t.data().to_vec());
        for e in 0..analytic.len() {
            let orig = store.value(id).data()[e];
            let h = cfg.step * libm::fabs(orig).max(1.0);
            store.get_mut(id).value.data_mut()[e] = orig + h;
            let up = eval(inputs, store, &f)?;
            store.get_mut(id).value.data_mut()[e] = orig - h;
            let down = eval(inputs, store, &f)?;
            store.get_mut(id).value.data_mut()[e] = orig;
            let name = store.get(id).name.clone();
            record(analytic[e], (up - down) / (2.0 * h), &|| format!("{name}[{e}]"));
        }
    }
    Ok(out)
}
