//! Central-finite-difference verification of the reverse pass.
//!
//! A check builds the same scalar loss twice per perturbed element and
//! compares (f(x+h) - f(x-h)) / 2h against the recorded gradient. Builders
//! must be deterministic: any randomness is baked into captured tensors.

use alloc::string::String;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::graph::{Graph, GraphError, NodeId, ParamSet};

/// Worst relative error per parameter, plus the overall maximum.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub per_param: Vec<(String, f64)>,
}

/// Relative error with a small floor so near-zero gradients are compared
/// absolutely at the same tolerance scale.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Check every element of every parameter in `params` against central
/// differences of the loss produced by `build`.
pub fn grad_check<F>(params: &mut ParamSet, build: F, h: f64) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<NodeId, GraphError>,
{
    params.zero_grads();
    let mut graph = Graph::new();
    let loss = build(&mut graph, params)?;
    graph.backward(loss)?;
    graph.accumulate_grads_into(params, 1.0);

    let eval = |params: &ParamSet| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let loss = build(&mut g, params)?;
        Ok(g.value(loss).item())
    };

    let ids: Vec<_> = params.ids().collect();
    let mut per_param = Vec::new();
    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    for id in ids {
        let n = params.value(id).len();
        let mut worst = 0.0f64;
        for i in 0..n {
            let orig = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = orig + h;
            let f_plus = eval(params)?;
            params.value_mut(id).data_mut()[i] = orig - h;
            let f_minus = eval(params)?;
            params.value_mut(id).data_mut()[i] = orig;
            let fd = (f_plus - f_minus) / (2.0 * h);
            let ad = params.grad(id).data()[i];
            worst = worst.max(rel_err(ad, fd));
        }
        let name = params.name(id).to_string();
        if worst > max_rel_err {
            max_rel_err = worst;
            worst_param = name.clone();
        }
        per_param.push((name, worst));
    }
    Ok(GradCheckReport { max_rel_err, worst_param, per_param })
}
