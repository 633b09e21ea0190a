//! Central finite-difference gradient checking.

use super::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Outcome of comparing analytic and numeric gradients for every element of
/// every input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub elements: usize,
}

/// Elementwise relative error with an absolute floor so that entries whose
/// true gradient is ~0 do not dominate.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Builds the scalar loss `f(inputs)` once for the analytic gradient and
/// `2 * n` more times for the central differences with the given step.
pub fn check<F>(inputs: &[Tensor], f: F, step: f64, floor: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t)).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out)[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(&t.clone().with_grad())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;

    let mut report = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        elements: 0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (ti, &v) in vars.iter().enumerate() {
        let analytic = g
            .grad(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[ti].len()]);
        for (e, &a) in analytic.iter().enumerate() {
            let orig = probe[ti].data()[e];
            probe[ti].data_mut()[e] = orig + step;
            let up = eval(&probe)?;
            probe[ti].data_mut()[e] = orig - step;
            let down = eval(&probe)?;
            probe[ti].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            report.max_rel_err = report.max_rel_err.max(rel_err(a, numeric, floor));
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            report.elements += 1;
        }
    }
    Ok(report)
}
