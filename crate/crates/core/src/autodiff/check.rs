use crate::error::Result;
use crate::tensor::Tensor;

use super::{Fault, Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Leaf index and flat element index of the worst entry.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Worst relative error per leaf.
    pub per_leaf: Vec<f64>,
}

/// Compares analytic gradients of `f` against central differences.
///
/// `f` builds a scalar on the given tape from leaves created for `leaves`.
/// Numeric evaluations replay every `stop_gradient` value recorded during
/// the analytic pass, so the reference is the detached function whose
/// derivative the stopped graph is supposed to compute.
pub fn finite_diff_check<F>(
    f: F,
    leaves: &[Tensor<f64>],
    step: f64,
    fault: Fault,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new().with_fault(fault);
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad_or_zeros(v)).collect();
    let frozen = tape.stopped_values().to_vec();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::replaying(frozen.clone());
        let vs: Vec<Var> = perturbed.iter().map(|x| t.constant(x.clone())).collect();
        let r = f(&mut t, &vs)?;
        Ok(t.scalar(r))
    };

    let mut work: Vec<Tensor<f64>> = leaves.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        per_leaf: vec![0.0; leaves.len()],
    };
    for leaf in 0..leaves.len() {
        for e in 0..leaves[leaf].data().len() {
            let orig = leaves[leaf].data()[e];
            work[leaf].data_mut()[e] = orig + step;
            let plus = eval(&work)?;
            work[leaf].data_mut()[e] = orig - step;
            let minus = eval(&work)?;
            work[leaf].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[leaf].data()[e];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if rel > report.per_leaf[leaf] {
                report.per_leaf[leaf] = rel;
            }
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = rel;
                report.worst = (leaf, e);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
