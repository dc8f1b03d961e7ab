//! Gradient self-check of the complete training objective on a fixed toy.

use crate::autodiff::{finite_diff_check, Fault, GradCheckReport};
use crate::error::Result;
use crate::model::{Ablations, GraphSet, ModelOptions, ModelParams, ParamVars};
use crate::objective::{LossWeights, PoolMode};
use crate::synthetic::{gradcheck_toy, gradcheck_triples};
use crate::trainer::{build_loss, StepBatch};

pub const TOLERANCE: f64 = 1e-4;
pub const STEP: f64 = 1e-5;

pub const TOY_DIM: usize = 4;
pub const TOY_HYPEREDGES: usize = 3;
pub const TOY_LAYERS: usize = 2;
pub const TOY_SEED: u64 = 7;
/// Shrinks the Xavier draw so the cubic hypergraph term stays O(1) on a
/// graph this small.
pub const TOY_INIT_SCALE: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct GradCheckOutcome {
    pub report: GradCheckReport,
    /// Parameter holding the worst entry.
    pub worst_param: String,
    pub per_param: Vec<(String, f64)>,
    pub passed: bool,
}

/// Checks every parameter's gradient of the full loss, with all terms
/// switched on unless `ablations` removes them.
pub fn run_gradcheck(ablations: Ablations, fault: Fault) -> Result<GradCheckOutcome> {
    let ds = gradcheck_toy()?;
    let graphs = GraphSet::<f64>::build(&ds)?;
    let params = ModelParams::<f64>::init(
        ds.num_users,
        ds.num_items,
        ds.num_behaviors(),
        TOY_DIM,
        TOY_HYPEREDGES,
        TOY_SEED,
    )?;
    let names = params.names();
    let leaves: Vec<_> = params
        .tensors()
        .into_iter()
        .map(|t| t.map(|v| v * TOY_INIT_SCALE))
        .collect();
    let batch = StepBatch::new(gradcheck_triples());
    let weights = LossWeights {
        alpha: 0.5,
        ..LossWeights::default()
    };
    let opts = ModelOptions::new(TOY_LAYERS, ablations);
    let report = finite_diff_check(
        |tape, vars| {
            let pv = ParamVars::from_slice(vars);
            let (loss, _) = build_loss(tape, &pv, &graphs, &batch, &weights, &opts, PoolMode::InBatch)?;
            Ok(loss)
        },
        &leaves,
        STEP,
        fault,
    )?;
    let worst_param = names[report.worst.0].clone();
    let per_param = names.into_iter().zip(report.per_leaf.iter().copied()).collect();
    let passed = report.max_rel_err < TOLERANCE;
    Ok(GradCheckOutcome {
        report,
        worst_param,
        per_param,
        passed,
    })
}
