//! Mini-batch joint optimization, early stopping and checkpointing.

mod adam;
mod checkpoint;
mod config;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::TrainConfig;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataset::{sample_bpr_triples, BprTriple, InteractionDataset};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, Split};
use crate::model::{
    forward, score_pairs, sub_seed, target_embeddings, GraphSet, ModelOptions, ModelParams,
    ParamVars,
};
use crate::objective::{
    active_contrastive_terms, bpr_loss, inter_behavior_loss, intra_behavior_loss, l2_regularizer,
    total_loss, ContrastiveBatch, LossTerms, LossWeights, PoolMode,
};
use crate::tensor::Scalar;

/// Sampling stream for one epoch. Independent of earlier epochs, so a run
/// resumed at an epoch boundary draws the same batches.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, 1 << 32 | epoch))
}

/// One step's worth of sampled triples, one list per behavior.
#[derive(Clone, Debug, PartialEq)]
pub struct StepBatch {
    pub triples: Vec<Vec<BprTriple>>,
    /// Sorted distinct users across all triples.
    pub users: Vec<usize>,
    /// Sorted distinct positive and negative items across all triples.
    pub items: Vec<usize>,
}

impl StepBatch {
    pub fn new(triples: Vec<Vec<BprTriple>>) -> Self {
        let mut users = BTreeSet::new();
        let mut items = BTreeSet::new();
        for t in triples.iter().flatten() {
            users.insert(t.user as usize);
            items.insert(t.pos_item as usize);
            items.insert(t.neg_item as usize);
        }
        Self {
            triples,
            users: users.into_iter().collect(),
            items: items.into_iter().collect(),
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(
        ds: &InteractionDataset,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let triples = (0..ds.num_behaviors())
            .map(|k| sample_bpr_triples(ds, k, batch_size, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(triples))
    }
}

/// Builds the full training objective for `batch` on `tape`.
pub fn build_loss<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    graphs: &GraphSet<T>,
    batch: &StepBatch,
    weights: &LossWeights,
    opts: &ModelOptions,
    pool: PoolMode,
) -> Result<(Var, LossTerms)> {
    let out = forward(tape, vars, graphs, opts)?;
    let mut terms = LossTerms::default();
    for (k, triples) in batch.triples.iter().enumerate() {
        let users: Vec<usize> = triples.iter().map(|t| t.user as usize).collect();
        let pos: Vec<usize> = triples.iter().map(|t| t.pos_item as usize).collect();
        let neg: Vec<usize> = triples.iter().map(|t| t.neg_item as usize).collect();
        let e_bar = out.behaviors[k].e_bar;
        let s_pos = score_pairs(tape, e_bar, &users, &pos)?;
        let s_neg = score_pairs(tape, e_bar, &users, &neg)?;
        terms.bpr.push(bpr_loss(tape, s_pos, s_neg)?);
    }

    let (use_gb, use_gh, use_bh) = active_contrastive_terms(weights, &opts.ablations);
    let cb = ContrastiveBatch {
        users: batch.users.clone(),
        items: batch.items.clone(),
        pool,
    };
    if use_gb || use_gh {
        let (gb, gh) = inter_behavior_loss(tape, &out, &cb, weights.tau)?;
        terms.gb = use_gb.then_some(gb);
        terms.gh = if use_gh { gh } else { None };
    }
    if use_bh {
        terms.bh = intra_behavior_loss(tape, &out, &cb, weights.tau)?;
    }
    if weights.beta != 0.0 {
        terms.reg = Some(l2_regularizer(tape, vars, &batch.users, &batch.items)?);
    }
    let total = total_loss(tape, &terms, weights)?;
    Ok((total, terms))
}

/// Mean per-term losses. Terms that are switched off read 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub bpr: f64,
    pub gb: f64,
    pub gh: f64,
    pub bh: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossReport {
    fn accumulate(&mut self, other: &LossReport) {
        self.bpr += other.bpr;
        self.gb += other.gb;
        self.gh += other.gh;
        self.bh += other.bh;
        self.reg += other.reg;
        self.total += other.total;
    }

    fn scaled(mut self, c: f64) -> Self {
        for v in [
            &mut self.bpr,
            &mut self.gb,
            &mut self.gh,
            &mut self.bh,
            &mut self.reg,
            &mut self.total,
        ] {
            *v *= c;
        }
        self
    }
}

/// One forward/backward pass and Adam update. Returns the step's losses.
pub fn train_step<T: Scalar>(
    params: &mut ModelParams<T>,
    adam: &mut AdamState<T>,
    graphs: &GraphSet<T>,
    batch: &StepBatch,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    let weights = cfg.loss_weights();
    let mut tape = Tape::new();
    let vars = params.attach(&mut tape, true);
    let (total, terms) = build_loss(
        &mut tape,
        &vars,
        graphs,
        batch,
        &weights,
        &cfg.model_options(),
        cfg.negative_pool,
    )?;
    let read = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v).to_f64().unwrap_or(f64::NAN));
    let report = LossReport {
        bpr: terms.bpr.iter().map(|&v| read(Some(v))).sum(),
        gb: read(terms.gb),
        gh: read(terms.gh),
        bh: read(terms.bh),
        reg: read(terms.reg),
        total: read(Some(total)),
    };
    if !report.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss at optimizer step {}: bpr={} gb={} gh={} bh={} reg={}",
            adam.step + 1,
            report.bpr,
            report.gb,
            report.gh,
            report.bh,
            report.reg
        )));
    }
    tape.backward(total)?;
    let grads: Vec<_> = vars.all().into_iter().map(|v| tape.take_grad(v)).collect();
    let sparse: Vec<bool> = (0..grads.len()).map(|i| i < 2).collect();
    adam_step(&mut params.tensors_mut(), &grads, &sparse, adam, cfg.lr)?;
    Ok(report)
}

/// Number of optimizer steps in one epoch, keyed to the target behavior.
pub fn steps_per_epoch(ds: &InteractionDataset, batch_size: usize) -> usize {
    ds.train_edges[ds.target_index()].len().div_ceil(batch_size)
}

/// Runs one epoch and returns the mean losses over its steps.
pub fn train_epoch<T: Scalar, R: rand::Rng + ?Sized>(
    params: &mut ModelParams<T>,
    adam: &mut AdamState<T>,
    graphs: &GraphSet<T>,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossReport> {
    let steps = steps_per_epoch(ds, cfg.batch_size);
    let mut sum = LossReport::default();
    for _ in 0..steps {
        let batch = StepBatch::sample(ds, cfg.batch_size, rng)?;
        sum.accumulate(&train_step(params, adam, graphs, &batch, cfg)?);
    }
    Ok(sum.scaled(1.0 / steps.max(1) as f64))
}

/// Validation numbers used for model selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValMetrics {
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: u64,
    pub loss: LossReport,
    pub val: ValMetrics,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// State after the epoch with the best validation HR.
    pub best: Checkpoint,
    /// State after the final epoch.
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Fresh parameters and optimizer state for `cfg` on `ds`.
pub fn initial_checkpoint(
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    config_hash: u64,
) -> Result<Checkpoint> {
    let mut params = ModelParams::<f32>::init(
        ds.num_users,
        ds.num_items,
        ds.num_behaviors(),
        cfg.dim,
        cfg.hyperedges,
        cfg.seed,
    )?;
    if cfg.init_scale != 1.0 {
        let c = cfg.init_scale as f32;
        for t in params.tensors_mut() {
            *t = t.map(|v| v * c);
        }
    }
    let adam = AdamState::zeros_like(&params.tensors());
    Ok(Checkpoint {
        config_hash,
        epoch: 0,
        params,
        adam,
    })
}

/// Validation HR@10 / NDCG@10 with the model's target embeddings.
pub fn validate(
    params: &ModelParams<f32>,
    graphs: &GraphSet<f32>,
    ds: &InteractionDataset,
    opts: &ModelOptions,
) -> Result<ValMetrics> {
    let (u, i) = target_embeddings(params, graphs, opts)?;
    let r = evaluate(&u, &i, ds, Split::Val, &[10])?;
    Ok(ValMetrics {
        hr: r.hr_at(10),
        ndcg: r.ndcg_at(10),
    })
}

/// Trains from `start` until `max_epochs` or until validation HR has not
/// improved for `patience` epochs, scoring each epoch with `evaluator`.
///
/// Early-stopping bookkeeping starts fresh, so resuming from a checkpoint
/// reproduces the uninterrupted parameter trajectory but not its stopping
/// point.
pub fn fit_with_evaluator<F>(
    start: Checkpoint,
    graphs: &GraphSet<f32>,
    ds: &InteractionDataset,
    cfg: &TrainConfig,
    mut evaluator: F,
) -> Result<FitResult>
where
    F: FnMut(&ModelParams<f32>, u64) -> Result<ValMetrics>,
{
    cfg.validate()?;
    if ds.eval_users.is_empty() {
        return Err(Error::Contract("no evaluation users for model selection".into()));
    }
    if let Some(msg) = cfg.loss_weights().lambda_sum_warning() {
        log::warn!("{msg}");
    }
    let mut state = start;
    let mut best = state.clone();
    let mut best_hr = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut stopped_early = false;
    while state.epoch < cfg.max_epochs as u64 {
        let mut rng = epoch_rng(cfg.seed, state.epoch);
        let loss = train_epoch(
            &mut state.params,
            &mut state.adam,
            graphs,
            ds,
            cfg,
            &mut rng,
        )?;
        state.epoch += 1;
        let val = evaluator(&state.params, state.epoch)?;
        log::info!(
            "epoch {} loss {:.5} val hr@10 {:.4} ndcg@10 {:.4}",
            state.epoch,
            loss.total,
            val.hr,
            val.ndcg
        );
        history.push(EpochRecord {
            epoch: state.epoch,
            loss,
            val,
        });
        if val.hr > best_hr {
            best_hr = val.hr;
            best = state.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(FitResult {
        best,
        last: state,
        history,
        stopped_early,
    })
}

/// [`fit_with_evaluator`] with validation HR@10 as the selection metric,
/// starting from freshly initialized parameters.
pub fn fit(ds: &InteractionDataset, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    let graphs = GraphSet::<f32>::build(ds)?;
    let hash = cfg.config_hash(&ds.fingerprint());
    let start = initial_checkpoint(ds, cfg, hash)?;
    let opts = cfg.model_options();
    fit_with_evaluator(start, &graphs, ds, cfg, |p, _| validate(p, &graphs, ds, &opts))
}
