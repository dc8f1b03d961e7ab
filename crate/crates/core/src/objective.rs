//! BPR ranking loss, the three InfoNCE consistency terms and their weighted
//! combination with L2 regularization.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{Ablation, Ablations, ForwardOutputs, ParamVars};
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            beta: 1e-3,
            tau: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("beta", self.beta),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// Lambdas are searched on a grid whose coordinates sum to 3; anything
    /// else is allowed but reported.
    pub fn lambda_sum_warning(&self) -> Option<String> {
        let sum = self.lambda1 + self.lambda2 + self.lambda3;
        ((sum - 3.0).abs() > 1e-9).then(|| format!("lambda1+lambda2+lambda3 = {sum}, not 3"))
    }
}

/// Which embeddings serve as contrastive negatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// The other users (items) of the current batch.
    #[default]
    InBatch,
    /// Every user (item).
    Full,
}

/// `Σ_b −ln σ(pos_b − neg_b)`
pub fn bpr_loss<T: Scalar>(tape: &mut Tape<T>, pos: Var, neg: Var) -> Result<Var> {
    let diff = tape.sub(pos, neg)?;
    let ls = tape.log_sigmoid(diff);
    let total = tape.reduce_sum(ls);
    Ok(tape.neg(total))
}

/// Temperature-scaled InfoNCE with cosine similarity.
///
/// Row `b` of `anchor` is contrasted against every row of `pool`; its
/// positive is `pool[positive[b]]`.
pub fn info_nce<T: Scalar>(
    tape: &mut Tape<T>,
    anchor: Var,
    pool: Var,
    positive: &[usize],
    tau: f64,
) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be > 0, got {tau}")));
    }
    let a = tape.row_l2_normalize(anchor);
    let p = tape.row_l2_normalize(pool);
    let sim = tape.matmul_nt(a, p)?;
    let logits = tape.scale(sim, T::of(1.0 / tau));
    let lse = tape.row_logsumexp(logits)?;
    let pos = tape.pick_cols(logits, positive)?;
    let per_anchor = tape.sub(lse, pos)?;
    Ok(tape.reduce_sum(per_anchor))
}

/// Users and items whose embeddings enter the contrastive terms this step.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveBatch {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub pool: PoolMode,
}

fn side_nce<T: Scalar>(
    tape: &mut Tape<T>,
    anchor_table: Var,
    pool_table: Var,
    ids: &[usize],
    mode: PoolMode,
    tau: f64,
) -> Result<Var> {
    let anchor = tape.gather_rows(anchor_table, ids)?;
    match mode {
        PoolMode::InBatch => {
            let pool = tape.gather_rows(pool_table, ids)?;
            let positive: Vec<usize> = (0..ids.len()).collect();
            info_nce(tape, anchor, pool, &positive, tau)
        }
        PoolMode::Full => info_nce(tape, anchor, pool_table, ids, tau),
    }
}

/// Σ over behaviors of the user-side plus item-side InfoNCE between
/// `anchors` and `positives`, summed in behavior order.
fn contrast_all<T: Scalar>(
    tape: &mut Tape<T>,
    pairs: &[(crate::model::Side, crate::model::Side)],
    batch: &ContrastiveBatch,
    tau: f64,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(2 * pairs.len());
    for &(anchor, positive) in pairs {
        terms.push(side_nce(tape, anchor.user, positive.user, &batch.users, batch.pool, tau)?);
        terms.push(side_nce(tape, anchor.item, positive.item, &batch.items, batch.pool, tau)?);
    }
    tape.add_all(&terms)
}

/// Global-vs-interaction-graph and global-vs-hypergraph consistency. The
/// second term is absent when the model has no hypergraph branch.
pub fn inter_behavior_loss<T: Scalar>(
    tape: &mut Tape<T>,
    out: &ForwardOutputs,
    batch: &ContrastiveBatch,
    tau: f64,
) -> Result<(Var, Option<Var>)> {
    let gb: Vec<_> = out.behaviors.iter().map(|b| (out.e_g, b.e_b)).collect();
    let l_gb = contrast_all(tape, &gb, batch, tau)?;
    let gh: Option<Vec<_>> = out
        .behaviors
        .iter()
        .map(|b| b.e_h.map(|h| (out.e_g, h)))
        .collect();
    let l_gh = match gh {
        Some(pairs) => Some(contrast_all(tape, &pairs, batch, tau)?),
        None => None,
    };
    Ok((l_gb, l_gh))
}

/// Interaction-graph-vs-hypergraph consistency within each behavior.
pub fn intra_behavior_loss<T: Scalar>(
    tape: &mut Tape<T>,
    out: &ForwardOutputs,
    batch: &ContrastiveBatch,
    tau: f64,
) -> Result<Option<Var>> {
    let bh: Option<Vec<_>> = out
        .behaviors
        .iter()
        .map(|b| b.e_h.map(|h| (b.e_b, h)))
        .collect();
    match bh {
        Some(pairs) => Ok(Some(contrast_all(tape, &pairs, batch, tau)?)),
        None => Ok(None),
    }
}

/// Squared L2 norm of the embedding rows touched by the batch plus every
/// hyperedge projection.
pub fn l2_regularizer<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamVars,
    users: &[usize],
    items: &[usize],
) -> Result<Var> {
    let mut parts = Vec::new();
    let u = tape.gather_rows(params.user_emb, users)?;
    let i = tape.gather_rows(params.item_emb, items)?;
    parts.push(u);
    parts.push(i);
    for (&wu, &wi) in params.hyper_user.iter().zip(&params.hyper_item) {
        parts.push(wu);
        parts.push(wi);
    }
    let mut sums = Vec::with_capacity(parts.len());
    for p in parts {
        let sq = tape.hadamard(p, p)?;
        sums.push(tape.reduce_sum(sq));
    }
    tape.add_all(&sums)
}

/// The individual loss nodes of one step. Absent terms are switched off by
/// the ablations or by a zero weight.
#[derive(Clone, Debug, Default)]
pub struct LossTerms {
    pub bpr: Vec<Var>,
    pub gb: Option<Var>,
    pub gh: Option<Var>,
    pub bh: Option<Var>,
    pub reg: Option<Var>,
}

/// Which contrastive terms a configuration keeps.
pub fn active_contrastive_terms(weights: &LossWeights, ab: &Ablations) -> (bool, bool, bool) {
    let cl = weights.alpha != 0.0 && !ab.contains(Ablation::NoClAll);
    let cross = cl && !ab.contains(Ablation::NoClCross) && !ab.contains(Ablation::NoGlobal);
    let hyper = !ab.contains(Ablation::NoHyper);
    let gb = cross && weights.lambda1 != 0.0;
    let gh = cross && hyper && weights.lambda2 != 0.0;
    let bh = cl && hyper && !ab.contains(Ablation::NoClIntra) && weights.lambda3 != 0.0;
    (gb, gh, bh)
}

/// `Σ_k L_k + α(λ₁·L_gb + λ₂·L_gh + λ₃·L_bh) + β·reg`.
///
/// Terms that are absent or carry a zero coefficient are left out of the
/// graph entirely.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    terms: &LossTerms,
    weights: &LossWeights,
) -> Result<Var> {
    let mut total = tape.add_all(&terms.bpr)?;
    let weighted = [
        (terms.gb, weights.lambda1),
        (terms.gh, weights.lambda2),
        (terms.bh, weights.lambda3),
    ];
    let mut cl = Vec::new();
    for (term, lambda) in weighted {
        if let Some(v) = term {
            if lambda != 0.0 {
                cl.push(tape.scale(v, T::of(lambda)));
            }
        }
    }
    if !cl.is_empty() && weights.alpha != 0.0 {
        let sum = tape.add_all(&cl)?;
        let scaled = tape.scale(sum, T::of(weights.alpha));
        total = tape.add(total, scaled)?;
    }
    if let Some(reg) = terms.reg {
        if weights.beta != 0.0 {
            let scaled = tape.scale(reg, T::of(weights.beta));
            total = tape.add(total, scaled)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn col(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn bpr_equal_scores_is_ln2_per_triple() {
        let mut tape = Tape::new();
        let p = tape.constant(col(&[0.3, -1.0, 2.0]));
        let l = bpr_loss(&mut tape, p, p).unwrap();
        assert!((tape.scalar(l) - 3.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bpr_saturates() {
        let mut tape = Tape::new();
        let p = tape.constant(col(&[50.0, 51.0]));
        let n = tape.constant(col(&[0.0, 1.0]));
        let l = bpr_loss(&mut tape, p, n).unwrap();
        assert!(tape.scalar(l) < 1e-20);
    }

    #[test]
    fn bpr_scalar_case() {
        let mut tape = Tape::new();
        let p = tape.constant(col(&[1.0]));
        let n = tape.constant(col(&[0.5]));
        let l = bpr_loss(&mut tape, p, n).unwrap();
        assert!((tape.scalar(l) - 0.474077).abs() < 1e-6);
    }

    #[test]
    fn bpr_length_mismatch() {
        let mut tape = Tape::new();
        let p = tape.constant(col(&[1.0, 2.0]));
        let n = tape.constant(col(&[0.5]));
        assert!(matches!(bpr_loss(&mut tape, p, n), Err(Error::Dimension { .. })));
    }

    #[test]
    fn info_nce_single_entry_pool_is_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[0.3, -0.2]]));
        let p = tape.constant(t(&[&[1.0, 4.0]]));
        let l = info_nce(&mut tape, a, p, &[0], 0.1).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn info_nce_opposed_negative() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0, 0.0]]));
        let pool = tape.constant(t(&[&[2.0, 0.0], &[-3.0, 0.0]]));
        let l = info_nce(&mut tape, a, pool, &[0], 0.1).unwrap();
        let expected = -(10f64.exp() / (10f64.exp() + (-10f64).exp())).ln();
        assert!((expected - 2.061e-9).abs() < 1e-12);
        assert!((tape.scalar(l) - expected).abs() < 1e-13);
    }

    #[test]
    fn info_nce_collapse_is_ln_pool() {
        let mut tape = Tape::new();
        let rows = t(&[&[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5], &[0.5, 0.5]]);
        let a = tape.constant(rows.clone());
        let p = tape.constant(rows);
        let l = info_nce(&mut tape, a, p, &[0, 1, 2, 3], 0.1).unwrap();
        assert!((tape.scalar(l) - 4.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_rejects_non_positive_tau() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[&[1.0]]));
        assert!(matches!(info_nce(&mut tape, a, a, &[0], 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn total_without_contrast_or_reg_is_bpr_sum() {
        let mut tape = Tape::new();
        let l1 = tape.constant(Tensor::scalar(1.0));
        let l2 = tape.constant(Tensor::scalar(2.0));
        let big = tape.constant(Tensor::scalar(100.0));
        let terms = LossTerms {
            bpr: vec![l1, l2],
            gb: Some(big),
            gh: Some(big),
            bh: Some(big),
            reg: Some(big),
        };
        let w = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            ..LossWeights::default()
        };
        let total = total_loss(&mut tape, &terms, &w).unwrap();
        assert_eq!(tape.scalar(total), 3.0);
    }

    #[test]
    fn squared_norm_regularizer() {
        let mut tape = Tape::new();
        let zero = tape.constant(Tensor::scalar(0.0));
        let p = tape.leaf(t(&[&[3.0, 4.0]]), true);
        let sq = tape.hadamard(p, p).unwrap();
        let reg = tape.reduce_sum(sq);
        let terms = LossTerms {
            bpr: vec![zero],
            reg: Some(reg),
            ..LossTerms::default()
        };
        let w = LossWeights {
            alpha: 0.0,
            beta: 1.0,
            ..LossWeights::default()
        };
        let total = total_loss(&mut tape, &terms, &w).unwrap();
        assert_eq!(tape.scalar(total), 25.0);
    }

    #[test]
    fn weighted_combination() {
        let mut tape = Tape::new();
        let c = |tape: &mut Tape<f64>, v: f64| tape.constant(Tensor::scalar(v));
        let terms = LossTerms {
            bpr: vec![c(&mut tape, 1.0), c(&mut tape, 2.0)],
            gb: Some(c(&mut tape, 3.0)),
            gh: Some(c(&mut tape, 4.0)),
            bh: Some(c(&mut tape, 5.0)),
            reg: None,
        };
        let w = LossWeights {
            alpha: 0.1,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            beta: 0.0,
            tau: 0.1,
        };
        let total = total_loss(&mut tape, &terms, &w).unwrap();
        assert!((tape.scalar(total) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights::default().lambda_sum_warning().is_none());
        let bad = LossWeights {
            alpha: -1.0,
            ..LossWeights::default()
        };
        assert!(bad.validate().is_err());
        let skewed = LossWeights {
            lambda1: 2.0,
            ..LossWeights::default()
        };
        assert!(skewed.validate().is_ok());
        assert!(skewed.lambda_sum_warning().is_some());
    }

    #[test]
    fn ablations_switch_contrastive_terms() {
        let w = LossWeights::default();
        assert_eq!(active_contrastive_terms(&w, &Ablations::none()), (true, true, true));
        let only = |a| active_contrastive_terms(&w, &Ablations::none().with(a));
        assert_eq!(only(Ablation::NoGlobal), (false, false, true));
        assert_eq!(only(Ablation::NoHyper), (true, false, false));
        assert_eq!(only(Ablation::NoClIntra), (true, true, false));
        assert_eq!(only(Ablation::NoClCross), (false, false, true));
        assert_eq!(only(Ablation::NoClAll), (false, false, false));
        assert_eq!(only(Ablation::NoMutual), (true, true, true));
    }
}
