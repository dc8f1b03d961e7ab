//! Forward computation: global propagation, the behavior cascade with its
//! hypergraph branch, behavior mutual enhancement and scoring.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Init, Tape, Var};
use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::graph::{build_behavior_graphs, build_global_graph, NormalizedBipartiteGraph};
use crate::tensor::{dot, Scalar, Tensor};

/// Named model variants that switch off one component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Raw layer-0 embeddings replace the global-graph output; the
    /// global-anchored contrastive terms are dropped.
    NoGlobal,
    /// No hypergraph branch (and no hypergraph contrastive terms).
    NoHyper,
    /// Gradients flow from the hypergraph branch back into the cascade.
    NoStop,
    /// Every behavior starts from the global embeddings.
    NoCascading,
    /// Skip behavior mutual enhancement.
    NoMutual,
    NoClIntra,
    NoClCross,
    NoClAll,
}

impl Ablation {
    pub const ALL: [Ablation; 8] = [
        Ablation::NoGlobal,
        Ablation::NoHyper,
        Ablation::NoStop,
        Ablation::NoCascading,
        Ablation::NoMutual,
        Ablation::NoClIntra,
        Ablation::NoClCross,
        Ablation::NoClAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoGlobal => "no_global",
            Ablation::NoHyper => "no_hyper",
            Ablation::NoStop => "no_stop",
            Ablation::NoCascading => "no_cascading",
            Ablation::NoMutual => "no_mutual",
            Ablation::NoClIntra => "no_cl_intra",
            Ablation::NoClCross => "no_cl_cross",
            Ablation::NoClAll => "no_cl_all",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Ablation::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!(
                    "unknown ablation `{s}` (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ablations(BTreeSet<Ablation>);

impl Ablations {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, a: Ablation) -> Self {
        self.0.insert(a);
        self
    }

    pub fn insert(&mut self, a: Ablation) {
        self.0.insert(a);
    }

    pub fn contains(&self, a: Ablation) -> bool {
        self.0.contains(&a)
    }

    pub fn iter(&self) -> impl Iterator<Item = Ablation> + '_ {
        self.0.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<Ablation> for Ablations {
    fn from_iter<I: IntoIterator<Item = Ablation>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOptions {
    /// Propagation layers per graph.
    pub layers: usize,
    pub ablations: Ablations,
    /// Weight on the hypergraph term when integrating a behavior; 1 in the
    /// model proper, 0 switches the term off while keeping the branch.
    pub hyper_weight: f64,
}

impl ModelOptions {
    pub fn new(layers: usize, ablations: Ablations) -> Self {
        Self {
            layers,
            ablations,
            hyper_weight: 1.0,
        }
    }
}

/// Trainable state: layer-0 embedding tables and one hyperedge projection
/// per behavior and side.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub user_emb: Tensor<T>,
    pub item_emb: Tensor<T>,
    pub hyper_user: Vec<Tensor<T>>,
    pub hyper_item: Vec<Tensor<T>>,
}

pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Scalar> ModelParams<T> {
    /// Xavier-initialized parameters, deterministic per seed.
    pub fn init(
        num_users: usize,
        num_items: usize,
        num_behaviors: usize,
        dim: usize,
        hyperedges: usize,
        seed: u64,
    ) -> Result<Self> {
        let xavier = |stream: u64| Init::XavierUniform {
            seed: sub_seed(seed, stream),
        };
        let mut hyper_user = Vec::with_capacity(num_behaviors);
        let mut hyper_item = Vec::with_capacity(num_behaviors);
        for k in 0..num_behaviors as u64 {
            hyper_user.push(xavier(2 + 2 * k).build(dim, hyperedges)?);
            hyper_item.push(xavier(3 + 2 * k).build(dim, hyperedges)?);
        }
        Ok(Self {
            user_emb: xavier(0).build(num_users, dim)?,
            item_emb: xavier(1).build(num_items, dim)?,
            hyper_user,
            hyper_item,
        })
    }

    pub fn num_behaviors(&self) -> usize {
        self.hyper_user.len()
    }

    pub fn dim(&self) -> usize {
        self.user_emb.cols()
    }

    /// Names in the canonical order used by the optimizer and checkpoints.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["user_emb".to_string(), "item_emb".to_string()];
        for k in 0..self.num_behaviors() {
            names.push(format!("hyper_user.{k}"));
            names.push(format!("hyper_item.{k}"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.user_emb, &self.item_emb];
        for (u, i) in self.hyper_user.iter().zip(&self.hyper_item) {
            out.push(u);
            out.push(i);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.user_emb, &mut self.item_emb];
        for (u, i) in self.hyper_user.iter_mut().zip(self.hyper_item.iter_mut()) {
            out.push(u);
            out.push(i);
        }
        out
    }

    /// Rebuilds parameters from tensors listed in [`Self::names`] order.
    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Result<Self> {
        if tensors.len() < 2 || tensors.len() % 2 != 0 {
            return Err(Error::Format(format!(
                "expected an even number (≥ 2) of parameter tensors, got {}",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let user_emb = it.next().unwrap();
        let item_emb = it.next().unwrap();
        let (mut hyper_user, mut hyper_item) = (Vec::new(), Vec::new());
        while let (Some(u), Some(i)) = (it.next(), it.next()) {
            hyper_user.push(u);
            hyper_item.push(i);
        }
        Ok(Self {
            user_emb,
            item_emb,
            hyper_user,
            hyper_item,
        })
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            user_emb: self.user_emb.cast(),
            item_emb: self.item_emb.cast(),
            hyper_user: self.hyper_user.iter().map(Tensor::cast).collect(),
            hyper_item: self.hyper_item.iter().map(Tensor::cast).collect(),
        }
    }

    /// Places every parameter on `tape` as a leaf.
    pub fn attach(&self, tape: &mut Tape<T>, requires_grad: bool) -> ParamVars {
        ParamVars {
            user_emb: tape.leaf(self.user_emb.clone(), requires_grad),
            item_emb: tape.leaf(self.item_emb.clone(), requires_grad),
            hyper_user: self
                .hyper_user
                .iter()
                .map(|t| tape.leaf(t.clone(), requires_grad))
                .collect(),
            hyper_item: self
                .hyper_item
                .iter()
                .map(|t| tape.leaf(t.clone(), requires_grad))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamVars {
    pub user_emb: Var,
    pub item_emb: Var,
    pub hyper_user: Vec<Var>,
    pub hyper_item: Vec<Var>,
}

impl ParamVars {
    /// Same order as [`ModelParams::names`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.user_emb, self.item_emb];
        for (&u, &i) in self.hyper_user.iter().zip(&self.hyper_item) {
            out.push(u);
            out.push(i);
        }
        out
    }

    pub fn from_slice(vars: &[Var]) -> Self {
        let mut it = vars.iter().copied();
        let user_emb = it.next().expect("user table");
        let item_emb = it.next().expect("item table");
        let (mut hyper_user, mut hyper_item) = (Vec::new(), Vec::new());
        while let (Some(u), Some(i)) = (it.next(), it.next()) {
            hyper_user.push(u);
            hyper_item.push(i);
        }
        Self {
            user_emb,
            item_emb,
            hyper_user,
            hyper_item,
        }
    }
}

/// The global graph plus one graph per behavior, in cascade order.
#[derive(Clone, Debug)]
pub struct GraphSet<T> {
    pub global: NormalizedBipartiteGraph<T>,
    pub behaviors: Vec<NormalizedBipartiteGraph<T>>,
}

impl<T: Scalar> GraphSet<T> {
    pub fn build(ds: &InteractionDataset) -> Result<Self> {
        Ok(Self {
            global: build_global_graph(ds)?,
            behaviors: build_behavior_graphs(ds)?,
        })
    }
}

/// A user-side and an item-side node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Side {
    pub user: Var,
    pub item: Var,
}

#[derive(Clone, Debug)]
pub struct BehaviorOutputs {
    /// Interaction-graph embeddings.
    pub e_b: Side,
    /// Hypergraph embeddings; absent under `no_hyper`.
    pub e_h: Option<Side>,
    /// Integrated embeddings, which initialize the next behavior.
    pub e_int: Side,
    /// After mutual enhancement.
    pub e_tilde: Side,
    /// Final per-behavior embeddings used for scoring.
    pub e_bar: Side,
}

#[derive(Clone, Debug)]
pub struct ForwardOutputs {
    /// Global-graph embeddings (the raw layer-0 tables under `no_global`).
    pub e_g: Side,
    pub behaviors: Vec<BehaviorOutputs>,
    /// Per behavior, the n×K attention weights of mutual enhancement.
    pub attention: Vec<Side>,
}

impl ForwardOutputs {
    pub fn target(&self) -> &BehaviorOutputs {
        self.behaviors.last().expect("at least one behavior")
    }
}

/// LightGCN-style propagation with the layer outputs summed, layer 0
/// included.
pub fn propagate<T: Scalar>(
    tape: &mut Tape<T>,
    graph: &NormalizedBipartiteGraph<T>,
    init_user: Var,
    init_item: Var,
    layers: usize,
) -> Result<(Var, Var)> {
    let to_users = graph.items_into_users();
    let to_items = graph.users_into_items();
    let (mut cur_u, mut cur_i) = (init_user, init_item);
    let (mut sum_u, mut sum_i) = (init_user, init_item);
    for _ in 0..layers {
        let next_u = tape.spmm(&to_users, cur_i)?;
        let next_i = tape.spmm(&to_items, cur_u)?;
        sum_u = tape.add(sum_u, next_u)?;
        sum_i = tape.add(sum_i, next_i)?;
        cur_u = next_u;
        cur_i = next_i;
    }
    Ok((sum_u, sum_i))
}

pub fn global_propagate<T: Scalar>(
    tape: &mut Tape<T>,
    global: &NormalizedBipartiteGraph<T>,
    user_emb: Var,
    item_emb: Var,
    layers: usize,
) -> Result<(Var, Var)> {
    if layers == 0 {
        return Err(Error::Config("at least one propagation layer is required".into()));
    }
    propagate(tape, global, user_emb, item_emb, layers)
}

/// Propagation over one behavior graph, starting from the preceding
/// behavior's integrated embeddings.
pub fn behavior_propagate<T: Scalar>(
    tape: &mut Tape<T>,
    graph: &NormalizedBipartiteGraph<T>,
    init_user: Var,
    init_item: Var,
    layers: usize,
) -> Result<(Var, Var)> {
    propagate(tape, graph, init_user, init_item, layers)
}

/// Low-rank hyperedge assignment `H = e_b · W`. Callers pass the
/// stop-gradient view of `e_b`.
pub fn hyperedge_project<T: Scalar>(tape: &mut Tape<T>, e_b: Var, w: Var) -> Result<Var> {
    tape.matmul(e_b, w)
}

/// `H · (Hᵀ · e_b)`, never forming the n×n dependency matrix. No
/// nonlinearity is applied.
pub fn hypergraph_convolve<T: Scalar>(tape: &mut Tape<T>, h: Var, e_b: Var) -> Result<Var> {
    let edge_features = tape.matmul_tn(h, e_b)?;
    tape.matmul(h, edge_features)
}

/// One side of the hypergraph branch. With `stop` the interaction-graph
/// embeddings enter both products as a constant, so only `w` learns from
/// this route.
pub fn hypergraph_branch<T: Scalar>(
    tape: &mut Tape<T>,
    e_b: Var,
    w: Var,
    stop: bool,
) -> Result<Var> {
    let src = if stop { tape.stop_gradient(e_b)? } else { e_b };
    let h = hyperedge_project(tape, src, w)?;
    hypergraph_convolve(tape, h, src)
}

/// `e_b + e_h + e_prev`, summed in that order.
pub fn integrate_behavior<T: Scalar>(
    tape: &mut Tape<T>,
    e_b: Var,
    e_h: Option<Var>,
    e_prev: Var,
) -> Result<Var> {
    let mixed = match e_h {
        Some(h) => tape.add(e_b, h)?,
        None => e_b,
    };
    tape.add(mixed, e_prev)
}

/// Attention over the K behavior embeddings of each node.
///
/// For behavior `k`, logits are `e_k · e_j / √d` for every `j`, and the
/// output is the softmax-weighted sum of the `e_j`. Returns the enhanced
/// embeddings and the n×K weight matrices.
pub fn mutual_enhance<T: Scalar>(
    tape: &mut Tape<T>,
    e_int: &[Var],
) -> Result<(Vec<Var>, Vec<Var>)> {
    let first = *e_int
        .first()
        .ok_or_else(|| Error::Contract("mutual_enhance needs at least one behavior".into()))?;
    let dim = tape.shape(first).1;
    let inv_sqrt_d = T::of(1.0 / (dim as f64).sqrt());
    let mut outputs = Vec::with_capacity(e_int.len());
    let mut weights = Vec::with_capacity(e_int.len());
    for &query in e_int {
        let logits: Vec<Var> = e_int
            .iter()
            .map(|&key| tape.row_dot(query, key))
            .collect::<Result<_>>()?;
        let logits = tape.concat_cols(&logits)?;
        let w = tape.row_softmax(logits, inv_sqrt_d)?;
        let mut terms = Vec::with_capacity(e_int.len());
        for (j, &value) in e_int.iter().enumerate() {
            let wj = tape.select_col(w, j)?;
            terms.push(tape.scale_rows(value, wj)?);
        }
        outputs.push(tape.add_all(&terms)?);
        weights.push(w);
    }
    Ok((outputs, weights))
}

/// `ẽ + e_g`
pub fn final_embed<T: Scalar>(tape: &mut Tape<T>, e_tilde: Var, e_g: Var) -> Result<Var> {
    tape.add(e_tilde, e_g)
}

/// Inner-product scores for `(users[b], items[b])` pairs as a B×1 column.
pub fn score_pairs<T: Scalar>(
    tape: &mut Tape<T>,
    e_bar: Side,
    users: &[usize],
    items: &[usize],
) -> Result<Var> {
    let u = tape.gather_rows(e_bar.user, users)?;
    let i = tape.gather_rows(e_bar.item, items)?;
    tape.row_dot(u, i)
}

/// Score of a single pair from materialized final embeddings.
pub fn score<T: Scalar>(user_emb: &Tensor<T>, item_emb: &Tensor<T>, u: usize, i: usize) -> Result<T> {
    if u >= user_emb.rows() {
        return Err(Error::Index {
            what: "users",
            index: u,
            len: user_emb.rows(),
        });
    }
    if i >= item_emb.rows() {
        return Err(Error::Index {
            what: "items",
            index: i,
            len: item_emb.rows(),
        });
    }
    Ok(dot(user_emb.row(u), item_emb.row(i)))
}

/// Runs the full model on `tape`.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamVars,
    graphs: &GraphSet<T>,
    opts: &ModelOptions,
) -> Result<ForwardOutputs> {
    let k_count = graphs.behaviors.len();
    if k_count == 0 || params.hyper_user.len() != k_count || params.hyper_item.len() != k_count {
        return Err(Error::Config(format!(
            "{} behavior graphs but {} hyperedge projections",
            k_count,
            params.hyper_user.len()
        )));
    }
    let ab = &opts.ablations;
    let e_g = if ab.contains(Ablation::NoGlobal) {
        Side {
            user: params.user_emb,
            item: params.item_emb,
        }
    } else {
        let (user, item) = global_propagate(
            tape,
            &graphs.global,
            params.user_emb,
            params.item_emb,
            opts.layers,
        )?;
        Side { user, item }
    };

    let stop = !ab.contains(Ablation::NoStop);
    let mut prev = e_g;
    let mut partial = Vec::with_capacity(k_count);
    for (k, graph) in graphs.behaviors.iter().enumerate() {
        let init = if ab.contains(Ablation::NoCascading) {
            e_g
        } else {
            prev
        };
        let (bu, bi) = behavior_propagate(tape, graph, init.user, init.item, opts.layers)?;
        let e_b = Side { user: bu, item: bi };
        let e_h = if ab.contains(Ablation::NoHyper) {
            None
        } else {
            Some(Side {
                user: hypergraph_branch(tape, e_b.user, params.hyper_user[k], stop)?,
                item: hypergraph_branch(tape, e_b.item, params.hyper_item[k], stop)?,
            })
        };
        let mixed_h = match e_h {
            Some(h) if opts.hyper_weight != 1.0 => {
                let w = T::of(opts.hyper_weight);
                Some(Side {
                    user: tape.scale(h.user, w),
                    item: tape.scale(h.item, w),
                })
            }
            other => other,
        };
        let e_int = Side {
            user: integrate_behavior(tape, e_b.user, mixed_h.map(|h| h.user), init.user)?,
            item: integrate_behavior(tape, e_b.item, mixed_h.map(|h| h.item), init.item)?,
        };
        partial.push((e_b, e_h, e_int));
        prev = e_int;
    }

    let ints_u: Vec<Var> = partial.iter().map(|p| p.2.user).collect();
    let ints_i: Vec<Var> = partial.iter().map(|p| p.2.item).collect();
    let (tilde_u, tilde_i, attention) = if ab.contains(Ablation::NoMutual) {
        (ints_u, ints_i, Vec::new())
    } else {
        let (tu, wu) = mutual_enhance(tape, &ints_u)?;
        let (ti, wi) = mutual_enhance(tape, &ints_i)?;
        let attention = wu
            .into_iter()
            .zip(wi)
            .map(|(user, item)| Side { user, item })
            .collect();
        (tu, ti, attention)
    };

    let mut behaviors = Vec::with_capacity(k_count);
    for (k, (e_b, e_h, e_int)) in partial.into_iter().enumerate() {
        let e_tilde = Side {
            user: tilde_u[k],
            item: tilde_i[k],
        };
        let e_bar = Side {
            user: final_embed(tape, e_tilde.user, e_g.user)?,
            item: final_embed(tape, e_tilde.item, e_g.item)?,
        };
        behaviors.push(BehaviorOutputs {
            e_b,
            e_h,
            e_int,
            e_tilde,
            e_bar,
        });
    }
    Ok(ForwardOutputs {
        e_g,
        behaviors,
        attention,
    })
}

/// Final target-behavior embeddings `(users, items)` for ranking.
pub fn target_embeddings<T: Scalar>(
    params: &ModelParams<T>,
    graphs: &GraphSet<T>,
    opts: &ModelOptions,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::new();
    let vars = params.attach(&mut tape, false);
    let out = forward(&mut tape, &vars, graphs, opts)?;
    let bar = out.target().e_bar;
    Ok((tape.value(bar.user).clone(), tape.value(bar.item).clone()))
}
