//! Leave-one-out full-catalog ranking with HR@n and NDCG@n.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::tensor::{dot, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected val or test)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hr: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub num_eval_users: usize,
    /// 1-based rank of each evaluated user's positive.
    #[serde(skip)]
    pub per_user_rank: BTreeMap<u32, usize>,
}

impl EvalReport {
    pub fn hr_at(&self, n: usize) -> f64 {
        self.hr.get(&n).copied().unwrap_or(f64::NAN)
    }

    pub fn ndcg_at(&self, n: usize) -> f64 {
        self.ndcg.get(&n).copied().unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Writes `user,rank` rows with the user's original token.
    pub fn write_per_user_csv(&self, ds: &InteractionDataset, path: &Path) -> Result<()> {
        let mut out = String::from("user,rank\n");
        for (&u, &rank) in &self.per_user_rank {
            out.push_str(&format!("{},{rank}\n", ds.user_tokens[u as usize]));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// 1-based rank of `positive` among all items not in `exclude`.
///
/// Ties are broken by ascending item id, so the rank is one plus the number
/// of candidates that score higher, or score equal with a smaller id.
/// `exclude` must be sorted.
pub fn rank_from_scores<T: PartialOrd + Copy>(
    scores: &[T],
    exclude: &[u32],
    positive: u32,
) -> Result<usize> {
    let pos = positive as usize;
    if pos >= scores.len() {
        return Err(Error::Index {
            what: "items",
            index: pos,
            len: scores.len(),
        });
    }
    if exclude.binary_search(&positive).is_ok() {
        return Err(Error::Contract(format!(
            "positive item {positive} is in the exclusion list"
        )));
    }
    let target = scores[pos];
    let mut ahead = 0;
    for (item, &s) in scores.iter().enumerate() {
        if s > target || (s == target && item < pos) {
            if exclude.binary_search(&(item as u32)).is_err() {
                ahead += 1;
            }
        }
    }
    Ok(ahead + 1)
}

/// Scores every item for user `u` and ranks `positive`.
pub fn rank_items<T: Scalar>(
    user_emb: &Tensor<T>,
    item_emb: &Tensor<T>,
    u: usize,
    exclude: &[u32],
    positive: u32,
) -> Result<usize> {
    if u >= user_emb.rows() {
        return Err(Error::Index {
            what: "users",
            index: u,
            len: user_emb.rows(),
        });
    }
    let urow = user_emb.row(u);
    let scores: Vec<T> = (0..item_emb.rows())
        .map(|i| dot(urow, item_emb.row(i)))
        .collect();
    rank_from_scores(&scores, exclude, positive)
}

/// Aggregates ranks into HR@n and NDCG@n.
pub fn metrics_from_ranks(ranks: BTreeMap<u32, usize>, ns: &[usize]) -> Result<EvalReport> {
    if ranks.is_empty() {
        return Err(Error::Contract("no users to evaluate".into()));
    }
    let count = ranks.len() as f64;
    let mut hr = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &n in ns {
        let (mut hits, mut gain) = (0.0, 0.0);
        for &rank in ranks.values() {
            if rank <= n {
                hits += 1.0;
                gain += 1.0 / ((rank + 1) as f64).log2();
            }
        }
        hr.insert(n, hits / count);
        ndcg.insert(n, gain / count);
    }
    Ok(EvalReport {
        hr,
        ndcg,
        num_eval_users: ranks.len(),
        per_user_rank: ranks,
    })
}

/// Ranks each evaluation user's held-out item against the full catalog,
/// excluding only that user's target-behavior training items.
pub fn evaluate<T: Scalar>(
    user_emb: &Tensor<T>,
    item_emb: &Tensor<T>,
    ds: &InteractionDataset,
    split: Split,
    ns: &[usize],
) -> Result<EvalReport> {
    let positives = match split {
        Split::Val => &ds.val_positive,
        Split::Test => &ds.test_positive,
    };
    let target = ds.target_index();
    let users: Vec<(u32, u32)> = ds
        .eval_users
        .iter()
        .filter_map(|u| positives.get(u).map(|&p| (*u, p)))
        .collect();
    if users.is_empty() {
        return Err(Error::Contract(format!("no {split:?} positives to evaluate")));
    }
    let ranks: Vec<Result<(u32, usize)>> = users
        .par_iter()
        .map(|&(u, p)| {
            let rank = rank_items(user_emb, item_emb, u as usize, ds.train_items(target, u), p)?;
            Ok((u, rank))
        })
        .collect();
    let ranks = ranks.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
    metrics_from_ranks(ranks, ns)
}
