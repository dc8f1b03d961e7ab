//! Ingestion of per-behavior interaction files, ID mapping, the
//! leave-one-out split and BPR triple sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawInteraction {
    pub user_token: String,
    pub item_token: String,
    /// Position within this user's history for one behavior.
    pub order_index: usize,
}

/// Reads a `user<TAB>item[<TAB>...]` file. Blank lines are skipped; extra
/// columns are ignored.
pub fn load_behavior_file(path: impl AsRef<Path>) -> Result<Vec<RawInteraction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_behavior_text(&text, path)
}

pub(crate) fn parse_behavior_text(text: &str, path: &Path) -> Result<Vec<RawInteraction>> {
    let mut next_index: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let user = cols.next().unwrap_or("").trim();
        let item = cols.next().map(str::trim);
        let item = match item {
            Some(item) if !user.is_empty() && !item.is_empty() => item,
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected `user<TAB>item`, got {line:?}"),
                })
            }
        };
        let slot = next_index.entry(user.to_string()).or_insert(0);
        out.push(RawInteraction {
            user_token: user.to_string(),
            item_token: item.to_string(),
            order_index: *slot,
        });
        *slot += 1;
    }
    Ok(out)
}

/// JSON manifest naming each behavior's file in cascade order; the last
/// entry is the target behavior. Relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    #[serde(default)]
    pub name: Option<String>,
    pub behaviors: Vec<BehaviorFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BehaviorFile {
    pub name: String,
    pub path: PathBuf,
}

impl DatasetManifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.behaviors.is_empty() {
            return Err(Error::Config(format!(
                "{}: manifest lists no behaviors",
                path.display()
            )));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for b in &mut manifest.behaviors {
            if b.path.is_relative() {
                b.path = base.join(&b.path);
            }
        }
        Ok(manifest)
    }

    pub fn target(&self) -> &str {
        &self.behaviors.last().expect("non-empty manifest").name
    }

    /// Loads every behavior file and builds the split.
    pub fn load(&self, min_target_interactions: usize) -> Result<InteractionDataset> {
        let mut raw = Vec::with_capacity(self.behaviors.len());
        for b in &self.behaviors {
            raw.push((b.name.clone(), load_behavior_file(&b.path)?));
        }
        build_dataset(&raw, self.target(), min_target_interactions)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    /// Behavior names in cascade order; the last one is the target.
    pub behaviors: Vec<String>,
    pub user_tokens: Vec<String>,
    pub item_tokens: Vec<String>,
    /// Per behavior, deduplicated training edges.
    pub train_edges: Vec<Vec<(u32, u32)>>,
    pub val_positive: BTreeMap<u32, u32>,
    pub test_positive: BTreeMap<u32, u32>,
    /// Users with both a validation and a test positive, ascending.
    pub eval_users: Vec<u32>,
    /// Per behavior and user, sorted training items.
    user_items: Vec<Vec<Vec<u32>>>,
}

impl InteractionDataset {
    pub fn num_behaviors(&self) -> usize {
        self.behaviors.len()
    }

    pub fn target_index(&self) -> usize {
        self.behaviors.len() - 1
    }

    /// Sorted training items of `user` under behavior `k`.
    pub fn train_items(&self, k: usize, user: u32) -> &[u32] {
        &self.user_items[k][user as usize]
    }

    pub fn has_train_edge(&self, k: usize, user: u32, item: u32) -> bool {
        self.train_items(k, user).binary_search(&item).is_ok()
    }

    /// Summary used to tie checkpoints to the data they were trained on.
    pub fn fingerprint(&self) -> DatasetFingerprint {
        DatasetFingerprint {
            num_users: self.num_users,
            num_items: self.num_items,
            behaviors: self.behaviors.clone(),
            train_edges: self.train_edges.iter().map(Vec::len).collect(),
            val_positives: self.val_positive.len(),
            test_positives: self.test_positive.len(),
            content: self.content_digest(),
        }
    }

    fn content_digest(&self) -> String {
        let mut h = Sha256::new();
        for edges in &self.train_edges {
            h.update((edges.len() as u64).to_le_bytes());
            for &(u, i) in edges {
                h.update(u.to_le_bytes());
                h.update(i.to_le_bytes());
            }
        }
        for split in [&self.val_positive, &self.test_positive] {
            h.update((split.len() as u64).to_le_bytes());
            for (&u, &i) in split {
                h.update(u.to_le_bytes());
                h.update(i.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Assembles a dataset from already-mapped IDs. Each target history is
    /// split as in [`build_dataset`].
    pub fn from_histories(
        num_users: usize,
        num_items: usize,
        behaviors: Vec<String>,
        histories: Vec<Vec<(u32, u32)>>,
        min_target_interactions: usize,
    ) -> Result<Self> {
        if behaviors.len() != histories.len() || behaviors.is_empty() {
            return Err(Error::Config(
                "one ordered edge list per behavior is required".into(),
            ));
        }
        for edges in &histories {
            for &(u, i) in edges {
                if u as usize >= num_users {
                    return Err(Error::Index {
                        what: "users",
                        index: u as usize,
                        len: num_users,
                    });
                }
                if i as usize >= num_items {
                    return Err(Error::Index {
                        what: "items",
                        index: i as usize,
                        len: num_items,
                    });
                }
            }
        }
        let k_target = behaviors.len() - 1;
        if histories[k_target].is_empty() {
            return Err(Error::Config(format!(
                "target behavior `{}` has no interactions",
                behaviors[k_target]
            )));
        }

        let mut train_edges = Vec::with_capacity(behaviors.len());
        for edges in &histories[..k_target] {
            train_edges.push(dedup_keep_first(edges));
        }

        let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
        for &(u, i) in &dedup_keep_first(&histories[k_target]) {
            per_user[u as usize].push(i);
        }
        let mut target_train = Vec::new();
        let mut val_positive = BTreeMap::new();
        let mut test_positive = BTreeMap::new();
        let mut eval_users = Vec::new();
        // Rebuild in (user, order) so the surviving training edges keep the
        // original per-user order.
        for (u, items) in per_user.iter().enumerate() {
            let u = u as u32;
            if items.len() >= min_target_interactions.max(2) {
                let n = items.len();
                test_positive.insert(u, items[n - 1]);
                val_positive.insert(u, items[n - 2]);
                eval_users.push(u);
                target_train.extend(items[..n - 2].iter().map(|&i| (u, i)));
            } else {
                target_train.extend(items.iter().map(|&i| (u, i)));
            }
        }
        train_edges.push(target_train);

        let user_items = train_edges
            .iter()
            .map(|edges| {
                let mut lists = vec![Vec::new(); num_users];
                for &(u, i) in edges {
                    lists[u as usize].push(i);
                }
                for l in &mut lists {
                    l.sort_unstable();
                }
                lists
            })
            .collect();

        Ok(Self {
            num_users,
            num_items,
            behaviors,
            user_tokens: (0..num_users).map(|u| format!("u{u}")).collect(),
            item_tokens: (0..num_items).map(|i| format!("i{i}")).collect(),
            train_edges,
            val_positive,
            test_positive,
            eval_users,
            user_items,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetFingerprint {
    pub num_users: usize,
    pub num_items: usize,
    pub behaviors: Vec<String>,
    pub train_edges: Vec<usize>,
    pub val_positives: usize,
    pub test_positives: usize,
    /// SHA-256 over the ID-mapped edges and held-out positives.
    pub content: String,
}

fn dedup_keep_first(edges: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut seen = HashSet::with_capacity(edges.len());
    edges.iter().copied().filter(|e| seen.insert(*e)).collect()
}

/// Maps tokens to contiguous IDs and performs the leave-one-out split.
///
/// `raw` lists behaviors in cascade order. IDs are assigned by first
/// appearance across that concatenation. For each user with at least
/// `min_target_interactions` distinct target items, the last one becomes the
/// test positive and the one before it the validation positive.
pub fn build_dataset(
    raw: &[(String, Vec<RawInteraction>)],
    target: &str,
    min_target_interactions: usize,
) -> Result<InteractionDataset> {
    let target_pos = raw
        .iter()
        .position(|(name, _)| name == target)
        .ok_or_else(|| Error::Config(format!("target behavior `{target}` not present")))?;
    if raw[target_pos].1.is_empty() {
        return Err(Error::Config(format!(
            "target behavior `{target}` has no interactions"
        )));
    }
    // The target is always last in the cascade.
    let mut ordered: Vec<&(String, Vec<RawInteraction>)> = raw
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != target_pos)
        .map(|(_, b)| b)
        .collect();
    ordered.push(&raw[target_pos]);

    let mut user_ids: HashMap<&str, u32> = HashMap::new();
    let mut item_ids: HashMap<&str, u32> = HashMap::new();
    let mut user_tokens = Vec::new();
    let mut item_tokens = Vec::new();
    let mut histories = Vec::with_capacity(ordered.len());
    for (_, records) in &ordered {
        let mut records: Vec<&RawInteraction> = records.iter().collect();
        // Stable sort keeps file order among equal keys.
        records.sort_by_key(|r| r.order_index);
        let mut edges = Vec::with_capacity(records.len());
        for r in records {
            let u = *user_ids.entry(r.user_token.as_str()).or_insert_with(|| {
                user_tokens.push(r.user_token.clone());
                (user_tokens.len() - 1) as u32
            });
            let i = *item_ids.entry(r.item_token.as_str()).or_insert_with(|| {
                item_tokens.push(r.item_token.clone());
                (item_tokens.len() - 1) as u32
            });
            edges.push((u, i));
        }
        histories.push(edges);
    }
    let behaviors = ordered.iter().map(|(name, _)| name.clone()).collect();
    let mut ds = InteractionDataset::from_histories(
        user_tokens.len(),
        item_tokens.len(),
        behaviors,
        histories,
        min_target_interactions,
    )?;
    ds.user_tokens = user_tokens;
    ds.item_tokens = item_tokens;
    Ok(ds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BprTriple {
    pub behavior: usize,
    pub user: u32,
    pub pos_item: u32,
    pub neg_item: u32,
}

/// Draws `batch` triples for behavior `k`: a training edge uniformly, then a
/// negative item uniformly with rejection of the user's training items.
pub fn sample_bpr_triples<R: Rng + ?Sized>(
    ds: &InteractionDataset,
    k: usize,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<BprTriple>> {
    let edges = ds.train_edges.get(k).ok_or(Error::Index {
        what: "behaviors",
        index: k,
        len: ds.num_behaviors(),
    })?;
    if edges.is_empty() {
        return Err(Error::Contract(format!(
            "behavior `{}` has no training edges to sample",
            ds.behaviors[k]
        )));
    }
    let max_rejections = ds.num_items * 10;
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (u, i) = edges[rng.gen_range(0..edges.len())];
        let mut rejections = 0;
        let j = loop {
            let j = rng.gen_range(0..ds.num_items) as u32;
            if !ds.has_train_edge(k, u, j) {
                break j;
            }
            rejections += 1;
            if rejections >= max_rejections {
                return Err(Error::NoNegative {
                    user: u as usize,
                    behavior: k,
                });
            }
        };
        out.push(BprTriple {
            behavior: k,
            user: u,
            pos_item: i,
            neg_item: j,
        });
    }
    Ok(out)
}
