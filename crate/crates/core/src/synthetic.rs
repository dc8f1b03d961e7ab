//! Small generated datasets with known structure, used by tests, the
//! acceptance suite and the gradient self-check.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{BprTriple, InteractionDataset};
use crate::error::Result;

/// Block-structured preferences over a view → cart → buy cascade.
///
/// Users come in groups; each group owns a block of items and every member
/// buys the whole block in a rotated order, so its last two buys (the
/// validation and test positives) are items its group-mates bought earlier.
/// Carts add the validation positive, views cover the block plus one item
/// from the shared noise pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantedSpec {
    pub groups: usize,
    pub users_per_group: usize,
    pub block: usize,
    pub noise_items: usize,
}

impl Default for PlantedSpec {
    /// 20 users, 30 items.
    fn default() -> Self {
        Self {
            groups: 4,
            users_per_group: 5,
            block: 6,
            noise_items: 6,
        }
    }
}

impl PlantedSpec {
    pub fn num_users(&self) -> usize {
        self.groups * self.users_per_group
    }

    pub fn num_items(&self) -> usize {
        self.groups * self.block + self.noise_items
    }
}

pub fn planted_dataset(spec: PlantedSpec) -> Result<InteractionDataset> {
    let (mut view, mut cart, mut buy) = (Vec::new(), Vec::new(), Vec::new());
    for u in 0..spec.num_users() {
        let g = u / spec.users_per_group;
        let r = u % spec.users_per_group;
        let order: Vec<u32> = (0..spec.block)
            .map(|j| (g * spec.block + (r + j) % spec.block) as u32)
            .collect();
        let u = u as u32;
        for &i in &order {
            buy.push((u, i));
            view.push((u, i));
        }
        for &i in &order[..spec.block - 1] {
            cart.push((u, i));
        }
        if spec.noise_items > 0 {
            let noise = spec.groups * spec.block + u as usize % spec.noise_items;
            view.push((u, noise as u32));
        }
    }
    InteractionDataset::from_histories(
        spec.num_users(),
        spec.num_items(),
        vec!["view".into(), "cart".into(), "buy".into()],
        vec![view, cart, buy],
        3,
    )
}

/// Random multi-behavior data with latent taste clusters.
///
/// Users and items are dealt round-robin into `clusters` groups. Under the
/// first behavior a user picks items from its own cluster with probability
/// `affinity` and uniformly otherwise; each later behavior re-picks from the
/// preceding behavior's items with probability `carry_over`, falling back to
/// the same cluster-or-uniform draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusteredSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub clusters: usize,
    /// Distinct items per user, one entry per behavior in cascade order.
    pub per_user: Vec<usize>,
    pub affinity: f64,
    pub carry_over: f64,
    pub seed: u64,
}

pub fn clustered_dataset(spec: &ClusteredSpec) -> Result<InteractionDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clusters = spec.clusters.max(1);
    let members: Vec<Vec<u32>> = (0..clusters)
        .map(|c| (c..spec.num_items).step_by(clusters).map(|i| i as u32).collect())
        .collect();
    let mut histories = vec![Vec::new(); spec.per_user.len()];
    for u in 0..spec.num_users {
        let own = &members[u % clusters];
        let mut prev: Vec<u32> = Vec::new();
        for (k, &count) in spec.per_user.iter().enumerate() {
            let count = count.min(spec.num_items - 1);
            let mut chosen: Vec<u32> = Vec::with_capacity(count);
            while chosen.len() < count {
                let i = if !prev.is_empty() && rng.gen_bool(spec.carry_over) {
                    *prev.choose(&mut rng).unwrap()
                } else if !own.is_empty() && rng.gen_bool(spec.affinity) {
                    *own.choose(&mut rng).unwrap()
                } else {
                    rng.gen_range(0..spec.num_items) as u32
                };
                if !chosen.contains(&i) {
                    chosen.push(i);
                }
            }
            histories[k].extend(chosen.iter().map(|&i| (u as u32, i)));
            prev = chosen;
        }
    }
    let names = (0..spec.per_user.len()).map(|k| format!("b{k}")).collect();
    InteractionDataset::from_histories(spec.num_users, spec.num_items, names, histories, 3)
}

/// The 6-user, 8-item, 2-behavior toy used for gradient checks.
pub fn gradcheck_toy() -> Result<InteractionDataset> {
    let click = vec![
        (0, 0), (0, 1), (0, 2),
        (1, 1), (1, 3),
        (2, 2), (2, 4), (2, 5),
        (3, 0), (3, 6),
        (4, 5), (4, 7), (4, 3),
        (5, 6), (5, 1),
    ];
    let buy = vec![
        (0, 1), (0, 2),
        (1, 3),
        (2, 4), (2, 5),
        (3, 6),
        (4, 7),
        (5, 1),
    ];
    InteractionDataset::from_histories(6, 8, vec!["click".into(), "buy".into()], vec![click, buy], 3)
}

/// Fixed triples on [`gradcheck_toy`]: two per behavior, covering several
/// users and both positive and negative items.
pub fn gradcheck_triples() -> Vec<Vec<BprTriple>> {
    let t = |behavior, user, pos_item, neg_item| BprTriple {
        behavior,
        user,
        pos_item,
        neg_item,
    };
    vec![
        vec![t(0, 0, 1, 4), t(0, 2, 5, 7), t(0, 4, 3, 0)],
        vec![t(1, 0, 2, 6), t(1, 2, 4, 0), t(1, 5, 1, 3)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_default_shape() {
        let ds = planted_dataset(PlantedSpec::default()).unwrap();
        assert_eq!((ds.num_users, ds.num_items, ds.num_behaviors()), (20, 30, 3));
        assert_eq!(ds.eval_users.len(), 20);
        for &u in &ds.eval_users {
            assert_eq!(ds.train_items(2, u).len(), 4);
            let val = ds.val_positive[&u];
            assert!(ds.has_train_edge(1, u, val));
            assert!(!ds.has_train_edge(1, u, ds.test_positive[&u]));
        }
    }

    #[test]
    fn gradcheck_triples_are_legal() {
        let ds = gradcheck_toy().unwrap();
        for t in gradcheck_triples().iter().flatten() {
            assert!(ds.has_train_edge(t.behavior, t.user, t.pos_item));
            assert!(!ds.has_train_edge(t.behavior, t.user, t.neg_item));
        }
    }

    #[test]
    fn clustered_dataset_is_deterministic() {
        let spec = ClusteredSpec {
            num_users: 10,
            num_items: 15,
            clusters: 3,
            per_user: vec![5, 4],
            affinity: 0.8,
            carry_over: 0.7,
            seed: 3,
        };
        let a = clustered_dataset(&spec).unwrap();
        let b = clustered_dataset(&spec).unwrap();
        assert_eq!(a.train_edges, b.train_edges);
        assert_eq!(a.test_positive, b.test_positive);
    }
}
