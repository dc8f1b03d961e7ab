use std::collections::BTreeMap;

use hecgcn::evaluator::{metrics_from_ranks, rank_from_scores, rank_items};
use hecgcn::Tensor;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sorts candidates by (score desc, id asc) and reads off the positive's
/// position.
fn sort_oracle(scores: &[f64], exclude: &[u32], positive: u32) -> usize {
    let mut cands: Vec<usize> = (0..scores.len())
        .filter(|i| !exclude.contains(&(*i as u32)))
        .collect();
    cands.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    cands.iter().position(|&i| i == positive as usize).unwrap() + 1
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u32>, u32) {
    let n = rng.gen_range(1..60);
    // Coarse scores so ties are common.
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 * 0.5).collect();
    let positive = rng.gen_range(0..n) as u32;
    let k = rng.gen_range(0..n);
    let mut exclude: Vec<u32> = sample(rng, n, k)
        .into_iter()
        .map(|i| i as u32)
        .filter(|&i| i != positive)
        .collect();
    exclude.sort_unstable();
    (scores, exclude, positive)
}

#[test]
fn ranks_match_sort_oracle_on_1000_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (scores, exclude, positive) = random_case(&mut rng);
        assert_eq!(
            rank_from_scores(&scores, &exclude, positive).unwrap(),
            sort_oracle(&scores, &exclude, positive)
        );
    }
}

#[test]
fn hand_cases() {
    let one = |rank: usize| metrics_from_ranks(BTreeMap::from([(0u32, rank)]), &[10]).unwrap();
    assert_eq!((one(1).hr_at(10), one(1).ndcg_at(10)), (1.0, 1.0));
    assert_eq!(one(2).hr_at(10), 1.0);
    assert!((one(2).ndcg_at(10) - 0.63093).abs() < 5e-6);
    assert_eq!(one(2).ndcg_at(10), 1.0 / 3f64.log2());
    assert_eq!((one(11).hr_at(10), one(11).ndcg_at(10)), (0.0, 0.0));
    // All tied: the smallest id wins.
    assert_eq!(rank_from_scores(&[0.5; 7], &[], 0).unwrap(), 1);
    assert_eq!(rank_from_scores(&[0.5; 7], &[], 6).unwrap(), 7);
}

proptest! {
    #[test]
    fn positive_scaling_preserves_ranks(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n, d) = (4, 12, 3);
        let users = Tensor::from_vec(m, d, (0..m * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let items = Tensor::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let scaled = items.map(|v| v * c);
        for u in 0..m {
            let pos = rng.gen_range(0..n) as u32;
            prop_assert_eq!(
                rank_items(&users, &items, u, &[], pos).unwrap(),
                rank_items(&users, &scaled, u, &[], pos).unwrap()
            );
        }
    }

    #[test]
    fn excluding_more_never_raises_rank(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (scores, exclude, positive) = random_case(&mut rng);
        let before = rank_from_scores(&scores, &exclude, positive).unwrap();
        let extra = rng.gen_range(0..scores.len()) as u32;
        let mut more = exclude.clone();
        if extra != positive && !more.contains(&extra) {
            more.push(extra);
            more.sort_unstable();
        }
        prop_assert!(rank_from_scores(&scores, &more, positive).unwrap() <= before);
    }

    #[test]
    fn ndcg_bounded_by_hr_and_monotone(ranks in prop::collection::vec(1usize..40, 1..30)) {
        let map: BTreeMap<u32, usize> = ranks.iter().enumerate().map(|(u, &r)| (u as u32, r)).collect();
        let ns = [1, 5, 10, 20];
        let r = metrics_from_ranks(map, &ns).unwrap();
        for w in ns.windows(2) {
            prop_assert!(r.hr_at(w[0]) <= r.hr_at(w[1]));
            prop_assert!(r.ndcg_at(w[0]) <= r.ndcg_at(w[1]));
        }
        for n in ns {
            prop_assert!(r.ndcg_at(n) <= r.hr_at(n));
        }
    }
}
