use std::collections::HashSet;

use gates_core::{make_split_plan, SplitKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cross_fit_plans_partition_and_balance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let l = rng.random_range(2..=10);
        let n = rng.random_range(2 * l..=400);
        let seed: u64 = rng.random();
        let plan = make_split_plan(n, SplitKind::CrossFit { l }, seed).unwrap();
        assert_eq!(plan.folds.len(), l);
        let mut seen = vec![false; n];
        for fold in &plan.folds {
            for &i in fold {
                assert!(!seen[i], "unit {i} appears twice (n={n}, L={l})");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "plan misses units (n={n}, L={l})");
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1, "sizes {sizes:?}");
    }
}

#[test]
fn main_aux_sizes_follow_rounding() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let n = rng.random_range(4..300);
        let frac = rng.random_range(0.1..0.9);
        let plan = make_split_plan(n, SplitKind::MainAux { main_fraction: frac }, rng.random()).unwrap();
        let main = (n as f64 * frac).round() as usize;
        assert_eq!(plan.folds[0].len(), main);
        assert_eq!(plan.folds[1].len(), n - main);
        let all: HashSet<usize> = plan.folds.iter().flatten().copied().collect();
        assert_eq!(all.len(), n);
    }
}

#[test]
fn equal_seeds_equal_plans_distinct_seeds_distinct_plans() {
    let kind = SplitKind::CrossFit { l: 3 };
    let mut distinct = HashSet::new();
    for seed in 0..1000u64 {
        let a = make_split_plan(60, kind, seed).unwrap();
        let b = make_split_plan(60, kind, seed).unwrap();
        assert_eq!(a, b);
        distinct.insert(a.folds);
    }
    assert!(distinct.len() >= 990, "only {} distinct plans", distinct.len());
}

#[test]
fn invalid_plans_are_rejected() {
    assert!(make_split_plan(5, SplitKind::CrossFit { l: 3 }, 0).is_err());
    assert!(make_split_plan(10, SplitKind::CrossFit { l: 1 }, 0).is_err());
    assert!(make_split_plan(10, SplitKind::MainAux { main_fraction: 0.01 }, 0).is_err());
    assert!(make_split_plan(10, SplitKind::MainAux { main_fraction: 1.0 }, 0).is_err());
}
