use privtext::corpus::{
    heterogeneity_score, histogram, partition_iid, partition_noniid_shards, total_variation, train_test_split,
    unassigned, Label, SplitSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_labels(n: usize, seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match rng.random_range(0..100) {
            0..60 => Label::Neutral,
            60..88 => Label::Positive,
            _ => Label::Negative,
        })
        .collect()
}

fn assert_disjoint(parts: &[privtext::corpus::ClientPartition], n: usize) -> usize {
    let mut seen = vec![false; n];
    for p in parts {
        for &i in &p.example_indices {
            assert!(i < n);
            assert!(!seen[i], "index {i} assigned twice");
            seen[i] = true;
        }
    }
    seen.iter().filter(|s| !**s).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iid_disjoint_and_covering(n in 10usize..5000, clients in 1usize..=20, seed in 0u64..50) {
        let labels = random_labels(n, seed);
        let parts = partition_iid(&labels, clients, seed).unwrap();
        prop_assert_eq!(parts.len(), clients);
        prop_assert_eq!(assert_disjoint(&parts, n), 0);
        let (lo, hi) = parts.iter().fold((usize::MAX, 0), |(lo, hi), p| (lo.min(p.len()), hi.max(p.len())));
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn noniid_disjoint_with_documented_remainder(
        n in 10usize..5000,
        clients in 1usize..=20,
        shard_size in 1usize..300,
        per_client in 1usize..12,
        seed in 0u64..50,
    ) {
        let labels = random_labels(n, seed);
        match partition_noniid_shards(&labels, shard_size, per_client, clients, seed) {
            Ok(parts) => {
                let missing = assert_disjoint(&parts, n);
                let shards = n / shard_size;
                let dealt = shards.min(per_client * clients);
                prop_assert_eq!(missing, n - dealt * shard_size);
                prop_assert_eq!(unassigned(&parts, n).len(), missing);
                prop_assert!(parts.iter().all(|p| !p.is_empty() && p.len() % shard_size == 0));
                let score = heterogeneity_score(&parts, &histogram(labels.iter().copied()));
                prop_assert!((0.0..=1.0).contains(&score));
            }
            Err(_) => prop_assert!(n / shard_size < clients),
        }
    }

    #[test]
    fn partitions_never_reference_test_examples(n in 20usize..2000, clients in 1usize..=10, seed in 0u64..50) {
        let ids: Vec<usize> = (0..n).collect();
        let (train, test) = train_test_split(&ids, &SplitSpec { seed, ..Default::default() }).unwrap();
        let labels = random_labels(train.len(), seed);
        prop_assume!(train.len() >= clients);
        for p in partition_iid(&labels, clients, seed).unwrap() {
            for &i in &p.example_indices {
                prop_assert!(!test.contains(&train[i]));
            }
        }
    }
}

#[test]
fn twelve_example_hand_case_is_label_pure() {
    let labels: Vec<Label> = [Label::Negative, Label::Neutral, Label::Positive]
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, 4))
        .collect();
    for seed in 0..50 {
        let parts = partition_noniid_shards(&labels, 4, 1, 3, seed).unwrap();
        let mut classes: Vec<usize> = parts
            .iter()
            .map(|p| {
                assert_eq!(p.label_histogram.iter().filter(|&&c| c > 0).count(), 1);
                p.label_histogram.iter().position(|&c| c == 4).unwrap()
            })
            .collect();
        classes.sort_unstable();
        assert_eq!(classes, [0, 1, 2]);
    }
}

#[test]
fn iid_clients_track_global_label_mix() {
    for seed in 0..20 {
        for (n, clients) in [(1000, 10), (2400, 10), (3000, 5), (1000, 2)] {
            let labels = random_labels(n, 1000 + seed);
            let global = histogram(labels.iter().copied());
            let parts = partition_iid(&labels, clients, seed).unwrap();
            for p in &parts {
                let tv = total_variation(&p.label_histogram, &global);
                assert!(tv < 0.15, "seed {seed} n {n} clients {clients}: tv {tv}");
            }
            assert!(heterogeneity_score(&parts, &global) < 0.15);
        }
    }
}

#[test]
fn noniid_is_more_heterogeneous_than_iid() {
    let labels = random_labels(2400, 4);
    let global = histogram(labels.iter().copied());
    let iid = heterogeneity_score(&partition_iid(&labels, 10, 1).unwrap(), &global);
    let non = heterogeneity_score(&partition_noniid_shards(&labels, 24, 10, 10, 1).unwrap(), &global);
    assert!(non > 2.0 * iid, "non-IID {non} vs IID {iid}");
}
