use conpac::datasets::{
    generate_planted, generate_planted_features, PlantedFeatureSpec, PlantedSpec,
};
use conpac::engine::{self, count_inconsistent_triplets, BpConfig};
use conpac::knn::KnnConfig;
use conpac::model::{PairTable, Partition};
use conpac::pipeline::{cluster, with_threads, Input, Mode, RunConfig};
use conpac::potentials::{
    apply_constraints, unary_energies, ConstraintSet, FeatureMatrix, DEFAULT_E_CON,
};
use proptest::prelude::*;

fn random_table(n: usize, probs: &[f64]) -> PairTable {
    let mut it = probs.iter();
    PairTable::complete(n, |_, _| unary_energies(*it.next().unwrap()))
}

fn instance(max_n: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (3..=max_n).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec(0.02f64..0.98, n * (n - 1) / 2),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn output_is_valid_and_trace_ends_clean((n, probs) in instance(24)) {
        let mut table = random_table(n, &probs);
        let (partition, trace) = engine::run(&mut table, &BpConfig::default()).unwrap();
        prop_assert_eq!(count_inconsistent_triplets(&table), 0);
        prop_assert_eq!(trace.inconsistent_after_merge, 0);
        prop_assert!(!trace.inconsistent_triplets.is_empty());
        prop_assert_eq!(trace.inconsistent_triplets.len(), trace.iterations + 1);
        prop_assert!(partition.num_nonsingleton() <= partition.num_clusters());
        prop_assert_eq!(partition.labels().iter().max().unwrap() + 1, partition.num_clusters());
    }

    #[test]
    fn run_is_identical_across_thread_counts((n, probs) in instance(30)) {
        let go = |threads| {
            with_threads(threads, || {
                let mut table = random_table(n, &probs);
                let out = engine::run(&mut table, &BpConfig::default()).unwrap();
                let bits: Vec<(u64, u64)> = table.messages().iter().map(|m| (m.e0.to_bits(), m.e1.to_bits())).collect();
                (out, bits)
            })
            .unwrap()
        };
        let one = go(1);
        prop_assert_eq!(&go(4), &one);
        prop_assert_eq!(&go(8), &one);
    }

    #[test]
    fn normalization_does_not_change_the_partition((n, probs) in instance(20)) {
        let run = |normalize_messages| {
            let cfg = BpConfig { max_iters: 8, normalize_messages, ..BpConfig::default() };
            engine::run(&mut random_table(n, &probs), &cfg).unwrap()
        };
        let (a, ta) = run(true);
        let (b, tb) = run(false);
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta.inconsistent_triplets, tb.inconsistent_triplets);
    }

    #[test]
    fn relabeling_points_permutes_the_output((n, probs) in instance(16), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let base = random_table(n, &probs);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        // point p of the original instance becomes point perm[p]
        let mut inv = vec![0; n];
        for (p, &q) in perm.iter().enumerate() {
            inv[q] = p;
        }
        let mut permuted = PairTable::complete(n, |a, b| base.unary(base.index_of(inv[a], inv[b]).unwrap()));
        let (want, _) = engine::run(&mut base.clone(), &BpConfig::default()).unwrap();
        let (got, _) = engine::run(&mut permuted, &BpConfig::default()).unwrap();
        let mapped: Vec<usize> = (0..n).map(|q| want.label(inv[q])).collect();
        prop_assert_eq!(got, Partition::from_labels(&mapped));
    }

    #[test]
    fn consistent_constraints_are_honored(
        sizes in proptest::collection::vec(1usize..6, 2..5),
        seed in any::<u64>(),
        picks in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 1..15),
    ) {
        let spec = PlantedSpec::new(sizes, seed);
        let (mut table, truth) = generate_planted(&spec).unwrap();
        let n = truth.len();
        let mut set = ConstraintSet::new();
        for (a, b) in picks {
            let (i, j) = (a.index(n), b.index(n));
            if i == j {
                continue;
            }
            if truth[i] == truth[j] {
                set.add_must_link(i, j).unwrap();
            } else {
                set.add_cannot_link(i, j).unwrap();
            }
        }
        apply_constraints(&mut table, &set, DEFAULT_E_CON).unwrap();
        let (p, _) = engine::run(&mut table, &BpConfig::default()).unwrap();
        for k in set.must_links() {
            prop_assert!(p.same_cluster(k.i, k.j));
        }
        for k in set.cannot_links() {
            prop_assert!(!p.same_cluster(k.i, k.j));
        }
    }

    #[test]
    fn knn_mode_with_all_neighbors_matches_full_mode(
        classes in 1usize..4,
        size in 2usize..7,
        spread in 0.05f64..0.4,
        seed in any::<u64>(),
    ) {
        let (f, _) = generate_planted_features(&PlantedFeatureSpec { num_classes: classes, class_size: size, dim: 6, spread, seed }).unwrap();
        let n = f.n();
        prop_assume!(n >= 2);
        let full = cluster(Input::Features(&f), &RunConfig::default(), None).unwrap();
        for exact in [true, false] {
            let cfg = RunConfig {
                mode: Mode::Knn,
                knn: KnnConfig { k: n - 1, exact, ..KnnConfig::default() },
                ..RunConfig::default()
            };
            let sparse = cluster(Input::Features(&f), &cfg, None).unwrap();
            prop_assert_eq!(&sparse.partition, &full.partition);
            prop_assert_eq!(&sparse.trace, &full.trace);
        }
    }

    #[test]
    fn feature_scale_does_not_matter(
        classes in 1usize..4,
        size in 2usize..6,
        seed in any::<u64>(),
        scales in proptest::collection::vec(0.01f64..100.0, 24),
    ) {
        let (f, _) = generate_planted_features(&PlantedFeatureSpec { num_classes: classes, class_size: size, dim: 5, spread: 0.3, seed }).unwrap();
        let scaled: Vec<Vec<f64>> = (0..f.n()).map(|i| f.row(i).iter().map(|v| v * scales[i]).collect()).collect();
        let g = FeatureMatrix::from_rows(&scaled).unwrap();
        let a = cluster(Input::Features(&f), &RunConfig::default(), None).unwrap();
        let b = cluster(Input::Features(&g), &RunConfig::default(), None).unwrap();
        prop_assert_eq!(a.partition, b.partition);
    }
}
