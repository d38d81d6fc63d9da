use std::path::Path;

use conpac::io::{self, FeatureFormat, StatsReport};
use conpac::potentials::{ConstraintSet, FeatureMatrix, SimilarityMatrix};
use proptest::prelude::*;
use tempfile::TempDir;

fn matrix(max_n: usize, max_d: usize) -> impl Strategy<Value = FeatureMatrix> {
    (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-1e6f64..1e6, n * d)
            .prop_map(move |data| FeatureMatrix::new(n, d, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_features_round_trip(m in matrix(12, 6)) {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("f.csv");
        io::write_features(&path, &m, FeatureFormat::Csv).unwrap();
        let back = io::read_features(&path, FeatureFormat::Csv).unwrap();
        prop_assert_eq!((back.n(), back.dim()), (m.n(), m.dim()));
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn binary_features_round_trip_bit_exact(m in matrix(12, 6)) {
        // binary stores f32, so start from f32-representable values
        let data: Vec<f64> = m.as_slice().iter().map(|&v| v as f32 as f64).collect();
        let m = FeatureMatrix::new(m.n(), m.dim(), data).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("f.bin");
        io::write_features(&path, &m, FeatureFormat::Binary).unwrap();
        let back = io::read_features(&path, FeatureFormat::Binary).unwrap();
        prop_assert_eq!((back.n(), back.dim()), (m.n(), m.dim()));
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(io::encode_binary(&back), std::fs::read(&path).unwrap());
    }

    #[test]
    fn similarity_round_trip(n in 1usize..10, seed in any::<u64>()) {
        let vals: Vec<f64> = (0..n * n).map(|k| ((seed ^ k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 11) as f64 / (1u64 << 53) as f64).collect();
        let sim = SimilarityMatrix::from_fn(n, |i, j| vals[i * n + j]);
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("s.csv");
        io::write_similarity(&path, &sim).unwrap();
        let back = io::read_similarity(&path).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((sim.get(i, j) - back.get(i, j)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn labels_round_trip(labels in proptest::collection::vec(0usize..50, 1..40)) {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("l.csv");
        io::write_labels(&path, &labels).unwrap();
        prop_assert_eq!(io::read_pred_labels(&path).unwrap(), labels.clone());
        let truth = io::read_truth_labels(&path).unwrap();
        prop_assert!(truth.iter().zip(&labels).all(|(t, &l)| *t == Some(l)));
    }

    #[test]
    fn constraints_round_trip(pairs in proptest::collection::vec((0usize..20, 0usize..20, any::<bool>()), 0..30)) {
        let mut set = ConstraintSet::new();
        for (i, j, must) in pairs {
            if i == j {
                continue;
            }
            // conflicting additions are rejected and leave the set unchanged
            let _ = if must { set.add_must_link(i, j) } else { set.add_cannot_link(i, j) };
        }
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("c.txt");
        io::write_constraints(&path, &set).unwrap();
        prop_assert_eq!(io::read_constraints(&path).unwrap(), set);
    }
}

#[test]
fn stats_report_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("s.toml");
    let mut r = StatsReport::new("cluster");
    r.num_points = 10;
    r.num_clusters = 3;
    r.num_nonsingleton = 2;
    r.mode = Some("knn".into());
    r.iterations = Some(4);
    r.converged = Some(true);
    r.inconsistent_triplets = Some(vec![12, 3, 1, 0, 0]);
    r.update_list_sizes = Some(vec![9, 4, 2, 0, 0]);
    r.merge_flips = Some(1);
    r.time_inference_s = Some(0.125);
    r.pairwise_f = Some(0.75);
    r.write(&path).unwrap();
    assert_eq!(StatsReport::read(&path).unwrap(), r);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("schema_version = 1"));
}

#[test]
fn stats_report_rejects_other_schema_versions() {
    assert!(StatsReport::from_toml("schema_version = 2\ncommand = \"x\"\nnum_points = 1\nnum_clusters = 1\nnum_nonsingleton = 0\n").is_err());
}

#[test]
fn truth_sentinel_marks_unlabeled() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "index,label\n0,-1\n1,3\n2,-1\n").unwrap();
    assert_eq!(
        io::read_truth_labels(&path).unwrap(),
        vec![None, Some(3), None]
    );
    assert!(io::read_pred_labels(&path).is_err());
    assert!(io::read_truth_labels(Path::new("/nonexistent/t.csv")).is_err());
}
