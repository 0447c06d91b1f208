//! End-to-end checks of manifest ingestion, split discipline, and sampling.

use std::collections::BTreeSet;
use std::path::PathBuf;

use cama_core::dataset::{
    DRESDEN_SPLIT, Manifest, ManifestRow, PatchStore, SplitPolicy, build_splits, dresden_policy,
    sample_training_tuple,
};
use cama_core::error::CoreError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A purely in-memory manifest: `n_per_class` rows for each class, with
/// optional device ids cycling through `devices_per_class`.
fn fake_manifest(classes: &[u32], n_per_class: usize, devices_per_class: usize) -> Manifest {
    let mut rows = Vec::new();
    for &c in classes {
        for k in 0..n_per_class {
            rows.push(ManifestRow {
                path: PathBuf::from(format!("model_{c}/img_{k}.png")),
                label: c,
                scene_seed: Some(k as u64),
                device_id: (devices_per_class > 0)
                    .then(|| format!("dev_{c}_{}", k % devices_per_class)),
            });
        }
    }
    Manifest {
        root: PathBuf::from("/nonexistent"),
        rows,
    }
}

fn path_set(rows: &[ManifestRow]) -> BTreeSet<PathBuf> {
    rows.iter().map(|r| r.path.clone()).collect()
}

#[test]
fn fraction_split_counts_and_disjointness() {
    let m = fake_manifest(&[1, 2], 10, 0);
    let plan = build_splits(
        &m,
        &[1, 2],
        &[1, 2],
        &SplitPolicy::Fractions { q: 0.5, test: 0.2 },
        42,
    )
    .unwrap();
    let report = plan.report(42);
    for c in [1u32, 2] {
        let cc = report.per_class[&c];
        assert_eq!(cc.p_test, 2, "test fraction 0.2 of 10");
        assert_eq!(cc.q_data, 5);
        assert_eq!(cc.p_data, 3);
    }
    let (q, p, t) = (
        path_set(&plan.q_data),
        path_set(&plan.p_data),
        path_set(&plan.p_test),
    );
    assert!(q.is_disjoint(&p) && q.is_disjoint(&t) && p.is_disjoint(&t));
    assert_eq!(q.len() + p.len() + t.len(), 20);
}

#[test]
fn same_seed_reproduces_assignment() {
    let m = fake_manifest(&[1, 2, 3], 30, 0);
    let pol = SplitPolicy::Fractions { q: 0.4, test: 0.2 };
    let a = build_splits(&m, &[1, 2], &[1, 2, 3], &pol, 7).unwrap();
    let b = build_splits(&m, &[1, 2], &[1, 2, 3], &pol, 7).unwrap();
    let c = build_splits(&m, &[1, 2], &[1, 2, 3], &pol, 8).unwrap();
    assert_eq!(path_set(&a.q_data), path_set(&b.q_data));
    assert_eq!(path_set(&a.p_data), path_set(&b.p_data));
    assert_eq!(path_set(&a.p_test), path_set(&b.p_test));
    assert_ne!(path_set(&a.p_test), path_set(&c.p_test));
}

#[test]
fn manifest_order_does_not_change_assignment() {
    let mut m = fake_manifest(&[1, 2], 20, 0);
    let pol = SplitPolicy::Fractions { q: 0.3, test: 0.2 };
    let a = build_splits(&m, &[1], &[1, 2], &pol, 5).unwrap();
    m.rows.reverse();
    let b = build_splits(&m, &[1], &[1, 2], &pol, 5).unwrap();
    assert_eq!(path_set(&a.q_data), path_set(&b.q_data));
}

#[test]
fn non_q_classes_contribute_nothing_to_q() {
    let m = fake_manifest(&[1, 2, 3, 4], 12, 0);
    let plan = build_splits(
        &m,
        &[1, 2],
        &[1, 2, 3, 4],
        &SplitPolicy::Fractions { q: 0.5, test: 0.25 },
        3,
    )
    .unwrap();
    assert!(plan.q_data.iter().all(|r| r.label == 1 || r.label == 2));
    // Classes outside p are dropped entirely.
    let m2 = fake_manifest(&[1, 2, 9], 12, 0);
    let plan2 = build_splits(
        &m2,
        &[1],
        &[1, 2],
        &SplitPolicy::Fractions { q: 0.5, test: 0.25 },
        3,
    )
    .unwrap();
    for rows in [&plan2.q_data, &plan2.p_data, &plan2.p_test] {
        assert!(rows.iter().all(|r| r.label != 9));
    }
}

#[test]
fn empty_class_is_rejected() {
    let m = fake_manifest(&[1], 10, 0);
    let err = build_splits(
        &m,
        &[1, 2],
        &[1, 2],
        &SplitPolicy::Fractions { q: 0.5, test: 0.2 },
        1,
    )
    .unwrap_err();
    assert!(matches!(err, CoreError::EmptyClass { label: 2, .. }));

    // A policy that would leave p_data empty is also rejected.
    let err2 = build_splits(
        &m,
        &[1],
        &[1],
        &SplitPolicy::Fractions { q: 0.9, test: 0.1 },
        1,
    )
    .unwrap_err();
    assert!(matches!(err2, CoreError::EmptyClass { .. }));
}

#[test]
fn q_must_be_subset_of_p() {
    let m = fake_manifest(&[1, 2, 3], 10, 0);
    let err = build_splits(
        &m,
        &[3],
        &[1, 2],
        &SplitPolicy::Fractions { q: 0.5, test: 0.2 },
        1,
    )
    .unwrap_err();
    assert!(matches!(err, CoreError::InvalidParameter(_)));
}

#[test]
fn device_metadata_makes_splits_device_disjoint() {
    // 6 devices × 5 images per class; targets 10 q / 10 test images.
    let m = fake_manifest(&[1, 2], 30, 6);
    let plan = build_splits(
        &m,
        &[1, 2],
        &[1, 2],
        &SplitPolicy::Fractions {
            q: 1.0 / 3.0,
            test: 1.0 / 3.0,
        },
        11,
    )
    .unwrap();
    let devs = |rows: &[ManifestRow]| -> BTreeSet<String> {
        rows.iter().filter_map(|r| r.device_id.clone()).collect()
    };
    let (dq, dp, dt) = (devs(&plan.q_data), devs(&plan.p_data), devs(&plan.p_test));
    assert!(dq.is_disjoint(&dp) && dq.is_disjoint(&dt) && dp.is_disjoint(&dt));
    assert!(!dq.is_empty() && !dp.is_empty() && !dt.is_empty());
    // All 60 images still assigned exactly once.
    assert_eq!(
        plan.q_data.len() + plan.p_data.len() + plan.p_test.len(),
        60
    );
}

#[test]
fn dresden_counts_reproduce_table() {
    // Synthesize a manifest with exactly the per-class totals of the
    // 12-model benchmark, then check the split reproduces each cell.
    let mut rows = Vec::new();
    for (label, _, q, p, t) in DRESDEN_SPLIT {
        for k in 0..(q + p + t) {
            rows.push(ManifestRow {
                path: PathBuf::from(format!("class_{label}/img_{k}.jpg")),
                label,
                scene_seed: None,
                device_id: None,
            });
        }
    }
    let m = Manifest {
        root: PathBuf::from("."),
        rows,
    };
    let (q_classes, p_classes, policy) = dresden_policy();
    assert_eq!(q_classes, (1..=6).collect::<Vec<u32>>());
    assert_eq!(p_classes, (1..=12).collect::<Vec<u32>>());
    let plan = build_splits(&m, &q_classes, &p_classes, &policy, 0).unwrap();
    let report = plan.report(0);
    for (label, _, q, p, t) in DRESDEN_SPLIT {
        let cc = report.per_class[&label];
        assert_eq!((cc.q_data, cc.p_data, cc.p_test), (q, p, t), "class {label}");
    }
    assert_eq!(report.totals.q_data, 2508);
    assert_eq!(report.totals.p_data, 5037);
    assert_eq!(report.totals.p_test, 1200);
}

#[test]
fn csv_round_trip_preserves_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = fake_manifest(&[1, 2], 4, 2);
    m.root = dir.path().to_path_buf();
    let csv = dir.path().join("manifest.csv");
    m.write_csv(&csv).unwrap();
    let back = Manifest::read_csv(&csv).unwrap();
    assert_eq!(back.rows, m.rows);
    assert_eq!(back.root, dir.path());
}

#[test]
fn split_report_serializes_to_json() {
    let m = fake_manifest(&[1, 2], 10, 0);
    let plan = build_splits(
        &m,
        &[1],
        &[1, 2],
        &SplitPolicy::Fractions { q: 0.3, test: 0.2 },
        9,
    )
    .unwrap();
    let report = plan.report(9);
    let s = serde_json::to_string_pretty(&report).unwrap();
    let back: cama_core::dataset::SplitReport = serde_json::from_str(&s).unwrap();
    assert_eq!(back.totals, report.totals);
    assert_eq!(back.per_class, report.per_class);
}

#[test]
fn tuple_sampling_frequencies_are_uniform() {
    use cama_core::patches::Patch;
    use ndarray::Array3;

    // 6 classes × 4 patches; 60k draws.
    let classes: Vec<u32> = (1..=6).collect();
    let mut patches = Vec::new();
    for &c in &classes {
        for k in 0..4 {
            patches.push(Patch {
                pixels: Array3::from_elem((8, 8, 3), (c as f64 * 10.0 + k as f64) / 100.0),
                label: Some(c),
                augment_id: 0,
            });
        }
    }
    let store = PatchStore::from_patches(patches, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut target_counts = [0usize; 6];
    let mut augment_counts = [0usize; 8];
    let n = 60_000;
    for _ in 0..n {
        let (patch, y, y_prime) = sample_training_tuple(&store, &classes, &mut rng).unwrap();
        assert!(classes.contains(&y));
        assert_eq!(patch.label, Some(y));
        target_counts[(y_prime - 1) as usize] += 1;
        augment_counts[patch.augment_id as usize] += 1;
    }
    for c in target_counts {
        let f = c as f64 / n as f64;
        assert!(
            (f - 1.0 / 6.0).abs() <= 0.02 * (1.0 / 6.0),
            "target frequency {f}"
        );
    }
    for c in augment_counts {
        let f = c as f64 / n as f64;
        assert!(
            (f - 1.0 / 8.0).abs() <= 0.02 * (1.0 / 8.0),
            "augment frequency {f}"
        );
    }
}

#[test]
fn single_class_targets_are_constant() {
    use cama_core::patches::Patch;
    use ndarray::Array3;
    let patches = vec![Patch {
        pixels: Array3::from_elem((8, 8, 3), 0.5),
        label: Some(4),
        augment_id: 0,
    }];
    let store = PatchStore::from_patches(patches, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (_, y, y_prime) = sample_training_tuple(&store, &[4], &mut rng).unwrap();
        assert_eq!((y, y_prime), (4, 4));
    }
}
