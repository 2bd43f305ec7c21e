#![allow(clippy::needless_range_loop)]

use std::fs;

use caaf_core::AffinityMatrix;
use caaf_data::{
    cosine_affinity, generate_synthetic, initial_ranking, load_dataset, temporal_affinity, write_dataset, DataError,
    DatasetManifest, FeatureSet, SyntheticConfig,
};
use proptest::prelude::*;

fn small() -> SyntheticConfig {
    SyntheticConfig {
        seed: 3,
        n_clusters: 5,
        per_cluster: 20,
        dim: 8,
        noise_sigma: 0.5,
        timestamps: false,
    }
}

#[test]
fn round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&small()).unwrap();
    let manifest = write_dataset(&data, dir.path()).unwrap();
    let loaded = load_dataset(&manifest).unwrap();
    assert_eq!(loaded.gallery.len(), 100);
    assert_eq!(loaded.gallery.dim(), 8);
    assert_eq!(loaded.probes.len(), 5);
    assert_eq!(loaded.ground_truth.relevant.len(), 5);
    assert_eq!(loaded.gallery.raw(), data.gallery.raw());
    assert_eq!(loaded.probes.raw(), data.probes.raw());
    assert!(loaded.gallery.timestamps().is_none());
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(&generate_synthetic(&small()).unwrap(), a.path()).unwrap();
    write_dataset(&generate_synthetic(&small()).unwrap(), b.path()).unwrap();
    for name in ["features.f32", "ids.txt", "ground_truth.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn timestamps_survive_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&SyntheticConfig {
        timestamps: true,
        ..small()
    })
    .unwrap();
    let loaded = load_dataset(&write_dataset(&data, dir.path()).unwrap()).unwrap();
    assert_eq!(loaded.gallery.timestamps(), data.gallery.timestamps());
    let probe = loaded.probe_vector("c000_probe").unwrap();
    temporal_affinity(&loaded.gallery, probe, 0.005).unwrap();
}

#[test]
fn unknown_ground_truth_id_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&generate_synthetic(&small()).unwrap(), dir.path()).unwrap();
    fs::write(dir.path().join("ground_truth.json"), r#"{"c000_probe": ["ghost"]}"#).unwrap();
    match load_dataset(&manifest) {
        Err(DataError::UnknownId(id)) => assert_eq!(id, "ghost"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn shape_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_dataset(&generate_synthetic(&small()).unwrap(), dir.path()).unwrap();
    let mut manifest = DatasetManifest::read(&path).unwrap();
    manifest.features.dim = 7;
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    assert!(matches!(load_dataset(&path), Err(DataError::Shape(_))));
}

#[test]
fn missing_output_dir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&small()).unwrap();
    assert!(write_dataset(&data, &dir.path().join("nope")).is_err());
}

#[test]
fn noiseless_clusters_rank_perfectly() {
    let data = generate_synthetic(&SyntheticConfig {
        noise_sigma: 0.0,
        ..small()
    })
    .unwrap();
    for probe in data.probes.ids() {
        let relevant = data.relevance(probe).unwrap();
        let v = data.probe_vector(probe).unwrap();
        let rank = initial_ranking(&data.gallery, v).unwrap();
        assert!(rank[..20].iter().all(|&i| relevant[i]));
        let a = cosine_affinity(&data.gallery, v).unwrap();
        let p = a.probe_index();
        for i in 0..data.gallery.len() {
            if relevant[i] {
                assert!((a.get(i, p) - 1.0).abs() < 1e-6);
            } else {
                assert!(a.get(i, p) < 1.0 - 1e-6);
            }
        }
    }
}

fn feature_set(n: usize, dim: usize, values: &[f32], times: &[f64]) -> FeatureSet {
    let ids = (0..n).map(|i| format!("x{i}")).collect();
    FeatureSet::new(ids, dim, values[..n * dim].to_vec())
        .unwrap()
        .with_timestamps(times[..n].to_vec())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affinities_satisfy_invariants(
        n in 1usize..20,
        dim in 2usize..6,
        values in proptest::collection::vec(0.05f32..1.0, 120),
        signs in proptest::collection::vec(any::<bool>(), 120),
        times in proptest::collection::vec(0.0..1000.0f64, 20),
        lambda in 0.0..0.1f64,
    ) {
        let signed: Vec<f32> = values.iter().zip(&signs).map(|(&v, &s)| if s { v } else { -v }).collect();
        let g = feature_set(n, dim, &signed, &times);
        let probe = &signed[100..100 + dim];
        let cos = cosine_affinity(&g, probe).unwrap();
        let tmp = temporal_affinity(&g, probe, lambda).unwrap();
        for a in [&cos, &tmp] {
            AffinityMatrix::new(a.dim(), a.as_slice().to_vec()).unwrap();
        }
        for (t, c) in tmp.as_slice().iter().zip(cos.as_slice()) {
            prop_assert!(*t <= *c + 1e-15);
        }
    }

    #[test]
    fn duplicate_gallery_sample_maximizes_probe_column(
        n in 2usize..20,
        pick in 0usize..20,
        values in proptest::collection::vec(-1.0f32..1.0, 120),
    ) {
        let dim = 5;
        let ids = (0..n).map(|i| format!("x{i}")).collect();
        let g = FeatureSet::new(ids, dim, values[..n * dim].to_vec()).unwrap();
        let pick = pick % n;
        prop_assume!(g.vector(pick).iter().any(|&x| x != 0.0));
        let a = cosine_affinity(&g, g.vector(pick)).unwrap();
        let p = a.probe_index();
        let max = (0..n).map(|i| a.get(i, p)).fold(0.0, f64::max);
        prop_assert!((a.get(pick, p) - max).abs() < 1e-12);
    }
}
