use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use hotspot_core::baselines::{global_kmeans, predict_cmeans, predict_kmeans};
use hotspot_core::evaluation::{evaluate, generate_synthetic, EvalConfig, SyntheticSpec};
use hotspot_core::feature_space::normalize;
use hotspot_core::prediction::CommunityTag;
use hotspot_core::{
    predict_hotspots, FeaturePoint, KMeansParams, Method, PointCloud, PredictConfig,
};

fn two_blobs() -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut points = Vec::new();
    for (b, c) in [0.25, 0.75].into_iter().enumerate() {
        for i in 0..50 {
            let features = vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)];
            points.push(FeaturePoint {
                id: format!("b{b}-{i}"),
                features,
                geo: None,
            });
        }
    }
    // Anchor the bounding box so normalized coordinates equal raw ones.
    points.push(FeaturePoint {
        id: "lo".into(),
        features: vec![0.0, 0.0],
        geo: None,
    });
    points.push(FeaturePoint {
        id: "hi".into(),
        features: vec![1.0, 1.0],
        geo: None,
    });
    PointCloud::new(points, vec!["x".into(), "y".into()], None).unwrap()
}

fn blob_config(lambda: f64) -> PredictConfig {
    PredictConfig {
        bins: 8,
        epsilon: Some(1.5 / 8.0),
        lambda,
        k_global: 2,
        seed: 3,
        ..PredictConfig::default()
    }
}

#[test]
fn two_blobs_get_one_hotspot_each() {
    let cloud = two_blobs();
    let pred = predict_hotspots(&cloud, &blob_config(0.0)).unwrap();
    for target in [0.25, 0.75] {
        let near = pred
            .hotspots
            .iter()
            .filter(|h| {
                h.center_normalized
                    .iter()
                    .all(|v| (v - target).abs() <= 2.0 / 8.0)
            })
            .count();
        assert!(near >= 1, "no hotspot near {target}: {:?}", pred.hotspots);
    }
}

#[test]
fn lambda_shifts_by_scaled_centroid() {
    let cloud = two_blobs();
    let base = predict_hotspots(&cloud, &blob_config(0.0)).unwrap();
    let shifted = predict_hotspots(&cloud, &blob_config(0.2)).unwrap();
    let normalized = normalize(&cloud).unwrap();
    let parts = hotspot_core::partition::partition_cloud(
        &cloud,
        8,
        blob_config(0.0).community_config().unwrap(),
    )
    .unwrap();
    assert_eq!(normalized.points.len(), cloud.len());
    assert_eq!(base.hotspots.len(), shifted.hotspots.len());
    for (a, b) in base.hotspots.iter().zip(&shifted.hotspots) {
        let CommunityTag::Id(id) = a.community_id else {
            panic!("expected community id")
        };
        let centroid = &parts
            .communities
            .iter()
            .find(|c| c.id == id)
            .unwrap()
            .centroid;
        for ((x, y), c) in a
            .center_normalized
            .iter()
            .zip(&b.center_normalized)
            .zip(centroid)
        {
            assert!((y - x - 0.2 * c).abs() < 1e-12);
        }
        assert!(!a.adjusted);
        assert_eq!(b.adjusted, centroid.iter().any(|c| *c != 0.0));
    }
}

#[test]
fn single_blob_single_hotspot() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let points = (0..40)
        .map(|i| FeaturePoint {
            id: i.to_string(),
            features: vec![5.0 + noise.sample(&mut rng), -1.0 + noise.sample(&mut rng)],
            geo: None,
        })
        .collect();
    let cloud = PointCloud::new(points, vec!["a".into(), "b".into()], None).unwrap();
    let cfg = PredictConfig {
        k_global: 1,
        lambda: 0.0,
        epsilon: Some(3.0),
        ..PredictConfig::default()
    };
    let pred = predict_hotspots(&cloud, &cfg).unwrap();
    assert_eq!(pred.hotspots.len(), 1);
    let mean_a = cloud.points().iter().map(|p| p.features[0]).sum::<f64>() / 40.0;
    assert!((pred.hotspots[0].center_original_units[0] - mean_a).abs() < 1e-9);
}

#[test]
fn single_community_matches_global_kmeans() {
    let data = generate_synthetic(&SyntheticSpec {
        n_points: 3000,
        seed: 9,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let cfg = PredictConfig {
        epsilon: Some(4.0),
        lambda: 0.0,
        k_global: 7,
        seed: 21,
        ..PredictConfig::default()
    };
    let ours = predict_hotspots(&data.cloud, &cfg).unwrap();
    let global = global_kmeans(
        &normalize(&data.cloud).unwrap(),
        7,
        21,
        &KMeansParams::default(),
    )
    .unwrap();
    let got: Vec<Vec<f64>> = ours
        .hotspots
        .iter()
        .map(|h| h.center_normalized.clone())
        .collect();
    assert_eq!(got, global.centers.to_rows());
}

#[test]
fn baselines_report_global_hotspots() {
    let data = generate_synthetic(&SyntheticSpec {
        n_points: 2000,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let params = KMeansParams::default();
    let km = predict_kmeans(&data.cloud, 5, 1, &params).unwrap();
    let cm = predict_cmeans(&data.cloud, 5, 2.0, 1, &params).unwrap();
    for p in [&km, &cm] {
        assert_eq!(p.hotspots.len(), 5);
        assert!(p
            .hotspots
            .iter()
            .all(|h| h.community_id == CommunityTag::Global && h.geo.is_some()));
    }
    assert_eq!(km.method, Method::Kmeans);
    assert_eq!(cm.method, Method::Cmeans);
}

#[test]
fn evaluation_gives_baselines_the_same_budget() {
    let data = generate_synthetic(&SyntheticSpec {
        n_points: 4000,
        seed: 1,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let report = evaluate(
        &data.cloud,
        &[Method::Ours, Method::Kmeans, Method::Cmeans],
        &EvalConfig::default(),
    )
    .unwrap();
    assert_eq!(report.rows.len(), 3);
    let k = report.rows[0].hotspots;
    assert!(report
        .rows
        .iter()
        .all(|r| r.hotspots == k && r.accuracy.removed == 66));
    assert!(report.headline.is_some());
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let data = generate_synthetic(&SyntheticSpec {
        n_points: 20_000,
        n_hotspots: 12,
        seed: 5,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let cfg = PredictConfig {
        k_global: 12,
        seed: 8,
        ..PredictConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| predict_hotspots(&data.cloud, &cfg).unwrap())
    };
    let one = run(1);
    for threads in [2, 7] {
        assert_eq!(run(threads), one);
    }
}

#[test]
fn frozen_reference_prediction() {
    let data = generate_synthetic(&SyntheticSpec {
        n_points: 5000,
        seed: 42,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let pred = predict_hotspots(&data.cloud, &PredictConfig::default()).unwrap();
    assert_eq!(pred.hotspots.len(), 10);
    assert_eq!(
        pred.hotspots[0].center_normalized,
        [0.10400065931535377, 0.27408030412415796, 0.9331512689304442]
    );
    assert_eq!(
        pred.hotspots[9].center_normalized,
        [1.0169447061655033, 0.6280088752875937, 0.8082116797763539]
    );
}
