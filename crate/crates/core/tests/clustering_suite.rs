//! Clustering checks against independent references: exhaustive-scan
//! assignment, running-mean exactness, blob recovery, and SSE parity with
//! full-batch Lloyd from the same initialization.

use d4m_core::numerics::StreamRng;
use d4m_core::prototypes::{assign, fit_category, init_centers, update, KMeansConfig, KMeansState};
use d4m_core::reference;

fn random_points(rng: &mut StreamRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| rng.normal_vec(d)).collect()
}

#[test]
fn assignment_matches_exhaustive_scan_on_fuzzed_instances() {
    let mut rng = StreamRng::new(101).substream("fuzz");
    for _ in 0..100 {
        let d = 1 + rng.below(6);
        let c = 1 + rng.below(8);
        let centers = random_points(&mut rng, c, d);
        let state = KMeansState { centers: centers.clone(), counts: vec![0; c] };
        for _ in 0..50 {
            let z = rng.normal_vec(d);
            assert_eq!(assign(&state, &z), reference::nearest_center_scan(&centers, &z));
        }
    }
}

#[test]
fn running_mean_exact_to_1e12() {
    let mut rng = StreamRng::new(202).substream("mean");
    for _ in 0..20 {
        let n = 50 + rng.below(400);
        let points = random_points(&mut rng, n, 6);
        let mut state = KMeansState { centers: vec![vec![0.0; 6]], counts: vec![0] };
        for p in &points {
            update(&mut state, 0, p);
        }
        for j in 0..6 {
            let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
            assert!((state.centers[0][j] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn well_separated_blobs_are_recovered() {
    let mut rng = StreamRng::new(303).substream("blobs");
    let n_per = 200;
    let std = 0.5;
    let means = [vec![-4.0, -4.0], vec![4.0, 4.0]];
    let mut points = Vec::new();
    for mean in &means {
        for _ in 0..n_per {
            points.push(vec![mean[0] + std * rng.normal(), mean[1] + std * rng.normal()]);
        }
    }
    let cfg = KMeansConfig { centers_per_category: 2, passes: 5, batch_size: 64 };
    let state = fit_category(&points, &cfg, &mut StreamRng::new(7).substream("fit")).unwrap();

    let tolerance = 3.0 * std / (n_per as f64).sqrt();
    for mean in &means {
        let nearest = state
            .centers
            .iter()
            .map(|c| ((c[0] - mean[0]).powi(2) + (c[1] - mean[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < tolerance, "center {nearest:.4} away from blob mean; tolerance {tolerance:.4}");
    }
}

#[test]
fn sse_within_ten_percent_of_lloyd_from_same_init() {
    let mut rng = StreamRng::new(404).substream("sse");
    for trial in 0..5 {
        // Mixture of mildly separated clusters.
        let mut points = Vec::new();
        for c in 0..4 {
            let cx = (c % 2) as f64 * 5.0;
            let cy = (c / 2) as f64 * 5.0;
            for _ in 0..100 {
                points.push(vec![cx + rng.normal(), cy + rng.normal(), rng.normal()]);
            }
        }
        // Identical initialization for both algorithms.
        let mut init_rng = StreamRng::new(1000 + trial).substream("init");
        let initial = init_centers(&points, 4, &mut init_rng).unwrap();

        let cfg = KMeansConfig { centers_per_category: 4, passes: 5, batch_size: 64 };
        let mut fit_rng = StreamRng::new(1000 + trial);
        // fit_category derives its init substream from this rng's "init"
        // child, which is exactly how `initial` was drawn above.
        let minibatch = fit_category(&points, &cfg, &mut fit_rng).unwrap();

        let lloyd = reference::lloyd_kmeans(&initial.centers, &points, 200);
        let sse_mb = reference::sse(&minibatch.centers, &points);
        let sse_lloyd = reference::sse(&lloyd, &points);
        assert!(
            sse_mb <= sse_lloyd * 1.10,
            "trial {trial}: minibatch SSE {sse_mb:.3} vs Lloyd {sse_lloyd:.3}"
        );
    }
}
