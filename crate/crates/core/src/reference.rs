//! Straightforward reference implementations used as independent checks.
//!
//! Nothing here is on a production path; these exist so tests can compare
//! the streaming clustering against textbook algorithms that share no code
//! with it.

/// Index of the nearest center by an explicit full scan over per-center
/// distances, ties to the lowest index.
pub fn nearest_center_scan(centers: &[Vec<f64>], point: &[f64]) -> usize {
    let distances: Vec<f64> = centers
        .iter()
        .map(|c| c.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate() {
        if d < distances[best] {
            best = i;
        }
    }
    best
}

/// Within-cluster sum of squared distances under nearest-center assignment.
pub fn sse(centers: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            let c = nearest_center_scan(centers, p);
            centers[c].iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

/// Full-batch Lloyd iterations from the given initialization, run until the
/// assignment is stable or `max_iters` is hit. Empty clusters keep their
/// previous center.
pub fn lloyd_kmeans(initial_centers: &[Vec<f64>], points: &[Vec<f64>], max_iters: usize) -> Vec<Vec<f64>> {
    let mut centers = initial_centers.to_vec();
    let d = centers[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = nearest_center_scan(&centers, p);
            if c != assignment[i] {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (i, p) in points.iter().enumerate() {
            counts[assignment[i]] += 1;
            for (s, v) in sums[assignment[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..centers.len() {
            if counts[c] > 0 {
                for (cv, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *cv = s / counts[c] as f64;
                }
            }
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lloyd_recovers_two_obvious_clusters() {
        let points = vec![
            vec![0.0, 0.1],
            vec![0.1, -0.1],
            vec![-0.1, 0.0],
            vec![10.0, 10.1],
            vec![10.1, 9.9],
            vec![9.9, 10.0],
        ];
        let init = vec![points[0].clone(), points[3].clone()];
        let centers = lloyd_kmeans(&init, &points, 50);
        assert!((centers[0][0] - 0.0).abs() < 0.1);
        assert!((centers[1][0] - 10.0).abs() < 0.1);
        assert!(sse(&centers, &points) < 0.2);
    }
}
