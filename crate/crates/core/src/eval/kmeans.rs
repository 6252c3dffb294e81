//! Lloyd's k-means with greedy k-means++ seeding.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::{self, rng_for};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k` rows of centroids.
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    pub inertia: f64,
    pub converged: bool,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(x, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn weighted_pick(r: &mut rng::Rng, w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return r.random_range(0..w.len());
    }
    let mut t = r.random_range(0.0..total);
    for (i, &wi) in w.iter().enumerate() {
        if t < wi {
            return i;
        }
        t -= wi;
    }
    w.len() - 1
}

fn seed_centroids(points: &[&[f64]], k: usize, r: &mut rng::Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + libm::log(k as f64) as usize;
    let mut centroids = vec![points[r.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let c = weighted_pick(r, &d2);
            let nd: Vec<f64> = points
                .iter()
                .zip(&d2)
                .map(|(p, &d)| d.min(sq_dist(p, points[c])))
                .collect();
            let pot: f64 = nd.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.1) {
                best = Some((c, pot, nd));
            }
        }
        let (c, _, nd) = best.expect("at least one trial");
        centroids.push(points[c].to_vec());
        d2 = nd;
    }
    centroids
}

/// Clusters the rows of `features` (`[n, d]`) into `k` groups.
pub fn kmeans(features: &Tensor, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    let n = features.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "k-means needs 1 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    features.check_finite("kmeans features")?;
    let points: Vec<&[f64]> = (0..n).map(|i| features.row(i)).collect();
    let d = features.cols();
    let mut r = rng_for(seed, &[rng::TAG_KMEANS]);
    let mut centroids = seed_centroids(&points, k, &mut r);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // Empty clusters take the point farthest from its current centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n).filter(|&i| counts[labels[i]] > 1).max_by(|&a, &b| {
                    sq_dist(points[a], &centroids[labels[a]])
                        .total_cmp(&sq_dist(points[b], &centroids[labels[b]]))
                });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    labels[i] = c;
                    centroids[c] = points[i].to_vec();
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    Ok(KMeansResult {
        labels,
        centroids,
        iterations,
        inertia,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::cluster_acc;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(seed: u64) -> (Tensor, Vec<usize>) {
        let mut r = rng_for(seed, &[]);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for c in 0..2 {
            for _ in 0..30 {
                let off = if c == 0 { -10.0 } else { 10.0 };
                rows.push(vec![
                    off + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r),
                    StandardNormal.sample(&mut r),
                ]);
                truth.push(c);
            }
        }
        (Tensor::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (x, truth) = blobs(3);
        let km = kmeans(&x, 2, 11, 100).unwrap();
        assert!(km.converged);
        let acc = cluster_acc(&km.labels, &truth, 2, 0..1).unwrap();
        assert_eq!(acc.acc_all, 1.0);
    }

    #[test]
    fn result_is_a_lloyd_fixpoint() {
        let x = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.2],
            vec![0.4, 1.1],
            vec![5.0, 5.0],
            vec![6.0, 4.5],
            vec![2.6, 2.4],
        ])
        .unwrap();
        for seed in 0..10 {
            let km = kmeans(&x, 2, seed, 100).unwrap();
            assert!(km.converged);
            for i in 0..6 {
                let own = sq_dist(x.row(i), &km.centroids[km.labels[i]]);
                for c in &km.centroids {
                    assert!(own <= sq_dist(x.row(i), c) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (x, _) = blobs(5);
        assert_eq!(kmeans(&x, 3, 2, 50).unwrap(), kmeans(&x, 3, 2, 50).unwrap());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let x = Tensor::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let km = kmeans(&x, 3, 0, 20).unwrap();
        assert_eq!(km.labels.len(), 4);
        assert!(km.labels.iter().all(|&l| l < 3));
    }

    #[test]
    fn rejects_too_many_clusters() {
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(kmeans(&x, 3, 0, 10).is_err());
        assert!(kmeans(&x, 0, 0, 10).is_err());
    }
}
