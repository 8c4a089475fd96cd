//! Lloyd's k-means with k-means++ seeding and best-of-N restarts.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Mean anchored at the first member, so a cluster of identical points has
/// exactly that point as its centroid.
fn anchored_mean(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let anchor = &points[members[0]];
    let n = members.len() as f64;
    let mut acc = vec![0.0; anchor.len()];
    for &i in members {
        for (a, (x, o)) in acc.iter_mut().zip(points[i].iter().zip(anchor)) {
            *a += x - o;
        }
    }
    anchor.iter().zip(acc).map(|(o, a)| o + a / n).collect()
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.random_range(0..points.len()),
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (j, d) = nearest(p, centroids);
        labels.push(j);
        dists.push(d);
    }
    let inertia = dists.iter().sum();
    (labels, dists, inertia)
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeans {
    let k = centroids.len();
    let (mut labels, mut dists, mut inertia) = assign(points, &centroids);
    let mut trace = vec![inertia];
    for _ in 0..max_iters {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut taken = vec![false; points.len()];
        for j in 0..k {
            if members[j].is_empty() {
                // re-seed from the point farthest from its centroid
                let far = (0..points.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                centroids[j] = points[far].clone();
            } else {
                centroids[j] = anchored_mean(points, &members[j]);
            }
        }
        let (new_labels, new_dists, new_inertia) = assign(points, &centroids);
        let converged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        inertia = new_inertia;
        trace.push(inertia);
        if converged {
            break;
        }
    }
    KMeans {
        centroids,
        assignments: labels,
        inertia,
        inertia_trace: trace,
    }
}

/// Clusters `points` into `k` groups, returning the restart with the lowest
/// inertia. Deterministic for a fixed `seed`.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if points.is_empty() || k > points.len() {
        return Err(Error::InfeasibleK { k, n: points.len() });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::shape(dim, p.len()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("points must be finite".into()));
    }

    let mut best: Option<KMeans> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init = plus_plus_init(points, k, &mut rng);
        let run = lloyd(points, init, max_iters);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let p = pts(&[0.3, 0.1, 0.9, 0.5]);
        let res = kmeans(&p, 4, 100, 10, 1).unwrap();
        assert_eq!(res.inertia, 0.0);
        let mut c: Vec<f64> = res.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.1, 0.3, 0.5, 0.9]);
    }

    #[test]
    fn identical_points_single_cluster() {
        let p = vec![vec![0.7, 0.2]; 6];
        let res = kmeans(&p, 1, 100, 3, 9).unwrap();
        assert_eq!(res.centroids, vec![vec![0.7, 0.2]]);
        assert_eq!(res.inertia, 0.0);
    }

    #[test]
    fn errors() {
        let p = pts(&[0.0, 1.0]);
        assert!(matches!(kmeans(&p, 0, 10, 1, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(kmeans(&p, 3, 10, 1, 0), Err(Error::InfeasibleK { k: 3, n: 2 })));
        assert!(matches!(kmeans(&[], 1, 10, 1, 0), Err(Error::InfeasibleK { .. })));
    }

    #[test]
    fn duplicates_with_k_above_distinct_count() {
        let p = pts(&[0.2, 0.2, 0.2, 0.8, 0.8]);
        let res = kmeans(&p, 3, 100, 5, 4).unwrap();
        assert_eq!(res.inertia, 0.0);
        assert_eq!(res.centroids.len(), 3);
    }

    proptest! {
        #[test]
        fn lloyd_properties(
            raw in prop::collection::vec(prop::array::uniform2(0.0..1.0f64), 3..40),
            k in 1usize..5,
            seed in 0u64..50,
        ) {
            let points: Vec<Vec<f64>> = raw.iter().map(|p| p.to_vec()).collect();
            let k = k.min(points.len());
            let res = kmeans(&points, k, 100, 3, seed).unwrap();
            for w in res.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            // converged assignments are nearest-centroid assignments
            for (p, &l) in points.iter().zip(&res.assignments) {
                let d = sq_dist(p, &res.centroids[l]);
                for c in &res.centroids {
                    prop_assert!(d <= sq_dist(p, c) + 1e-12);
                }
            }
            let again = kmeans(&points, k, 100, 3, seed).unwrap();
            prop_assert_eq!(res, again);
        }
    }
}
