use crate::numcore::{streams, Matrix, Rng};
use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
/// Lloyd iterations stop once no centroid moves farther than this.
pub const MOVEMENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster of each input row.
    pub assignments: Vec<usize>,
    /// `k × d` centroids; a cluster that lost all members keeps its last centroid.
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
}

/// k-means on the rows of `points` with k-means++ seeding drawn from the
/// KMEANS substream of `seed`. Ties go to the lowest cluster index.
pub fn cluster(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k < 1 || k > n {
        return Err(Error::Spec(format!("k must lie in [1, {n}], got {k}")));
    }
    points.ensure_finite("clustering input")?;
    let mut rng = Rng::seed_from(seed).substream(streams::KMEANS);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = vec![0; n];
    let mut inertia_history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut inertia = 0.0;
        for (i, a) in assignments.iter_mut().enumerate() {
            let (best, d) = nearest(points.row(i), &centroids);
            *a = best;
            inertia += d;
        }
        inertia_history.push(inertia);

        let d = points.cols();
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut movement: f64 = 0.0;
        for c in (0..k).filter(|&c| counts[c] > 0) {
            let new: Vec<f64> = sums.row(c).iter().map(|s| s / counts[c] as f64).collect();
            movement = movement.max(sq_dist(&new, centroids.row(c)).sqrt());
            centroids.row_mut(c).copy_from_slice(&new);
        }
        if movement < MOVEMENT_TOLERANCE {
            break;
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_history,
    })
}

/// k-means++: first centre uniform, each next one drawn with probability
/// proportional to its squared distance from the nearest chosen centre.
fn seed_centroids(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&v| {
                    acc += v;
                    acc > target
                })
                .unwrap_or_else(|| d2.iter().rposition(|&v| v > 0.0).expect("total > 0"))
        } else {
            // Every remaining point coincides with a centre; pick any unused row.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.below(free.len())]
        };
        chosen.push(next);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Matrix::zeros(k, points.cols());
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }
    centroids
}

fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    (0..centroids.rows())
        .map(|c| (c, sq_dist(x, centroids.row(c))))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_blobs(per_blob: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = Rng::seed_from(seed);
        let mut m = Matrix::zeros(2 * per_blob, dim);
        for r in 0..2 * per_blob {
            let offset = if r < per_blob { 0.0 } else { 20.0 };
            for c in 0..dim {
                m.set(r, c, offset + rng.normal());
            }
        }
        m
    }

    #[test]
    fn k_equal_n_gives_singletons() {
        let pts = Matrix::from_rows(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 3.0], &[5.0, 5.0]]).unwrap();
        let r = cluster(&pts, 4, 0).unwrap();
        let mut a = r.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
        assert_eq!(*r.inertia_history.last().unwrap(), 0.0);
    }

    #[test]
    fn separated_blobs_recovered() {
        let pts = two_blobs(10, 2, 4);
        let r = cluster(&pts, 2, 1).unwrap();
        let first = r.assignments[0];
        assert!(r.assignments[..10].iter().all(|&a| a == first));
        assert!(r.assignments[10..].iter().all(|&a| a != first));
    }

    #[test]
    fn deterministic_and_monotone() {
        let pts = Matrix::from_vec(60, 3, Rng::seed_from(8).normal_sample(180)).unwrap();
        let a = cluster(&pts, 5, 3).unwrap();
        assert_eq!(a, cluster(&pts, 5, 3).unwrap());
        assert!(a.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn invalid_k_rejected() {
        let pts = Matrix::zeros(3, 2);
        assert!(matches!(cluster(&pts, 0, 0), Err(Error::Spec(_))));
        assert!(matches!(cluster(&pts, 4, 0), Err(Error::Spec(_))));
        assert_eq!(cluster(&pts, 3, 0).unwrap().assignments.len(), 3);
    }
}
