//! Lloyd's k-means with k-means++ seeding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Centroids;
use crate::error::ConfigError;
use crate::mat::{dist_sq, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Centroids,
    /// Cluster of every input row, consistent with the final centroids.
    pub labels: Vec<usize>,
    /// Sum of squared distances of every point to its centroid.
    pub inertia: f64,
    /// Number of centroid updates performed.
    pub iterations: usize,
    /// Objective after seeding and after every update; never increasing.
    pub objective_history: Vec<f64>,
}

pub fn kmeans_fit(
    points: &Mat,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansFit, ConfigError> {
    let n = points.rows;
    let d = points.cols;
    if k == 0 {
        return Err(ConfigError("k must be positive".into()));
    }
    if n < k {
        return Err(ConfigError(format!("{n} points cannot form {k} clusters")));
    }
    if d == 0 {
        return Err(ConfigError("points have no features".into()));
    }
    if !points.is_finite() {
        return Err(ConfigError("points contain non-finite values".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seed(points, k, &mut rng);

    let mut labels;
    let mut point_dists;
    let mut inertia;
    let mut iterations = 0;
    let mut objective_history = Vec::new();
    loop {
        let a = assign(points, &centroids);
        labels = a.0;
        point_dists = a.1;
        inertia = a.2;
        objective_history.push(inertia);
        if iterations == max_iters {
            break;
        }
        let (next, shift) = update(points, &labels, &point_dists, k, &centroids);
        centroids = next;
        iterations += 1;
        if shift < tol {
            let a = assign(points, &centroids);
            labels = a.0;
            inertia = a.2;
            objective_history.push(inertia);
            break;
        }
    }

    Ok(KMeansFit {
        centroids: Centroids { coords: centroids },
        labels,
        inertia,
        iterations,
        objective_history,
    })
}

/// k-means++: first centre uniform, later centres drawn with probability
/// proportional to the squared distance from the nearest chosen centre.
fn plus_plus_seed(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = points.rows;
    let d = points.cols;
    let mut centroids = Mat::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut dists: Vec<f64> = (0..n)
        .map(|i| dist_sq(points.row(i), centroids.row(0)))
        .collect();
    for j in 1..k {
        let total: f64 = dists.iter().sum();
        let pick = if total > 0.0 {
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, w) in dists.iter().enumerate() {
                acc += w;
                if acc >= u {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point coincides with a chosen centre already.
            rng.random_range(0..n)
        };
        centroids.row_mut(j).copy_from_slice(points.row(pick));
        for (i, dv) in dists.iter_mut().enumerate() {
            *dv = dv.min(dist_sq(points.row(i), centroids.row(j)));
        }
    }
    centroids
}

/// Nearest-centroid labels (ties to the lowest cluster), per-point squared
/// distances, and the total objective.
fn assign(points: &Mat, centroids: &Mat) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = vec![0usize; points.rows];
    let mut dists = vec![0.0f64; points.rows];
    let mut total = 0.0;
    for i in 0..points.rows {
        let row = points.row(i);
        let mut best = 0usize;
        let mut best_d = dist_sq(row, centroids.row(0));
        for j in 1..centroids.rows {
            let dj = dist_sq(row, centroids.row(j));
            if dj < best_d {
                best = j;
                best_d = dj;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        total += best_d;
    }
    (labels, dists, total)
}

/// Moves every centroid to its members' mean; an empty cluster is reseeded to
/// the point farthest from its centroid (ties to the lowest point index,
/// distinct points across several empty clusters). Returns the new centroids
/// and the largest centroid displacement.
fn update(
    points: &Mat,
    labels: &[usize],
    point_dists: &[f64],
    k: usize,
    old: &Mat,
) -> (Mat, f64) {
    let d = points.cols;
    let mut sums = Mat::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    let mut taken = vec![false; points.rows];
    let mut next = Mat::zeros(k, d);
    for j in 0..k {
        if counts[j] > 0 {
            for (t, s) in next.row_mut(j).iter_mut().zip(sums.row(j)) {
                *t = s / counts[j] as f64;
            }
        } else {
            let mut far = None;
            for (i, &dv) in point_dists.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                far = match far {
                    Some((_, best)) if best >= dv => far,
                    _ => Some((i, dv)),
                };
            }
            let (idx, _) = far.expect("more clusters than points");
            taken[idx] = true;
            next.row_mut(j).copy_from_slice(points.row(idx));
        }
    }
    let mut shift = 0.0f64;
    for j in 0..k {
        shift = shift.max(dist_sq(next.row(j), old.row(j)).sqrt());
    }
    (next, shift)
}
