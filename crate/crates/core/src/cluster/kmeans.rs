//! Lloyd's k-means with deterministic farthest-point seeding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Sum of squared distances to assigned centroids after each update step.
    pub objective_history: Vec<f64>,
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::param("k", format!("k = {k} must lie in 1..={n}")));
    }
    Ok(())
}

pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    if let Some(i) = points.iter().position(|p| p.len() != dim) {
        return Err(Error::data(format!("point {i} has a different dimension")));
    }
    Ok(dim)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub(crate) fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub(crate) fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

/// Seeds: the point closest to the data mean, then repeatedly the point
/// farthest from its nearest chosen seed (lowest index on ties).
fn seed_centroids(points: &[Vec<f64>], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mean = means(points, &vec![0; points.len()], 1, dim).remove(0);
    let first = nearest(&mean, points).0;
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while chosen.len() < k {
        let mut best = 0;
        for (i, &d) in dist.iter().enumerate() {
            if d > dist[best] {
                best = i;
            }
        }
        // Every remaining point coincides with a seed: take the first unused index.
        if dist[best] == 0.0 {
            best = (0..points.len()).find(|i| !chosen.contains(i)).unwrap_or(best);
        }
        chosen.push(best);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[best]));
        }
    }
    chosen.iter().map(|&i| points[i].clone()).collect()
}

pub fn kmeans_cluster(points: &[Vec<f64>], k: usize) -> Result<KMeansResult> {
    let n = points.len();
    check_k(k, n)?;
    let dim = check_points(points)?;
    let mut centroids = seed_centroids(points, k, dim);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        repair_empty(points, &mut next, &centroids, k);
        if next == assignments {
            break;
        }
        assignments = next;
        centroids = means(points, &assignments, k, dim);
        history.push(objective(points, &assignments, &centroids));
        iterations += 1;
    }

    Ok(KMeansResult {
        assignments,
        centroids,
        iterations,
        objective_history: history,
    })
}

/// Gives every empty cluster the point farthest from its assigned centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[a]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
        }
    }
}

pub fn objective(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}
