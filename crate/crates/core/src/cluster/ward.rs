//! Agglomerative clustering with Ward linkage.
//!
//! Merge cost of clusters `a`, `b` is the increase in within-cluster sum of
//! squares, `|a||b| / (|a| + |b|) * ||mean_a - mean_b||^2`, updated by the
//! Lance-Williams recurrence. A cluster is identified by its smallest member
//! index; equal costs merge the lexicographically smallest pair first.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::kmeans::{check_k, check_points, sq_dist};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Surviving cluster id (the smaller of the two).
    pub into: usize,
    pub absorbed: usize,
    pub cost: f64,
    pub size: usize,
}

/// Full merge sequence, `n - 1` merges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Labels after stopping at `k` clusters, numbered by first appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        check_k(k, self.n)?;
        let mut owner: Vec<usize> = (0..self.n).collect();
        for m in &self.merges[..self.n - k] {
            for o in owner.iter_mut() {
                if *o == m.absorbed {
                    *o = m.into;
                }
            }
        }
        Ok(relabel(&owner))
    }
}

pub(crate) fn relabel(ids: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    ids.iter()
        .map(|&id| match map.iter().find(|(k, _)| *k == id) {
            Some(&(_, v)) => v,
            None => {
                let v = map.len();
                map.push((id, v));
                v
            }
        })
        .collect()
}

pub fn ward_linkage(points: &[Vec<f64>]) -> Result<Dendrogram> {
    check_points(points)?;
    let n = points.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = 0.5 * sq_dist(&points[i], &points[j]);
            cost[i * n + j] = c;
            cost[j * n + i] = c;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for a in 0..n {
            if !active[a] {
                continue;
            }
            let row = &cost[a * n..(a + 1) * n];
            for b in a + 1..n {
                if active[b] && row[b] < best.2 {
                    best = (a, b, row[b]);
                }
            }
        }
        let (a, b, c) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((nk + na) * cost[k * n + a] + (nk + nb) * cost[k * n + b] - nk * c)
                / (nk + na + nb);
            cost[k * n + a] = updated;
            cost[a * n + k] = updated;
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge {
            into: a,
            absorbed: b,
            cost: c,
            size: size[a],
        });
    }
    Ok(Dendrogram { n, merges })
}

pub fn agglomerative_cluster(points: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    check_k(k, points.len())?;
    ward_linkage(points)?.cut(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points() {
        let pts = vec![vec![0.0], vec![1.0], vec![10.0]];
        let d = ward_linkage(&pts).unwrap();
        assert_eq!((d.merges[0].into, d.merges[0].absorbed), (0, 1));
        assert!((d.merges[0].cost - 0.5).abs() < 1e-12);
        assert_eq!(agglomerative_cluster(&pts, 2).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn singletons_when_k_is_n() {
        let pts = vec![vec![0.0], vec![3.0], vec![1.0]];
        assert_eq!(agglomerative_cluster(&pts, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn duplicates_merge_first() {
        let pts = vec![vec![0.0], vec![4.0], vec![0.5], vec![4.0]];
        let d = ward_linkage(&pts).unwrap();
        assert_eq!((d.merges[0].into, d.merges[0].absorbed), (1, 3));
        assert_eq!(d.merges[0].cost, 0.0);
    }
}
