//! Principal component analysis on flattened change images.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen;
use crate::error::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, `n_components x dim`.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Sum of the per-dimension sample variances of the fitted data.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|&v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    /// Coordinates of `v - mean` along each component.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::param(
                "vector",
                format!("length {} does not match model dimension {}", v.len(), self.dim()),
            ));
        }
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    /// `mean + sum(score_k * component_k)`.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, c) in scores.iter().zip(&self.components) {
            axpy(*s, c, &mut out);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaFit {
    pub model: PcaModel,
    /// Set when the requested component count had to be reduced.
    pub warning: Option<String>,
}

/// Fits a PCA with up to `n_components` components, clamped to
/// `min(dim, samples - 1)`.
///
/// Directions beyond the numerical rank of the data carry zero variance and
/// are completed deterministically so the basis stays orthonormal. Each
/// component is signed so its largest-magnitude entry is positive.
pub fn fit_pca(vectors: &[Vec<f64>], n_components: usize) -> Result<PcaFit> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::data(format!("PCA needs at least 2 vectors, got {n}")));
    }
    let dim = vectors[0].len();
    if dim == 0 {
        return Err(Error::data("PCA vectors are empty"));
    }
    if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
        return Err(Error::data(format!(
            "vector {i} has length {}, expected {dim}",
            vectors[i].len()
        )));
    }
    if n_components == 0 {
        return Err(Error::param("n_components", "must be positive"));
    }
    let limit = dim.min(n - 1);
    let q = n_components.min(limit);
    let warning = (q < n_components).then(|| {
        format!("requested {n_components} components, clamped to {q} (dim {dim}, {n} samples)")
    });

    let mut mean = vec![0.0; dim];
    for v in vectors {
        axpy(1.0, v, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let denom = (n - 1) as f64;
    let total_variance = centered.iter().map(|c| dot(c, c)).sum::<f64>() / denom;

    let (mut components, mut variances) = if n <= dim {
        via_gram(&centered, q)
    } else {
        via_covariance(&centered, dim, q)
    };
    variances.iter_mut().for_each(|v| *v = (*v / denom).max(0.0));

    // Drop numerically null directions, then complete the basis.
    let scale = variances.first().copied().unwrap_or(0.0).max(total_variance);
    let tol = scale * 1e-12 * dim as f64;
    for k in 0..components.len() {
        if variances[k] <= tol {
            components.truncate(k);
            variances.truncate(k);
            break;
        }
    }
    complete_basis(&mut components, dim, q);
    variances.resize(q, 0.0);
    for c in &mut components {
        fix_sign(c);
    }

    Ok(PcaFit {
        model: PcaModel {
            mean,
            components,
            explained_variance: variances,
            total_variance,
        },
        warning,
    })
}

// Eigenvectors of X X^T mapped back through X^T.
fn via_gram(centered: &[Vec<f64>], q: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = centered.len();
    let dim = centered[0].len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let g = dot(&centered[i], &centered[j]);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let eig = symmetric_eigen(&gram, n);
    let mut components = Vec::with_capacity(q);
    let mut values = Vec::with_capacity(q);
    for k in 0..q {
        let u = eig.vector(k);
        let mut c = vec![0.0; dim];
        for (ui, row) in u.iter().zip(centered) {
            axpy(*ui, row, &mut c);
        }
        let norm = libm::sqrt(dot(&c, &c));
        if norm > 0.0 {
            c.iter_mut().for_each(|x| *x /= norm);
        }
        components.push(c);
        values.push(eig.values[k]);
    }
    (components, values)
}

fn via_covariance(centered: &[Vec<f64>], dim: usize, q: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut cov = vec![0.0; dim * dim];
    for row in centered {
        for i in 0..dim {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let dst = &mut cov[i * dim..i * dim + i + 1];
            axpy(ri, &row[..=i], dst);
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    let eig = symmetric_eigen(&cov, dim);
    let components = (0..q).map(|k| eig.vector(k).to_vec()).collect();
    (components, eig.values[..q].to_vec())
}

/// Extends `basis` to `q` orthonormal vectors using unit vectors in index order.
fn complete_basis(basis: &mut Vec<Vec<f64>>, dim: usize, q: usize) {
    let mut axis = 0;
    while basis.len() < q && axis < dim {
        let mut c = vec![0.0; dim];
        c[axis] = 1.0;
        axis += 1;
        // Two Gram-Schmidt passes for numerical orthogonality.
        for _ in 0..2 {
            for b in basis.iter() {
                let p = dot(b, &c);
                axpy(-p, b, &mut c);
            }
        }
        let norm = libm::sqrt(dot(&c, &c));
        if norm > 1e-6 {
            c.iter_mut().for_each(|x| *x /= norm);
            basis.push(c);
        }
    }
}

fn fix_sign(c: &mut [f64]) {
    let mut best = 0;
    for (i, v) in c.iter().enumerate() {
        if v.abs() > c[best].abs() {
            best = i;
        }
    }
    if c[best] < 0.0 {
        c.iter_mut().for_each(|x| *x = -*x);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
