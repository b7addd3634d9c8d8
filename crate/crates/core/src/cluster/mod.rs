//! Two-stage clustering of detected swallows.
//!
//! Each swallow window becomes a blurred change image, PCA reduces the
//! flattened images, and the reduced vectors are clustered. Clusters holding
//! at least 15% of the swallows are the main categories; everything else is
//! clustered again with a fixed cluster count to surface rare morphologies.

pub mod eigen;
pub mod features;
pub mod kmeans;
pub mod pca;
pub mod ward;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use features::{change_filter, prepare_feature};
pub use kmeans::{kmeans_cluster, KMeansResult};
pub use pca::{fit_pca, PcaFit, PcaModel};
pub use ward::{agglomerative_cluster, ward_linkage, Dendrogram};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ml::WindowOrigin;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Agglomerative,
    Kmeans,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub method: Method,
    pub k_min: usize,
    pub k_max: usize,
    /// Minimum share of all swallows for a stage-1 cluster to count as main.
    pub main_fraction: f64,
    pub stage2_k: usize,
    pub n_components: usize,
    pub blur_sigma: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            method: Method::Agglomerative,
            k_min: 4,
            k_max: 10,
            main_fraction: 0.15,
            stage2_k: 10,
            n_components: pca::DEFAULT_COMPONENTS,
            blur_sigma: features::DEFAULT_BLUR_SIGMA,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::param("k_min", "must satisfy 1 <= k_min <= k_max"));
        }
        if !(self.main_fraction > 0.0 && self.main_fraction <= 1.0) {
            return Err(Error::param("main_fraction", "must lie in (0, 1]"));
        }
        if self.stage2_k == 0 {
            return Err(Error::param("stage2_k", "must be positive"));
        }
        if self.n_components == 0 {
            return Err(Error::param("n_components", "must be positive"));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::param("blur_sigma", "must be positive"));
        }
        Ok(())
    }

    /// Smallest cluster size that counts as a main cluster, `ceil(fraction * n)`.
    pub fn main_threshold(&self, n: usize) -> usize {
        libm::ceil(self.main_fraction * n as f64 - 1e-9).max(0.0) as usize
    }
}

/// Cluster assignments for `k` clusters with the given method.
pub fn cluster_points(points: &[Vec<f64>], k: usize, method: Method) -> Result<Vec<usize>> {
    match method {
        Method::Agglomerative => agglomerative_cluster(points, k),
        Method::Kmeans => Ok(kmeans_cluster(points, k)?.assignments),
    }
}

fn centroids_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    kmeans::means(points, labels, k, dim)
}

/// Mean Euclidean distance of every point to its cluster's centroid.
pub fn mean_intra_cluster_distance(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let centroids = centroids_of(points, labels, k);
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| libm::sqrt(kmeans::sq_dist(p, &centroids[l])))
        .sum::<f64>()
        / points.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub chosen_k: usize,
    /// `(k, mean intra-cluster distance)` for every scanned k.
    pub k_scores: Vec<(usize, f64)>,
    pub chosen_labels: Vec<usize>,
    pub warning: Option<String>,
}

/// Scans `k_min..=k_max` and keeps the k with the lowest mean intra-cluster
/// distance (smallest k on ties). The range is clamped to the point count.
pub fn select_cluster_count(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    method: Method,
) -> Result<KSelection> {
    let n = points.len();
    if n == 0 {
        return Err(Error::data("no points to cluster"));
    }
    if k_min == 0 || k_min > k_max {
        return Err(Error::param("k_min", "must satisfy 1 <= k_min <= k_max"));
    }
    let hi = k_max.min(n);
    let lo = k_min.min(hi);
    let warning = (hi < k_max).then(|| {
        format!("cluster range {k_min}..={k_max} clamped to {lo}..={hi} for {n} points")
    });
    let dendrogram = match method {
        Method::Agglomerative => Some(ward_linkage(points)?),
        Method::Kmeans => None,
    };
    let mut k_scores = Vec::new();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    for k in lo..=hi {
        let labels = match &dendrogram {
            Some(d) => d.cut(k)?,
            None => kmeans_cluster(points, k)?.assignments,
        };
        let score = mean_intra_cluster_distance(points, &labels);
        k_scores.push((k, score));
        if best.as_ref().is_none_or(|(_, s, _)| score < *s) {
            best = Some((k, score, labels));
        }
    }
    let (chosen_k, _, chosen_labels) = best.expect("non-empty k range");
    Ok(KSelection {
        chosen_k,
        k_scores,
        chosen_labels,
        warning,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Main,
    Special,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub stage: Stage,
    pub id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub label: ClusterLabel,
    /// Sample indices, ascending.
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    /// Member closest to the centroid.
    pub closest: usize,
    /// Member farthest from the centroid.
    pub most_distant: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<ClusterLabel>,
    /// Stage-1 ids of the main clusters.
    pub main_cluster_ids: Vec<usize>,
    pub chosen_k: usize,
    pub k_scores: Vec<(usize, f64)>,
    /// Cluster count of the second stage; 0 when it was skipped.
    pub stage2_k: usize,
    /// Main clusters first, then special clusters, each by id.
    pub clusters: Vec<Cluster>,
    pub warnings: Vec<String>,
}

impl ClusteringResult {
    pub fn cluster(&self, label: ClusterLabel) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.label == label)
    }
}

/// Stage 1 picks k in `k_min..=k_max`; clusters of size `>= ceil(0.15 n)` are
/// main clusters. The remaining points are re-clustered with
/// `k = min(stage2_k, residual)`; an empty residual skips stage 2.
pub fn two_stage_clustering(points: &[Vec<f64>], cfg: &ClusterConfig) -> Result<ClusteringResult> {
    cfg.validate()?;
    let n = points.len();
    if n < 2 {
        return Err(Error::data(format!("clustering needs at least 2 samples, got {n}")));
    }
    kmeans::check_points(points)?;
    // More clusters than distinct points would split identical swallows.
    let distinct = distinct_points(points);
    let k_max = cfg.k_max.min(distinct);
    let k_min = cfg.k_min.min(k_max);
    let selection = select_cluster_count(points, k_min, k_max, cfg.method)?;
    let mut warnings: Vec<String> = selection.warning.iter().cloned().collect();
    if k_max < cfg.k_max && distinct < n {
        warnings.push(format!(
            "only {distinct} distinct samples; stage-1 range limited to {k_min}..={k_max}"
        ));
    }
    let stage1 = &selection.chosen_labels;

    let threshold = cfg.main_threshold(n);
    let mut sizes = vec![0usize; selection.chosen_k];
    for &l in stage1 {
        sizes[l] += 1;
    }
    let main_cluster_ids: Vec<usize> = (0..selection.chosen_k).filter(|&c| sizes[c] >= threshold).collect();

    let mut assignments = vec![
        ClusterLabel {
            stage: Stage::Main,
            id: 0
        };
        n
    ];
    let mut residual = Vec::new();
    for (i, &l) in stage1.iter().enumerate() {
        if main_cluster_ids.contains(&l) {
            assignments[i].id = l;
        } else {
            residual.push(i);
        }
    }

    let mut stage2_k = 0;
    if !residual.is_empty() {
        stage2_k = cfg.stage2_k.min(residual.len());
        let sub: Vec<Vec<f64>> = residual.iter().map(|&i| points[i].clone()).collect();
        let labels = cluster_points(&sub, stage2_k, cfg.method)?;
        for (&i, &l) in residual.iter().zip(&labels) {
            assignments[i] = ClusterLabel {
                stage: Stage::Special,
                id: l,
            };
        }
        if stage2_k < cfg.stage2_k {
            warnings.push(format!(
                "second stage uses k = {stage2_k} for {} residual samples",
                residual.len()
            ));
        }
    }

    let mut labels: Vec<ClusterLabel> = assignments.clone();
    labels.sort_unstable();
    labels.dedup();
    let clusters = labels
        .into_iter()
        .map(|label| summarize(points, &assignments, label))
        .collect();

    Ok(ClusteringResult {
        assignments,
        main_cluster_ids,
        chosen_k: selection.chosen_k,
        k_scores: selection.k_scores,
        stage2_k,
        clusters,
        warnings,
    })
}

fn distinct_points(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn summarize(points: &[Vec<f64>], assignments: &[ClusterLabel], label: ClusterLabel) -> Cluster {
    let members: Vec<usize> = (0..points.len()).filter(|&i| assignments[i] == label).collect();
    let dim = points[0].len();
    let mut centroid = vec![0.0; dim];
    for &i in &members {
        for (c, x) in centroid.iter_mut().zip(&points[i]) {
            *c += x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
    let dist = |i: usize| kmeans::sq_dist(&points[i], &centroid);
    let mut closest = members[0];
    let mut most_distant = members[0];
    for &i in &members[1..] {
        if dist(i) < dist(closest) {
            closest = i;
        }
        if dist(i) > dist(most_distant) {
            most_distant = i;
        }
    }
    Cluster {
        label,
        members,
        centroid,
        closest,
        most_distant,
    }
}

/// One detected swallow with its clustering features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwallowFeature {
    pub swallow_id: WindowOrigin,
    pub raw_window: Matrix,
    pub change_image: Matrix,
    pub vector: Vec<f64>,
    pub reduced: Vec<f64>,
}

impl SwallowFeature {
    pub fn new(swallow_id: WindowOrigin, raw_window: Matrix, blur_sigma: f64) -> Result<Self> {
        let (change_image, vector) = prepare_feature(&raw_window, blur_sigma)?;
        Ok(SwallowFeature {
            swallow_id,
            raw_window,
            change_image,
            vector,
            reduced: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRun {
    pub pca: PcaModel,
    pub result: ClusteringResult,
}

/// Fits PCA on the feature vectors, fills `reduced`, and runs the two-stage
/// clustering.
pub fn cluster_features(features: &mut [SwallowFeature], cfg: &ClusterConfig) -> Result<ClusterRun> {
    cfg.validate()?;
    let vectors: Vec<Vec<f64>> = features.iter().map(|f| f.vector.clone()).collect();
    let fit = fit_pca(&vectors, cfg.n_components)?;
    for (f, v) in features.iter_mut().zip(&vectors) {
        f.reduced = fit.model.project(v)?;
    }
    let reduced: Vec<Vec<f64>> = features.iter().map(|f| f.reduced.clone()).collect();
    let mut result = two_stage_clustering(&reduced, cfg)?;
    if let Some(w) = fit.warning {
        result.warnings.insert(0, w);
    }
    Ok(ClusterRun {
        pca: fit.model,
        result,
    })
}
