//! Histogram of signed prediction offsets around the true starts.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub bin_width: usize,
    /// Lower edge of the first bin, a multiple of `bin_width`.
    pub first_edge: i64,
    /// Bin `i` covers `[first_edge + i*w, first_edge + (i+1)*w)`.
    pub counts: Vec<usize>,
    /// `None` when there are no distances.
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl DistanceHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.counts.len()).map(|i| self.first_edge + (i * self.bin_width) as i64)
    }
}

pub fn distance_histogram(distances: &[i64], bin_width: usize) -> Result<DistanceHistogram> {
    if bin_width == 0 {
        return Err(Error::param("bin_width", "must be positive"));
    }
    let w = bin_width as i64;
    let (Some(&min), Some(&max)) = (distances.iter().min(), distances.iter().max()) else {
        return Ok(DistanceHistogram {
            bin_width,
            first_edge: 0,
            counts: Vec::new(),
            mean: None,
            median: None,
        });
    };
    let lo = min.div_euclid(w);
    let hi = max.div_euclid(w);
    let mut counts = vec![0; (hi - lo + 1) as usize];
    for &d in distances {
        counts[(d.div_euclid(w) - lo) as usize] += 1;
    }
    let mean = distances.iter().map(|&d| d as f64).sum::<f64>() / distances.len() as f64;
    let mut sorted = distances.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
    };
    Ok(DistanceHistogram {
        bin_width,
        first_edge: lo * w,
        counts,
        mean: Some(mean),
        median: Some(median),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero() {
        let h = distance_histogram(&[0, 0, 0], 10).unwrap();
        assert_eq!(h.counts, vec![3]);
        assert_eq!(h.mean, Some(0.0));
    }

    #[test]
    fn two_adjacent_bins() {
        let h = distance_histogram(&[-40, -30], 10).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.first_edge, -40);
        assert_eq!(h.mean, Some(-35.0));
        assert_eq!(h.median, Some(-35.0));
    }

    #[test]
    fn empty_input_flags_undefined_centre() {
        let h = distance_histogram(&[], 10).unwrap();
        assert!(h.counts.is_empty() && h.mean.is_none() && h.median.is_none());
        assert!(distance_histogram(&[1], 0).is_err());
    }
}
