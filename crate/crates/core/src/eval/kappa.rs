//! Fleiss' kappa for agreement among a fixed number of raters.

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};

/// Rater agreements reported for the two diagnostic workflows of the
/// clinical study (conventional review, clustered review). Reference values
/// only; they cannot be recomputed without the rater data.
pub const REFERENCE_KAPPA_CONVENTIONAL: f64 = 0.53;
pub const REFERENCE_KAPPA_CLUSTERED: f64 = 0.73;

/// `ratings[s][c]` is the number of raters who put subject `s` in category `c`.
/// Every subject must be rated by the same number of raters (at least 2).
pub fn fleiss_kappa(ratings: &[alloc::vec::Vec<u32>]) -> Result<f64> {
    let Some(first) = ratings.first() else {
        return Err(Error::data("no subjects"));
    };
    let categories = first.len();
    if categories == 0 {
        return Err(Error::data("no categories"));
    }
    if let Some(s) = ratings.iter().position(|r| r.len() != categories) {
        return Err(Error::data(format!(
            "subject {s} has {} categories, expected {categories}",
            ratings[s].len()
        )));
    }
    let raters: u64 = first.iter().map(|&c| u64::from(c)).sum();
    if raters < 2 {
        return Err(Error::data("each subject needs at least 2 ratings"));
    }
    if let Some(s) = ratings
        .iter()
        .position(|r| r.iter().map(|&c| u64::from(c)).sum::<u64>() != raters)
    {
        return Err(Error::data(format!(
            "subject {s} is not rated by exactly {raters} raters"
        )));
    }

    let subjects = ratings.len() as f64;
    let n = raters as f64;
    let mut totals = vec![0u64; categories];
    let mut p_bar = 0.0;
    for row in ratings {
        let agree: u64 = row.iter().map(|&c| u64::from(c) * u64::from(c).saturating_sub(1)).sum();
        p_bar += agree as f64 / (n * (n - 1.0));
        for (t, &c) in totals.iter_mut().zip(row) {
            *t += u64::from(c);
        }
    }
    p_bar /= subjects;
    let all = subjects * n;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / all) * (t as f64 / all)).sum();
    if p_e >= 1.0 {
        // Every rating fell into one category: agreement is complete.
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
