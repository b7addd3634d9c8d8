//! Fixed-length training windows cut from annotated recordings.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::{AnnotationSet, ManometryRecording};

/// Window length in samples (10 s at 50 Hz).
pub const WINDOW_LEN: usize = 500;

pub const LABEL_NON_SWALLOW: u8 = 0;
pub const LABEL_SWALLOW: u8 = 1;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub recording_id: String,
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwallowWindow {
    pub values: Matrix,
    pub label: u8,
    pub origin: WindowOrigin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingWindows {
    pub windows: Vec<SwallowWindow>,
    /// Annotated starts too close to the end for a full window.
    pub skipped_positives: usize,
    /// Requested negatives that did not fit between the swallows.
    pub negative_shortfall: usize,
}

impl TrainingWindows {
    pub fn positives(&self) -> usize {
        self.windows.iter().filter(|w| w.label == LABEL_SWALLOW).count()
    }

    pub fn negatives(&self) -> usize {
        self.windows.len() - self.positives()
    }
}

/// One positive window per annotated start plus `neg_per_pos` negatives per
/// positive, drawn without replacement from window starts that do not overlap
/// any swallow window.
pub fn extract_training_windows(
    r: &ManometryRecording,
    a: &AnnotationSet,
    neg_per_pos: usize,
    rng_seed: u64,
) -> Result<TrainingWindows> {
    r.require_preprocessed()?;
    a.check_range(r.samples())?;
    let t = r.samples();
    if t < WINDOW_LEN {
        return Err(Error::data(format!(
            "recording `{}` has {t} samples, fewer than one {WINDOW_LEN}-sample window",
            r.patient_id
        )));
    }
    let values = r.values();
    let mut windows = Vec::new();
    let mut skipped_positives = 0;
    for &y in a.starts() {
        if y + WINDOW_LEN > t {
            skipped_positives += 1;
            continue;
        }
        windows.push(SwallowWindow {
            values: values.columns(y..y + WINDOW_LEN),
            label: LABEL_SWALLOW,
            origin: WindowOrigin {
                recording_id: r.patient_id.clone(),
                start: y,
            },
        });
    }

    let wanted = neg_per_pos * windows.len();
    let free = free_starts(a.starts(), t);
    let available: usize = free.iter().map(|(lo, hi)| hi - lo + 1).sum();
    let take = wanted.min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, available, take).into_vec();
    picks.sort_unstable();
    for k in picks {
        let n = nth_free_start(&free, k);
        windows.push(SwallowWindow {
            values: values.columns(n..n + WINDOW_LEN),
            label: LABEL_NON_SWALLOW,
            origin: WindowOrigin {
                recording_id: r.patient_id.clone(),
                start: n,
            },
        });
    }
    Ok(TrainingWindows {
        windows,
        skipped_positives,
        negative_shortfall: wanted - take,
    })
}

/// Inclusive ranges of window starts `n` with `[n, n+499]` disjoint from every
/// `[y, y+499]`.
fn free_starts(starts: &[usize], t: usize) -> Vec<(usize, usize)> {
    let last_start = t - WINDOW_LEN;
    let mut free = Vec::new();
    let mut lo = 0usize;
    for &y in starts {
        // Blocked: n in [y - 499, y + 499].
        let block_lo = y.saturating_sub(WINDOW_LEN - 1);
        if block_lo > lo {
            let hi = (block_lo - 1).min(last_start);
            if hi >= lo {
                free.push((lo, hi));
            }
        }
        lo = lo.max(y + WINDOW_LEN);
    }
    if lo <= last_start {
        free.push((lo, last_start));
    }
    free
}

fn nth_free_start(free: &[(usize, usize)], mut k: usize) -> usize {
    for &(lo, hi) in free {
        let len = hi - lo + 1;
        if k < len {
            return lo + k;
        }
        k -= len;
    }
    unreachable!("index beyond free space")
}
