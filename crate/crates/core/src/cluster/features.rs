//! Change-filter images used as clustering features.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{gaussian_blur, resize_bilinear};
use crate::matrix::Matrix;

/// Span of the change kernel `[-1, 0, ..., 0, 1]`.
pub const CHANGE_SPAN: usize = 10;
pub const IMAGE_SIDE: usize = 50;
pub const BLUR_SIZE: usize = 5;
pub const DEFAULT_BLUR_SIGMA: f64 = 1.0;

/// `out[i][j] = w[i][j + 9] - w[i][j]`: the pressure change across ten samples.
pub fn change_filter(w: &Matrix) -> Result<Matrix> {
    if w.cols() < CHANGE_SPAN {
        return Err(Error::param(
            "window",
            format!("width {} is shorter than the {CHANGE_SPAN}-sample kernel", w.cols()),
        ));
    }
    let out_cols = w.cols() - CHANGE_SPAN + 1;
    let mut out = Matrix::zeros(w.rows(), out_cols);
    for r in 0..w.rows() {
        let src = w.row(r);
        for (j, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = src[j + CHANGE_SPAN - 1] - src[j];
        }
    }
    Ok(out)
}

/// Squared change, resized to 50x50, blurred with a normalized 5x5 Gaussian.
/// Returns the image and its row-major flattening.
pub fn prepare_feature(w: &Matrix, blur_sigma: f64) -> Result<(Matrix, Vec<f64>)> {
    let squared = change_filter(w)?.map(|v| v * v);
    let resized = resize_bilinear(&squared, IMAGE_SIDE, IMAGE_SIDE)?;
    let blurred = gaussian_blur(&resized, BLUR_SIZE, blur_sigma)?;
    let vector = blurred.as_slice().to_vec();
    Ok((blurred, vector))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_has_no_change() {
        let out = change_filter(&Matrix::filled(36, 500, 42.0)).unwrap();
        assert_eq!(out.shape(), (36, 491));
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_ramp_gives_constant_change() {
        let m = Matrix::from_fn(1, 30, |_, c| 2.0 * c as f64);
        let out = change_filter(&m).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 18.0));
    }

    #[test]
    fn narrow_window_rejected() {
        assert!(change_filter(&Matrix::zeros(2, 9)).is_err());
    }

    #[test]
    fn constant_window_gives_zero_vector() {
        let (img, v) = prepare_feature(&Matrix::filled(36, 500, 10.0), 1.0).unwrap();
        assert_eq!(img.shape(), (50, 50));
        assert_eq!(v.len(), 2500);
        assert!(v.iter().all(|&x| x == 0.0));
    }
}
