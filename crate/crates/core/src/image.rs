//! Grayscale image operations on [`Matrix`]: bilinear resizing and Gaussian blur.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Bilinear resize with a corner-aligned sampling grid: output corners map
/// exactly onto input corners.
pub fn resize_bilinear(m: &Matrix, out_rows: usize, out_cols: usize) -> Result<Matrix> {
    resize_bilinear_region(m, 0..m.cols(), out_rows, out_cols)
}

/// [`resize_bilinear`] applied to the column range `cols` without copying it out.
pub fn resize_bilinear_region(
    m: &Matrix,
    cols: Range<usize>,
    out_rows: usize,
    out_cols: usize,
) -> Result<Matrix> {
    if out_rows == 0 || out_cols == 0 {
        return Err(Error::param("side", "output dimensions must be positive"));
    }
    if m.rows() == 0 || cols.is_empty() {
        return Err(Error::data("cannot resize an empty matrix"));
    }
    if cols.end > m.cols() {
        return Err(Error::data("column range exceeds the matrix"));
    }
    let offset = cols.start;
    let rows = sample_grid(m.rows(), out_rows);
    let cols: Vec<(usize, usize, f64)> = sample_grid(cols.len(), out_cols)
        .into_iter()
        .map(|(a, b, f)| (a + offset, b + offset, f))
        .collect();
    let mut out = Matrix::zeros(out_rows, out_cols);
    for (r, &(r0, r1, fr)) in rows.iter().enumerate() {
        let top = m.row(r0);
        let bottom = m.row(r1);
        let dst = out.row_mut(r);
        for (d, &(c0, c1, fc)) in dst.iter_mut().zip(&cols) {
            let t = top[c0] + (top[c1] - top[c0]) * fc;
            let b = bottom[c0] + (bottom[c1] - bottom[c0]) * fc;
            *d = t + (b - t) * fr;
        }
    }
    Ok(out)
}

fn sample_grid(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|i| {
            if input == 1 || output == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (input - 1) as f64 / (output - 1) as f64;
            let lo = (libm::floor(pos) as usize).min(input - 1);
            let hi = (lo + 1).min(input - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Resizes a window to a `side x side` square.
pub fn resize_window(w: &Matrix, side: usize) -> Result<Matrix> {
    if side < 2 {
        return Err(Error::param("side", format!("side {side} must be at least 2")));
    }
    resize_bilinear(w, side, side)
}

/// Normalized `size x size` Gaussian kernel, row-major.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::param("kernel_size", "must be odd and positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("blur_sigma", "must be positive"));
    }
    let half = (size / 2) as f64;
    let mut k = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let dy = r as f64 - half;
            let dx = c as f64 - half;
            k.push(libm::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
        }
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Convolves with a normalized Gaussian; out-of-range taps read the nearest
/// border value.
pub fn gaussian_blur(m: &Matrix, size: usize, sigma: f64) -> Result<Matrix> {
    let kernel = gaussian_kernel(size, sigma)?;
    let half = (size / 2) as isize;
    let (rows, cols) = (m.rows() as isize, m.cols() as isize);
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for kr in 0..size as isize {
                let rr = (r + kr - half).clamp(0, rows - 1) as usize;
                let src = m.row(rr);
                let krow = &kernel[kr as usize * size..(kr as usize + 1) * size];
                for (kc, &kv) in krow.iter().enumerate() {
                    let cc = (c + kc as isize - half).clamp(0, cols - 1) as usize;
                    acc += kv * src[cc];
                }
            }
            out[(r as usize, c as usize)] = acc;
        }
    }
    Ok(out)
}
