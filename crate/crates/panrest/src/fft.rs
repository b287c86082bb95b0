//! Minimal 2D FFT plumbing on top of `rustfft`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// In-place 2D FFT of row-major `data` (`width * height` values).
/// Unnormalized; the inverse scales by `1 / (width * height)`.
pub(crate) fn fft2(data: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };

    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }

    let mut column = vec![Complex::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * width + x];
        }
        col_fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            data[y * width + x] = *c;
        }
    }
}

pub(crate) fn to_complex(values: &[f64]) -> Vec<Complex<f64>> {
    values.iter().map(|&v| Complex::new(v, 0.0)).collect()
}

/// Signed frequency index of bin `n` on a grid of `len` samples; the
/// angular frequency is `2 * pi * k / len` radians per pixel.
#[inline]
pub(crate) fn signed_bin(n: usize, len: usize) -> i64 {
    let n = n as i64;
    let len = len as i64;
    if n <= len / 2 {
        n
    } else {
        n - len
    }
}
