//! Moment-based histogram matching of the panchromatic image to a target
//! component, globally or over sliding patches.
//!
//! The matching is the affine map equalizing mean and population standard
//! deviation,
//!
//! ```text
//! matched = sd(t)/sd(p) * (p - mean(p)) + mean(t)
//! ```
//!
//! The local variant applies it per sliding patch and averages the
//! overlapping contributions per pixel.

use crate::error::{Error, Result};
use crate::raster::Field;

/// Sliding-patch configuration for [`match_local`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Odd side length of the square sliding patch.
    pub window: usize,
    /// Pixels between consecutive patch origins.
    pub stride: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            window: 15,
            stride: 1,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "window must be odd and at least 1, got {}",
                self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        if self.stride > self.window {
            return Err(Error::InvalidParameter(format!(
                "stride {} exceeds window {}; pixels between patches would \
                 receive no contribution",
                self.stride, self.window
            )));
        }
        Ok(())
    }
}

/// Patch origins along one axis: the stride grid over `[0, len - window]`
/// plus the final fitting origin, so the whole axis is covered by
/// full-size patches.
fn origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = len - window;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

struct Moments {
    mean: f64,
    sd: f64,
}

fn patch_moments(f: &Field, x0: usize, y0: usize, window: usize) -> Moments {
    patch_moments_rect(f, x0, y0, window, window)
}

/// Match `pan` to `target` using whole-image statistics.
pub fn match_global(pan: &Field, target: &Field) -> Result<Field> {
    if !pan.same_shape(target) {
        return Err(Error::DimensionMismatch(
            "match_global operands differ in shape".into(),
        ));
    }
    let (lo, hi) = pan.min_max();
    if hi == lo {
        return Err(Error::DegenerateInput(
            "constant PAN has zero standard deviation".into(),
        ));
    }
    let p = patch_moments_rect(pan, 0, 0, pan.width, pan.height);
    let t = patch_moments_rect(target, 0, 0, target.width, target.height);
    if p.sd == 0.0 {
        return Err(Error::DegenerateInput(
            "PAN standard deviation is zero".into(),
        ));
    }
    let gain = t.sd / p.sd;
    let offset = t.mean - gain * p.mean;
    let values = pan.values.iter().map(|&v| gain * v + offset).collect();
    Ok(Field {
        width: pan.width,
        height: pan.height,
        values,
    })
}

fn patch_moments_rect(f: &Field, x0: usize, y0: usize, w: usize, h: usize) -> Moments {
    let n = (w * h) as f64;
    let mut sum = 0.0;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            sum += f.values[y * f.width + x];
        }
    }
    let mean = sum / n;
    let mut var = 0.0;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let d = f.values[y * f.width + x] - mean;
            var += d * d;
        }
    }
    Moments {
        mean,
        sd: (var / n).sqrt(),
    }
}

/// Match `pan` to `target` over sliding patches, averaging overlapping
/// contributions. Patches whose PAN content is constant (sd below
/// `1e-12` of the global PAN range) contribute the target patch mean.
pub fn match_local(pan: &Field, target: &Field, params: &MatchParams) -> Result<Field> {
    params.validate()?;
    if !pan.same_shape(target) {
        return Err(Error::DimensionMismatch(
            "match_local operands differ in shape".into(),
        ));
    }
    if pan.width < params.window || pan.height < params.window {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} smaller than the {} px window",
            pan.width, pan.height, params.window
        )));
    }

    let window = params.window;
    let (lo, hi) = pan.min_max();
    let degenerate_sd = 1e-12 * (hi - lo);

    let mut accum = vec![0.0f64; pan.len()];
    let mut count = vec![0u32; pan.len()];

    // patch origins in row-major order keeps the accumulation
    // deterministic
    for &y0 in &origins(pan.height, window, params.stride) {
        for &x0 in &origins(pan.width, window, params.stride) {
            let p = patch_moments(pan, x0, y0, window);
            let t = patch_moments(target, x0, y0, window);
            if hi == lo || p.sd < degenerate_sd {
                for y in y0..y0 + window {
                    for x in x0..x0 + window {
                        let i = y * pan.width + x;
                        accum[i] += t.mean;
                        count[i] += 1;
                    }
                }
            } else {
                let gain = t.sd / p.sd;
                let offset = t.mean - gain * p.mean;
                for y in y0..y0 + window {
                    for x in x0..x0 + window {
                        let i = y * pan.width + x;
                        accum[i] += gain * pan.values[i] + offset;
                        count[i] += 1;
                    }
                }
            }
        }
    }

    let values = accum
        .iter()
        .zip(&count)
        .map(|(&a, &c)| {
            debug_assert!(c > 0, "every pixel must be covered by a patch");
            a / c as f64
        })
        .collect();
    Ok(Field {
        width: pan.width,
        height: pan.height,
        values,
    })
}
