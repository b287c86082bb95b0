//! Nonlocal similarity weights computed on the panchromatic image.
//!
//! For every pixel, neighbors inside a `(2*nu_r+1)^2` search window get a
//! weight combining spatial closeness and patch similarity,
//!
//! ```text
//! w(i,j) = exp(-|x_i - x_j|^2 / h_spt^2 - ssd(i,j) / h_sim^2) / gamma_i
//! ```
//!
//! normalized so each row sums to one over the neighbors that fall inside
//! the image domain. Patch SSD near borders uses symmetric mirror
//! extension so distances are never biased by padding.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::PanImage;

/// Parameters of the weight kernel.
///
/// `h_sim` of `None` resolves to `0.04 * (max(P) - min(P))` at computation
/// time; the similarity decay scales with the panchromatic dynamic range.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightParams {
    /// Search window radius; the window is `(2*nu_r+1)^2` pixels.
    pub nu_r: usize,
    /// Patch radius for the similarity term (radius 1 = 3x3 patches).
    pub patch_radius: usize,
    /// Spatial decay, in pixels.
    pub h_spt: f64,
    /// Similarity decay, in panchromatic intensity units.
    pub h_sim: Option<f64>,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            nu_r: 7,
            patch_radius: 1,
            h_spt: 2.5,
            h_sim: None,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if self.nu_r < 1 {
            return Err(Error::InvalidParameter("nu_r must be at least 1".into()));
        }
        if !(self.h_spt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "h_spt must be positive, got {}",
                self.h_spt
            )));
        }
        if let Some(h) = self.h_sim {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "h_sim must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Row-normalized nonlocal weights over a fixed search window.
///
/// Storage is dense per row: pixel `i` owns `(2*nu_r+1)^2` slots indexed
/// by window offset in row-major order (dy outer, dx inner); offsets that
/// leave the image domain hold weight zero. The square roots of the
/// weights are kept as the canonical payload since every operator
/// application consumes `sqrt(w)`.
#[derive(Debug, Clone)]
pub struct WeightGraph {
    pub width: usize,
    pub height: usize,
    pub nu_r: usize,
    sqrt_weights: Vec<f64>,
}

impl WeightGraph {
    /// Window side length `2*nu_r + 1`.
    #[inline]
    pub fn side(&self) -> usize {
        2 * self.nu_r + 1
    }

    /// Slots per pixel, `(2*nu_r + 1)^2`.
    #[inline]
    pub fn slots(&self) -> usize {
        self.side() * self.side()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// `sqrt(w(i, j))` for the neighbor at window slot `o` of pixel `i`.
    #[inline]
    pub fn sqrt_weight(&self, i: usize, o: usize) -> f64 {
        self.sqrt_weights[i * self.slots() + o]
    }

    /// `w(i, j)` for the neighbor at window slot `o` of pixel `i`.
    #[inline]
    pub fn weight(&self, i: usize, o: usize) -> f64 {
        let s = self.sqrt_weight(i, o);
        s * s
    }

    /// Raw square-root payload, `pixels() * slots()` long.
    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_weights
    }

    /// Iterate `(dy, dx, slot)` over the window in storage order.
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize, usize)> + '_ {
        let r = self.nu_r as isize;
        let side = self.side();
        (-r..=r).flat_map(move |dy| {
            (-r..=r).map(move |dx| {
                let o = (dy + r) as usize * side + (dx + r) as usize;
                (dy, dx, o)
            })
        })
    }

    /// Sum of row `i` (should be 1 for every pixel).
    pub fn row_sum(&self, i: usize) -> f64 {
        (0..self.slots()).map(|o| self.weight(i, o)).sum()
    }

    /// Largest column sum `max_i sum_j w(j, i)`; used by the operator-norm
    /// bound.
    pub fn max_column_sum(&self) -> f64 {
        let mut col = vec![0.0f64; self.pixels()];
        let r = self.nu_r as isize;
        let side = self.side();
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                let i = (y * self.width as isize + x) as usize;
                for dy in -r..=r {
                    let ny = y + dy;
                    if ny < 0 || ny >= self.height as isize {
                        continue;
                    }
                    for dx in -r..=r {
                        let nx = x + dx;
                        if nx < 0 || nx >= self.width as isize {
                            continue;
                        }
                        let o = (dy + r) as usize * side + (dx + r) as usize;
                        let j = (ny * self.width as isize + nx) as usize;
                        col[j] += self.weight(i, o);
                    }
                }
            }
        }
        col.iter().cloned().fold(0.0, f64::max)
    }
}

#[inline]
fn mirror(mut idx: isize, len: usize) -> usize {
    // symmetric extension: -1 -> 0, -2 -> 1, len -> len-1, ...
    let n = len as isize;
    loop {
        if idx < 0 {
            idx = -idx - 1;
        } else if idx >= n {
            idx = 2 * n - 1 - idx;
        } else {
            return idx as usize;
        }
    }
}

/// Sum of squared differences between the patches centered at pixels `i`
/// and `j`, with symmetric mirror extension outside the domain.
pub fn patch_distance(pan: &PanImage, i: usize, j: usize, patch_radius: usize) -> f64 {
    let w = pan.width as isize;
    let h = pan.height as isize;
    let r = patch_radius as isize;
    let (xi, yi) = ((i % pan.width) as isize, (i / pan.width) as isize);
    let (xj, yj) = ((j % pan.width) as isize, (j / pan.width) as isize);

    let interior = xi - r >= 0
        && xi + r < w
        && yi - r >= 0
        && yi + r < h
        && xj - r >= 0
        && xj + r < w
        && yj - r >= 0
        && yj + r < h;

    let mut ssd = 0.0;
    if interior {
        for dy in -r..=r {
            let row_i = ((yi + dy) * w + xi) as usize;
            let row_j = ((yj + dy) * w + xj) as usize;
            for dx in -r..=r {
                let d = pan.values[(row_i as isize + dx) as usize]
                    - pan.values[(row_j as isize + dx) as usize];
                ssd += d * d;
            }
        }
    } else {
        for dy in -r..=r {
            for dx in -r..=r {
                let a = pan.values[mirror(yi + dy, pan.height) * pan.width + mirror(xi + dx, pan.width)];
                let b = pan.values[mirror(yj + dy, pan.height) * pan.width + mirror(xj + dx, pan.width)];
                let d = a - b;
                ssd += d * d;
            }
        }
    }
    ssd
}

/// Resolve the similarity decay: explicit value, or 4% of the PAN range.
pub fn resolve_h_sim(pan: &PanImage, params: &WeightParams) -> Result<f64> {
    match params.h_sim {
        Some(h) => Ok(h),
        None => {
            let (lo, hi) = pan.min_max();
            let h = 0.04 * (hi - lo);
            if !(h > 0.0) {
                return Err(Error::DegenerateInput(
                    "constant PAN: cannot derive h_sim from a zero dynamic range".into(),
                ));
            }
            Ok(h)
        }
    }
}

/// Weights of a single pixel without building the whole graph, as
/// `(dy, dx, weight)` in window storage order. Out-of-domain neighbors
/// are omitted. Intended for inspection and debugging output.
pub fn weight_row(
    pan: &PanImage,
    params: &WeightParams,
    x: usize,
    y: usize,
) -> Result<Vec<(isize, isize, f64)>> {
    params.validate()?;
    if x >= pan.width || y >= pan.height {
        return Err(Error::InvalidParameter(format!(
            "pixel ({x},{y}) outside {}x{}",
            pan.width, pan.height
        )));
    }
    let h_sim = resolve_h_sim(pan, params)?;
    let nu = params.nu_r as isize;
    let i = y * pan.width + x;
    let mut entries = Vec::new();
    let mut gamma = 0.0;
    for dy in -nu..=nu {
        let ny = y as isize + dy;
        for dx in -nu..=nu {
            let nx = x as isize + dx;
            if ny < 0 || ny >= pan.height as isize || nx < 0 || nx >= pan.width as isize {
                continue;
            }
            let j = ny as usize * pan.width + nx as usize;
            let spatial = (dx * dx + dy * dy) as f64;
            let ssd = patch_distance(pan, i, j, params.patch_radius);
            let e = (-spatial / (params.h_spt * params.h_spt) - ssd / (h_sim * h_sim)).exp();
            entries.push((dy, dx, e));
            gamma += e;
        }
    }
    for entry in entries.iter_mut() {
        entry.2 /= gamma;
    }
    Ok(entries)
}

/// Build the weight graph of `pan` under `params`.
pub fn compute_weights(pan: &PanImage, params: &WeightParams) -> Result<WeightGraph> {
    params.validate()?;
    let patch_side = 2 * params.patch_radius + 1;
    if pan.width < patch_side || pan.height < patch_side {
        return Err(Error::InvalidParameter(format!(
            "image {}x{} is smaller than the {patch_side}x{patch_side} patch",
            pan.width, pan.height
        )));
    }
    let h_sim = resolve_h_sim(pan, params)?;
    let inv_h_spt2 = 1.0 / (params.h_spt * params.h_spt);
    let inv_h_sim2 = 1.0 / (h_sim * h_sim);

    let nu = params.nu_r as isize;
    let side = 2 * params.nu_r + 1;
    let slots = side * side;
    let width = pan.width;
    let height = pan.height;
    let patch_radius = params.patch_radius;

    let mut sqrt_weights = vec![0.0f64; width * height * slots];

    sqrt_weights
        .par_chunks_mut(width * slots)
        .enumerate()
        .for_each(|(y, row_out)| {
            let y = y as isize;
            let mut exps = vec![0.0f64; slots];
            for x in 0..width as isize {
                let i = (y * width as isize + x) as usize;
                let mut gamma = 0.0;
                for dy in -nu..=nu {
                    let ny = y + dy;
                    for dx in -nu..=nu {
                        let nx = x + dx;
                        let o = (dy + nu) as usize * side + (dx + nu) as usize;
                        if ny < 0 || ny >= height as isize || nx < 0 || nx >= width as isize {
                            exps[o] = 0.0;
                            continue;
                        }
                        let j = (ny * width as isize + nx) as usize;
                        let spatial = (dx * dx + dy * dy) as f64;
                        let ssd = patch_distance(pan, i, j, patch_radius);
                        let e = (-spatial * inv_h_spt2 - ssd * inv_h_sim2).exp();
                        exps[o] = e;
                        gamma += e;
                    }
                }
                let inv_gamma = 1.0 / gamma;
                let out = &mut row_out[x as usize * slots..(x as usize + 1) * slots];
                for (slot, &e) in exps.iter().enumerate() {
                    out[slot] = (e * inv_gamma).sqrt();
                }
            }
        });

    Ok(WeightGraph {
        width,
        height,
        nu_r: params.nu_r,
        sqrt_weights,
    })
}
