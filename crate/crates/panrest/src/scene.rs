//! Procedural multiband test scenes.
//!
//! Scenes mix piecewise-constant regions (edges visible in every band and
//! in the panchromatic average), oriented sinusoidal gratings whose
//! frequencies alias on coarse grids, and a little band-independent
//! noise. Generation is fully deterministic from the seed and uses no
//! external randomness.

use crate::raster::MultiBandImage;

struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    fn next(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

/// Generate a `width x height x bands` scene of edges and texture with
/// samples in `[0.02, 0.98]`.
pub fn synthetic_scene(width: usize, height: usize, bands: usize, seed: u64) -> MultiBandImage {
    assert!(width >= 8 && height >= 8 && bands >= 1);
    let mut rng = SplitMix64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let n = width * height;
    let mut samples = vec![0.0f64; n * bands];

    // smooth background: per-band offset plus two shared low-frequency
    // cosine modes with band-specific amplitudes
    let offsets: Vec<f64> = (0..bands).map(|_| rng.range(0.3, 0.6)).collect();
    let mode = |rng: &mut SplitMix64| {
        (
            rng.range(0.5, 2.0) * std::f64::consts::PI / width as f64,
            rng.range(0.5, 2.0) * std::f64::consts::PI / height as f64,
            rng.range(0.0, std::f64::consts::TAU),
        )
    };
    let modes = [mode(&mut rng), mode(&mut rng)];
    let mode_amps: Vec<[f64; 2]> = (0..bands)
        .map(|_| [rng.range(0.03, 0.10), rng.range(0.03, 0.10)])
        .collect();
    for b in 0..bands {
        for y in 0..height {
            for x in 0..width {
                let mut v = offsets[b];
                for (m, &(fx, fy, ph)) in modes.iter().enumerate() {
                    v += mode_amps[b][m] * (fx * x as f64 + fy * y as f64 + ph).cos();
                }
                samples[b * n + y * width + x] = v;
            }
        }
    }

    // piecewise-constant regions: disks and rectangles painted in order,
    // each with its own per-band reflectance
    let min_dim = width.min(height) as f64;
    let shapes = 10 + (n / 12_000).min(30);
    for _ in 0..shapes {
        let reflect: Vec<f64> = (0..bands).map(|_| rng.range(0.12, 0.88)).collect();
        let blend = rng.range(0.55, 1.0);
        if rng.next() < 0.5 {
            let cx = rng.range(0.0, width as f64);
            let cy = rng.range(0.0, height as f64);
            let r = rng.range(0.04, 0.18) * min_dim;
            let r2 = r * r;
            let x_lo = ((cx - r).floor().max(0.0)) as usize;
            let x_hi = ((cx + r).ceil().min(width as f64 - 1.0)) as usize;
            let y_lo = ((cy - r).floor().max(0.0)) as usize;
            let y_hi = ((cy + r).ceil().min(height as f64 - 1.0)) as usize;
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    if dx * dx + dy * dy <= r2 {
                        for b in 0..bands {
                            let s = &mut samples[b * n + y * width + x];
                            *s = (1.0 - blend) * *s + blend * reflect[b];
                        }
                    }
                }
            }
        } else {
            let w = (rng.range(0.05, 0.25) * width as f64) as usize;
            let h = (rng.range(0.05, 0.25) * height as f64) as usize;
            let x0 = (rng.range(0.0, (width - w.min(width)) as f64)) as usize;
            let y0 = (rng.range(0.0, (height - h.min(height)) as f64)) as usize;
            for y in y0..(y0 + h).min(height) {
                for x in x0..(x0 + w).min(width) {
                    for b in 0..bands {
                        let s = &mut samples[b * n + y * width + x];
                        *s = (1.0 - blend) * *s + blend * reflect[b];
                    }
                }
            }
        }
    }

    // oriented gratings confined to random rectangles; frequencies sit
    // between pi/10 and pi/3 so they survive a moderate downsampling but
    // alias on strongly decimated grids. Texture is mostly shared across
    // bands with a mild spectral tilt, as in natural materials.
    let gratings = 5 + (n / 40_000).min(8);
    for _ in 0..gratings {
        let freq = rng.range(std::f64::consts::PI / 10.0, std::f64::consts::PI / 3.2);
        let angle = rng.range(0.0, std::f64::consts::PI);
        let (fx, fy) = (freq * angle.cos(), freq * angle.sin());
        let phase = rng.range(0.0, std::f64::consts::TAU);
        let amp = rng.range(0.025, 0.06);
        let common = rng.range(0.6, 1.2);
        let band_scale: Vec<f64> = (0..bands)
            .map(|_| common * rng.range(0.85, 1.15))
            .collect();
        let w = ((rng.range(0.2, 0.5) * width as f64) as usize).max(8);
        let h = ((rng.range(0.2, 0.5) * height as f64) as usize).max(8);
        let x0 = (rng.range(0.0, (width - w.min(width)) as f64)) as usize;
        let y0 = (rng.range(0.0, (height - h.min(height)) as f64)) as usize;
        for y in y0..(y0 + h).min(height) {
            for x in x0..(x0 + w).min(width) {
                let g = (fx * x as f64 + fy * y as f64 + phase).cos();
                for b in 0..bands {
                    samples[b * n + y * width + x] += amp * band_scale[b] * g;
                }
            }
        }
    }

    // fine frame-wide texture shared across bands: keeps every block
    // statistically alive and aliases once strongly decimated
    let micro: Vec<f64> = {
        let f1 = (
            rng.range(std::f64::consts::PI / 6.0, std::f64::consts::PI / 3.0),
            rng.range(0.0, std::f64::consts::PI),
            rng.range(0.0, std::f64::consts::TAU),
        );
        let f2 = (
            rng.range(std::f64::consts::PI / 8.0, std::f64::consts::PI / 3.5),
            rng.range(0.0, std::f64::consts::PI),
            rng.range(0.0, std::f64::consts::TAU),
        );
        let mut field = vec![0.0f64; n];
        for y in 0..height {
            for x in 0..width {
                let mut v = 0.0;
                for &(freq, angle, ph) in &[f1, f2] {
                    let (fx, fy) = (freq * angle.cos(), freq * angle.sin());
                    v += (fx * x as f64 + fy * y as f64 + ph).cos();
                }
                field[y * width + x] = v;
            }
        }
        field
    };
    let micro_amp = 0.012;
    let micro_scale: Vec<f64> = (0..bands).map(|_| rng.range(0.85, 1.15)).collect();
    for b in 0..bands {
        let gain = micro_amp * micro_scale[b];
        for (s, &m) in samples[b * n..(b + 1) * n].iter_mut().zip(&micro) {
            *s += gain * m;
        }
    }

    // faint band-independent noise
    for v in samples.iter_mut() {
        *v += rng.range(-0.006, 0.006);
    }

    for v in samples.iter_mut() {
        *v = v.clamp(0.02, 0.98);
    }

    MultiBandImage::new(width, height, bands, samples).expect("generated scene is valid")
}
