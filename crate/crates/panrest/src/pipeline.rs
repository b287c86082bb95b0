//! End-to-end restoration chain, reduced-resolution simulation protocol
//! and a minimal component-substitution pansharpener for self-contained
//! testing.
//!
//! The restoration takes a fused product and its panchromatic image,
//! separates structure from chromaticity with PCA, filters every
//! chromatic component with the PAN-conditioned nonlocal solver, replaces
//! the structural component by the locally histogram-matched PAN, and
//! transforms back. The aliased low-resolution bands are never consulted.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2, signed_bin, to_complex};
use crate::histmatch::{match_global, match_local, MatchParams};
use crate::metrics::rmse;
use crate::nlweights::{compute_weights, WeightParams};
use crate::pca::{fit_pca, forward_pca, inverse_pca};
use crate::pdsolver::{filter_component_with_trace, filter_components, SolverParams, TracePoint};
use crate::raster::{Field, MultiBandImage, PanImage};

/// Full parameter set of [`restore`].
///
/// The solver trade-off is expressed in normalized component units: the
/// lambda applied to a chromatic component is `solver.lambda` times the
/// component's standard deviation, so one value behaves consistently
/// across dynamic ranges and across components of different energy.
#[derive(Debug, Clone, Default)]
pub struct RestoreParams {
    pub weights: WeightParams,
    pub solver: SolverParams,
    pub matching: MatchParams,
    /// Replace the structural component by globally (instead of locally)
    /// matched PAN.
    pub global_match: bool,
    /// Optional per-chromatic-component trade-off overrides
    /// (length `bands - 1`, same normalized units); `None` uses the same
    /// lambda everywhere.
    pub lambda_overrides: Option<Vec<f64>>,
}

/// Reduced-resolution simulation protocol: how the reference, PAN and MS
/// rasters are derived from a high-resolution source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    /// Band-averaging coefficients producing the panchromatic signal;
    /// nonnegative, summing to one.
    pub pan_coeffs: Vec<f64>,
    /// Downsampling factor from the source to the reference/PAN grid.
    pub ref_factor: usize,
    /// MTF value at the target Nyquist for the reference/PAN path.
    pub ref_mtf: f64,
    /// Additional factor from the PAN grid to the MS grid.
    pub ms_factor: usize,
    /// MTF value at the target Nyquist for the MS path (no anti-alias
    /// cut: the residual aliasing is deliberate).
    pub ms_cut: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            pan_coeffs: vec![0.1, 0.4, 0.25, 0.25],
            ref_factor: 3,
            ref_mtf: 0.15,
            ms_factor: 4,
            ms_cut: 0.35,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self, bands: usize) -> Result<()> {
        validate_coeffs(&self.pan_coeffs, bands)?;
        if self.ref_factor < 1 || self.ms_factor < 1 {
            return Err(Error::InvalidParameter(
                "resolution factors must be at least 1".into(),
            ));
        }
        for (name, cut) in [("ref_mtf", self.ref_mtf), ("ms_cut", self.ms_cut)] {
            if !(cut > 0.0 && cut <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1], got {cut}"
                )));
            }
        }
        Ok(())
    }
}

fn validate_coeffs(coeffs: &[f64], bands: usize) -> Result<()> {
    if coeffs.len() != bands {
        return Err(Error::InvalidParameter(format!(
            "{} PAN coefficients for {bands} bands",
            coeffs.len()
        )));
    }
    if coeffs.iter().any(|&c| c < 0.0) {
        return Err(Error::InvalidParameter(
            "PAN coefficients must be nonnegative".into(),
        ));
    }
    let sum: f64 = coeffs.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "PAN coefficients must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Restore a fused product guided by its panchromatic image.
///
/// The aliased MS data is not an input; the restoration relies only on
/// the fused image and PAN.
pub fn restore(
    fused: &MultiBandImage,
    pan: &PanImage,
    params: &RestoreParams,
) -> Result<MultiBandImage> {
    let (out, _) = restore_impl(fused, pan, params, false)?;
    Ok(out)
}

/// [`restore`] that also records the solver energy trace of every
/// chromatic component, keyed by component index.
pub fn restore_with_trace(
    fused: &MultiBandImage,
    pan: &PanImage,
    params: &RestoreParams,
) -> Result<(MultiBandImage, Vec<(usize, Vec<TracePoint>)>)> {
    restore_impl(fused, pan, params, true)
}

fn restore_impl(
    fused: &MultiBandImage,
    pan: &PanImage,
    params: &RestoreParams,
    trace: bool,
) -> Result<(MultiBandImage, Vec<(usize, Vec<TracePoint>)>)> {
    if fused.width != pan.width || fused.height != pan.height {
        return Err(Error::DimensionMismatch(format!(
            "fused {}x{} vs PAN {}x{}",
            fused.width, fused.height, pan.width, pan.height
        )));
    }
    if fused.bands < 2 {
        return Err(Error::InvalidParameter(
            "restoration needs at least 2 bands".into(),
        ));
    }
    if let Some(overrides) = &params.lambda_overrides {
        if overrides.len() != fused.bands - 1 {
            return Err(Error::InvalidParameter(format!(
                "{} lambda overrides for {} chromatic components",
                overrides.len(),
                fused.bands - 1
            )));
        }
        if overrides.iter().any(|&l| l < 0.0) {
            return Err(Error::InvalidParameter(
                "lambda overrides must be nonnegative".into(),
            ));
        }
    }

    let basis = fit_pca(fused)?;
    let components = forward_pca(fused, &basis)?;

    let graph = compute_weights(pan, &params.weights)?;

    let mut out_fields: Vec<Field> = Vec::with_capacity(fused.bands);
    let structural = components.band_field(0);
    let matched = if params.global_match {
        match_global(pan, &structural)?
    } else {
        match_local(pan, &structural, &params.matching)?
    };
    out_fields.push(matched);

    // normalized component units: the trade-off scales with each
    // component's spread
    let chroma: Vec<Field> = (1..fused.bands).map(|m| components.band_field(m)).collect();
    let lambdas: Vec<f64> = chroma
        .iter()
        .enumerate()
        .map(|(idx, field)| {
            let base = params
                .lambda_overrides
                .as_ref()
                .map_or(params.solver.lambda, |ovr| ovr[idx]);
            base * field.std_dev()
        })
        .collect();

    let mut traces = Vec::new();
    if trace {
        for (idx, field) in chroma.iter().enumerate() {
            let mut solver = params.solver.clone();
            solver.lambda = lambdas[idx];
            let (filtered, points) = filter_component_with_trace(field, &graph, &solver)?;
            traces.push((idx + 1, points));
            out_fields.push(filtered.output);
        }
    } else {
        for filtered in filter_components(&chroma, &lambdas, &graph, &params.solver)? {
            out_fields.push(filtered.output);
        }
    }

    let stack = MultiBandImage::from_fields(&out_fields)?;
    Ok((inverse_pca(&stack, &basis)?, traces))
}

fn check_divisible(img: &MultiBandImage, factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(Error::InvalidParameter("factor must be at least 1".into()));
    }
    if img.width % factor != 0 || img.height % factor != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} not divisible by factor {factor}",
            img.width, img.height
        )));
    }
    Ok(())
}

fn gaussian_sigma2(factor: usize, cut_value: f64) -> Option<f64> {
    if cut_value >= 1.0 {
        return None; // flat transfer
    }
    let nyquist = PI / factor as f64;
    Some(nyquist * nyquist / (-2.0 * cut_value.ln()))
}

fn fourier_downsample_band(
    band: &[f64],
    width: usize,
    height: usize,
    factor: usize,
    cut_value: f64,
    hard_cut: bool,
) -> Vec<f64> {
    if factor == 1 && cut_value >= 1.0 {
        return band.to_vec();
    }
    let mut spectrum = to_complex(band);
    fft2(&mut spectrum, width, height, false);

    let sigma2 = gaussian_sigma2(factor, cut_value);
    let keep = |bin: i64, len: usize| -> bool {
        // target Nyquist in source bins is len / (2 * factor); the
        // boundary bin survives, everything strictly beyond is zeroed
        2 * bin.unsigned_abs() as usize * factor <= len
    };
    for y in 0..height {
        let ky = signed_bin(y, height);
        let fy = 2.0 * PI * ky as f64 / height as f64;
        for x in 0..width {
            let kx = signed_bin(x, width);
            let v = &mut spectrum[y * width + x];
            if hard_cut && !(keep(kx, width) && keep(ky, height)) {
                *v = Complex::new(0.0, 0.0);
                continue;
            }
            if let Some(s2) = sigma2 {
                let fx = 2.0 * PI * kx as f64 / width as f64;
                let h = (-(fx * fx + fy * fy) / (2.0 * s2)).exp();
                *v *= h;
            }
        }
    }

    fft2(&mut spectrum, width, height, true);
    let scale = 1.0 / (width * height) as f64;
    let out_w = width / factor;
    let out_h = height / factor;
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            out.push(spectrum[(y * factor) * width + x * factor].re * scale);
        }
    }
    out
}

fn fourier_downsample(
    img: &MultiBandImage,
    factor: usize,
    cut_value: f64,
    hard_cut: bool,
) -> Result<MultiBandImage> {
    check_divisible(img, factor)?;
    if !(cut_value > 0.0 && cut_value <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cut value must lie in (0, 1], got {cut_value}"
        )));
    }
    let fields: Vec<Field> = (0..img.bands)
        .map(|m| Field {
            width: img.width / factor,
            height: img.height / factor,
            values: fourier_downsample_band(
                img.band(m),
                img.width,
                img.height,
                factor,
                cut_value,
                hard_cut,
            ),
        })
        .collect();
    MultiBandImage::from_fields(&fields)
}

/// Low-pass and decimate in the Fourier domain: an isotropic Gaussian
/// transfer reaching `cut_value` at the target Nyquist, a hard
/// anti-alias cut beyond it, then decimation by `factor`.
pub fn mtf_downsample(img: &MultiBandImage, factor: usize, cut_value: f64) -> Result<MultiBandImage> {
    fourier_downsample(img, factor, cut_value, true)
}

/// Same Gaussian transfer but without the anti-alias cut, so frequencies
/// beyond the target Nyquist fold back after decimation. This models the
/// under-filtered MS sensor path.
pub fn mtf_downsample_aliased(
    img: &MultiBandImage,
    factor: usize,
    cut_value: f64,
) -> Result<MultiBandImage> {
    fourier_downsample(img, factor, cut_value, false)
}

/// Pixel-wise weighted band average with the given coefficients.
pub fn simulate_pan(highres: &MultiBandImage, coeffs: &[f64]) -> Result<PanImage> {
    validate_coeffs(coeffs, highres.bands)?;
    let n = highres.pixels();
    let mut values = vec![0.0f64; n];
    for (m, &alpha) in coeffs.iter().enumerate() {
        let band = highres.band(m);
        for (v, &b) in values.iter_mut().zip(band) {
            *v += alpha * b;
        }
    }
    Ok(Field {
        width: highres.width,
        height: highres.height,
        values,
    })
}

/// Products of the reduced-resolution protocol.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// Ground truth on the PAN grid.
    pub reference: MultiBandImage,
    /// Panchromatic image on the same grid as the reference.
    pub pan: PanImage,
    /// Aliased low-resolution bands, `ms_factor` coarser than PAN.
    pub ms: MultiBandImage,
}

/// Derive (reference, PAN, MS) from a high-resolution source following
/// the simulation spec. The source is band-averaged before the PAN
/// downsampling; both orders are equivalent since the filter is linear.
pub fn simulate_dataset(highres: &MultiBandImage, spec: &SimulationSpec) -> Result<SimulatedDataset> {
    spec.validate(highres.bands)?;
    let total = spec.ref_factor * spec.ms_factor;
    check_divisible(highres, spec.ref_factor)?;
    check_divisible(highres, total)?;

    let reference = mtf_downsample(highres, spec.ref_factor, spec.ref_mtf)?;
    let pan_high = simulate_pan(highres, &spec.pan_coeffs)?;
    let pan_img = mtf_downsample(&pan_high.to_image(), spec.ref_factor, spec.ref_mtf)?;
    let ms = mtf_downsample_aliased(highres, total, spec.ms_cut)?;
    Ok(SimulatedDataset {
        reference,
        pan: pan_img.band_field(0),
        ms,
    })
}

/// Fourier zero-padding interpolation to `factor` times the dimensions;
/// even-size Nyquist bins are split symmetrically to keep the output
/// real. DC is preserved.
pub fn upsample(ms: &MultiBandImage, factor: usize) -> Result<MultiBandImage> {
    if factor == 0 {
        return Err(Error::InvalidParameter("factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(ms.clone());
    }
    let (w, h) = (ms.width, ms.height);
    let (tw, th) = (w * factor, h * factor);
    let gain = (factor * factor) as f64;

    // per-axis target placements: bin index and weight
    let placements = |n: usize, len: usize, tlen: usize| -> Vec<(usize, f64)> {
        let k = signed_bin(n, len);
        let wrap = |k: i64| -> usize {
            if k >= 0 {
                k as usize
            } else {
                (k + tlen as i64) as usize
            }
        };
        if len % 2 == 0 && n == len / 2 {
            vec![(wrap(k), 0.5), (wrap(-k), 0.5)]
        } else {
            vec![(wrap(k), 1.0)]
        }
    };

    let fields: Vec<Field> = (0..ms.bands)
        .map(|m| {
            let mut spectrum = to_complex(ms.band(m));
            fft2(&mut spectrum, w, h, false);

            let mut padded = vec![Complex::new(0.0, 0.0); tw * th];
            for y in 0..h {
                let ys = placements(y, h, th);
                for x in 0..w {
                    let xs = placements(x, w, tw);
                    let v = spectrum[y * w + x] * gain;
                    for &(ty, wy) in &ys {
                        for &(tx, wx) in &xs {
                            padded[ty * tw + tx] += v * (wx * wy);
                        }
                    }
                }
            }
            fft2(&mut padded, tw, th, true);
            let scale = 1.0 / (tw * th) as f64;
            Field {
                width: tw,
                height: th,
                values: padded.iter().map(|c| c.re * scale).collect(),
            }
        })
        .collect();
    MultiBandImage::from_fields(&fields)
}

/// Component-substitution baseline: upsample the MS bands, replace the
/// first principal component by the globally matched PAN, invert.
pub fn baseline_pansharpen(
    ms: &MultiBandImage,
    pan: &PanImage,
    factor: usize,
) -> Result<MultiBandImage> {
    if ms.width * factor != pan.width || ms.height * factor != pan.height {
        return Err(Error::DimensionMismatch(format!(
            "PAN {}x{} is not {factor}x the MS grid {}x{}",
            pan.width, pan.height, ms.width, ms.height
        )));
    }
    let up = upsample(ms, factor)?;
    let basis = fit_pca(&up)?;
    let mut components = forward_pca(&up, &basis)?;
    let first = components.band_field(0);
    let matched = match_global(pan, &first)?;
    components.band_mut(0).copy_from_slice(&matched.values);
    inverse_pca(&components, &basis)
}

/// One grid-search sample of [`tune`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneSample {
    pub h_sim: f64,
    pub lambda: f64,
    pub rmse: f64,
}

/// Search grid for [`tune`], read from JSON by the command-line front
/// end.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneGrid {
    pub h_sim: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Grid search of `(h_sim, lambda)` minimizing the RMSE of the restored
/// image against a reference. Weights are rebuilt once per `h_sim`.
pub fn tune(
    fused: &MultiBandImage,
    pan: &PanImage,
    reference: &MultiBandImage,
    grid: &TuneGrid,
    params: &RestoreParams,
) -> Result<Vec<TuneSample>> {
    if grid.h_sim.is_empty() || grid.lambda.is_empty() {
        return Err(Error::InvalidParameter(
            "tuning grid must contain at least one h_sim and one lambda".into(),
        ));
    }
    let mut samples = Vec::with_capacity(grid.h_sim.len() * grid.lambda.len());
    for &h_sim in &grid.h_sim {
        for &lambda in &grid.lambda {
            let mut p = params.clone();
            p.weights.h_sim = Some(h_sim);
            p.solver.lambda = lambda;
            p.lambda_overrides = None;
            let restored = restore(fused, pan, &p)?;
            samples.push(TuneSample {
                h_sim,
                lambda,
                rmse: rmse(reference, &restored)?,
            });
        }
    }
    Ok(samples)
}

/// Best sample of a tuning run (lowest RMSE, first on ties).
pub fn best_sample(samples: &[TuneSample]) -> Option<&TuneSample> {
    samples
        .iter()
        .min_by(|a, b| a.rmse.partial_cmp(&b.rmse).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splitmix(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn random_image(w: usize, h: usize, m: usize, seed: u64) -> MultiBandImage {
        let mut rng = splitmix(seed);
        let samples = (0..w * h * m).map(|_| rng()).collect();
        MultiBandImage::new(w, h, m, samples).unwrap()
    }

    #[test]
    fn downsample_factor_one_flat_cut_is_identity() {
        let img = random_image(8, 8, 2, 1);
        let out = mtf_downsample(&img, 1, 1.0).unwrap();
        for (a, b) in out.samples.iter().zip(&img.samples) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn downsample_preserves_constant_images() {
        let img = MultiBandImage::new(8, 8, 1, vec![4.25; 64]).unwrap();
        let out = mtf_downsample(&img, 2, 0.15).unwrap();
        assert_eq!((out.width, out.height), (4, 4));
        for &v in &out.samples {
            assert!((v - 4.25).abs() < 1e-9);
        }
    }

    #[test]
    fn downsample_preserves_band_means() {
        let img = random_image(12, 12, 2, 3);
        let out = mtf_downsample(&img, 3, 0.15).unwrap();
        for m in 0..2 {
            let mean_in: f64 = img.band(m).iter().sum::<f64>() / 144.0;
            let mean_out: f64 = out.band(m).iter().sum::<f64>() / 16.0;
            assert!(
                (mean_in - mean_out).abs() <= 1e-9 * mean_in.abs(),
                "band {m}: {mean_in} vs {mean_out}"
            );
        }
    }

    #[test]
    fn nyquist_cosine_is_attenuated_to_cut_value() {
        // cosine exactly at the target Nyquist for factor 2
        let w = 16;
        let values: Vec<f64> = (0..w * w)
            .map(|i| (PI / 2.0 * (i % w) as f64).cos())
            .collect();
        let img = MultiBandImage::new(w, w, 1, values).unwrap();
        let out = mtf_downsample(&img, 2, 0.15).unwrap();
        let amp = out
            .samples
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(amp <= 0.15 + 1e-6, "amplitude {amp}");
        assert!(amp >= 0.05, "cosine should survive attenuated, got {amp}");
    }

    #[test]
    fn hard_cut_removes_out_of_band_content() {
        // frequency 1.5x the target Nyquist vanishes under the reference
        // path but survives (aliased) under the MS path
        let w = 16;
        let values: Vec<f64> = (0..w * w)
            .map(|i| (2.0 * PI * 3.0 * (i % w) as f64 / w as f64).cos())
            .collect();
        let img = MultiBandImage::new(w, w, 1, values).unwrap();
        let clean = mtf_downsample(&img, 4, 0.35).unwrap();
        let clean_amp = clean.samples.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(clean_amp < 1e-9, "anti-aliased amplitude {clean_amp}");

        let aliased = mtf_downsample_aliased(&img, 4, 0.35).unwrap();
        let alias_amp = aliased
            .samples
            .iter()
            .cloned()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(alias_amp > 1e-3, "alias should fold back, got {alias_amp}");
    }

    #[test]
    fn simulate_pan_selects_and_averages() {
        let img = random_image(4, 4, 3, 5);
        let one_hot = simulate_pan(&img, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(one_hot.values, img.band(1));

        let same = MultiBandImage::from_fields(&[
            img.band_field(0),
            img.band_field(0),
            img.band_field(0),
        ])
        .unwrap();
        let avg = simulate_pan(&same, &[0.2, 0.5, 0.3]).unwrap();
        for (a, b) in avg.values.iter().zip(img.band(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn simulate_pan_paper_coefficients() {
        let img = MultiBandImage::new(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pan = simulate_pan(&img, &[0.1, 0.4, 0.25, 0.25]).unwrap();
        let expect = 0.1 * 1.0 + 0.4 * 2.0 + 0.25 * 3.0 + 0.25 * 4.0;
        assert!((pan.values[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn simulate_pan_rejects_bad_coefficients() {
        let img = random_image(2, 2, 3, 7);
        assert!(simulate_pan(&img, &[0.5, 0.5]).is_err());
        assert!(simulate_pan(&img, &[0.5, 0.6, 0.1]).is_err());
        assert!(simulate_pan(&img, &[-0.1, 0.6, 0.5]).is_err());
    }

    #[test]
    fn dataset_shapes_follow_the_spec() {
        let img = random_image(16, 16, 4, 9);
        let spec = SimulationSpec {
            pan_coeffs: vec![0.25; 4],
            ref_factor: 1,
            ref_mtf: 1.0,
            ms_factor: 2,
            ms_cut: 0.35,
        };
        let data = simulate_dataset(&img, &spec).unwrap();
        assert_eq!((data.pan.width, data.pan.height), (16, 16));
        assert_eq!((data.ms.width, data.ms.height, data.ms.bands), (8, 8, 4));
        assert_eq!(
            (data.reference.width, data.reference.height),
            (16, 16)
        );
    }

    #[test]
    fn identity_factors_return_the_source() {
        let img = random_image(8, 8, 3, 11);
        let spec = SimulationSpec {
            pan_coeffs: vec![0.3, 0.3, 0.4],
            ref_factor: 1,
            ref_mtf: 1.0,
            ms_factor: 1,
            ms_cut: 1.0,
        };
        let data = simulate_dataset(&img, &spec).unwrap();
        for (a, b) in data.reference.samples.iter().zip(&img.samples) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in data.ms.samples.iter().zip(&img.samples) {
            assert!((a - b).abs() < 1e-9);
        }
        let pan = simulate_pan(&img, &spec.pan_coeffs).unwrap();
        for (a, b) in data.pan.values.iter().zip(&pan.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_equals_per_band_downsampling() {
        let img = random_image(12, 12, 3, 13);
        let spec = SimulationSpec {
            pan_coeffs: vec![0.3, 0.3, 0.4],
            ref_factor: 3,
            ref_mtf: 0.15,
            ms_factor: 2,
            ms_cut: 0.35,
        };
        let data = simulate_dataset(&img, &spec).unwrap();
        for m in 0..3 {
            let band = img.band_field(m).to_image();
            let down = mtf_downsample(&band, 3, 0.15).unwrap();
            for (a, b) in data.reference.band(m).iter().zip(&down.samples) {
                assert!((a - b).abs() < 1e-12, "band {m}");
            }
        }
    }

    #[test]
    fn paper_geometry_shapes() {
        let img = random_image(24, 24, 4, 15);
        let spec = SimulationSpec::default();
        let data = simulate_dataset(&img, &spec).unwrap();
        // 24 -> 8 (factor 3) -> 2 (additional factor 4)
        assert_eq!((data.reference.width, data.pan.width, data.ms.width), (8, 8, 2));
        assert_eq!(data.ms.bands, 4);
    }

    #[test]
    fn upsample_factor_one_is_identity() {
        let img = random_image(6, 6, 2, 17);
        let out = upsample(&img, 1).unwrap();
        assert_eq!(out.samples, img.samples);
    }

    #[test]
    fn upsample_preserves_constants() {
        let img = MultiBandImage::new(5, 4, 1, vec![2.5; 20]).unwrap();
        let out = upsample(&img, 3).unwrap();
        assert_eq!((out.width, out.height), (15, 12));
        for &v in &out.samples {
            assert!((v - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn downsample_inverts_upsample_on_band_limited_signals() {
        // a signal produced by upsampling has no energy above the source
        // Nyquist / factor, so the round trip is lossless
        let low = random_image(6, 6, 1, 19);
        let up = upsample(&low, 2).unwrap();
        let down = mtf_downsample(&up, 2, 1.0).unwrap();
        for (a, b) in down.samples.iter().zip(&low.samples) {
            assert!((a - b).abs() < 1e-6);
        }
        let up_again = upsample(&down, 2).unwrap();
        for (a, b) in up_again.samples.iter().zip(&up.samples) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn baseline_shapes_and_substitution_identity() {
        let ms = random_image(8, 8, 4, 21);
        let up = upsample(&ms, 2).unwrap();
        let basis = fit_pca(&up).unwrap();
        let comps = forward_pca(&up, &basis).unwrap();
        let pan = comps.band_field(0);

        let fused = baseline_pansharpen(&ms, &pan, 2).unwrap();
        assert_eq!((fused.width, fused.height, fused.bands), (16, 16, 4));
        // PAN equal to the first PC makes the substitution a no-op
        let scale = up.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in fused.samples.iter().zip(&up.samples) {
            assert!((a - b).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn restore_keeps_shape_and_finiteness() {
        let fused = random_image(12, 12, 3, 23);
        let pan = simulate_pan(&fused, &[0.4, 0.3, 0.3]).unwrap();
        let params = RestoreParams {
            weights: WeightParams {
                nu_r: 2,
                ..WeightParams::default()
            },
            solver: SolverParams {
                max_iters: 20,
                ..SolverParams::default()
            },
            matching: MatchParams {
                window: 5,
                stride: 1,
            },
            ..RestoreParams::default()
        };
        let out = restore(&fused, &pan, &params).unwrap();
        assert!(out.same_shape(&fused));
        assert!(out.samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn restore_is_near_identity_on_pan_consistent_input() {
        // bands affine in PAN, lambda = 0, global matching: every stage
        // reduces to an identity
        let mut rng = splitmix(29);
        let n = 10 * 10;
        let pan_values: Vec<f64> = (0..n).map(|_| rng()).collect();
        let bands: Vec<Field> = (0..3)
            .map(|k| Field {
                width: 10,
                height: 10,
                values: pan_values
                    .iter()
                    .map(|&p| (k + 1) as f64 * p + 0.5 * k as f64)
                    .collect(),
            })
            .collect();
        let fused = MultiBandImage::from_fields(&bands).unwrap();
        let pan = Field::new(10, 10, pan_values).unwrap();
        let params = RestoreParams {
            weights: WeightParams {
                nu_r: 2,
                ..WeightParams::default()
            },
            solver: SolverParams {
                lambda: 0.0,
                ..SolverParams::default()
            },
            global_match: true,
            ..RestoreParams::default()
        };
        let out = restore(&fused, &pan, &params).unwrap();
        for (a, b) in out.samples.iter().zip(&fused.samples) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}
