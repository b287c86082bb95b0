//! Raster data model and bit-exact file I/O.
//!
//! Two in-memory containers are used throughout the crate:
//! [`MultiBandImage`] for band-sequential multispectral stacks and
//! [`Field`] for single-band scalar rasters (the panchromatic image, PCA
//! components, solver state). Samples live in `f64`; the on-disk MBR
//! format stores them as little-endian `f32`, which matches the dynamic
//! range of 12-bit sensor data with headroom.
//!
//! Linear indexing convention, shared by every module: index
//! `i = y * width + x` scans rows first; multiband stacks store band 0
//! completely before band 1 (band-sequential).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MBR_MAGIC: &[u8; 4] = b"MBR1";
const MBR_HEADER_LEN: usize = 20;

/// A single-band raster of `f64` samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// The panchromatic guidance image is a plain scalar raster.
pub type PanImage = Field;

impl Field {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "field dimensions must be at least 1x1".into(),
            ));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "field expects {} samples, got {}",
                width * height,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteData("field samples must be finite".into()));
        }
        Ok(Field {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Field {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Population standard deviation (divisor N).
    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let var = self
            .values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.len() as f64;
        var.sqrt()
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Load a single-band MBR file.
    pub fn load_mbr(path: impl AsRef<Path>) -> Result<Field> {
        let img = MultiBandImage::load_mbr(&path)?;
        if img.bands != 1 {
            return Err(Error::UnsupportedBandCount {
                expected: 1,
                actual: img.bands,
            });
        }
        Ok(Field {
            width: img.width,
            height: img.height,
            values: img.samples,
        })
    }

    pub fn save_mbr(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_mbr(path)
    }

    pub fn to_image(&self) -> MultiBandImage {
        MultiBandImage {
            width: self.width,
            height: self.height,
            bands: 1,
            samples: self.values.clone(),
        }
    }
}

/// A W x H x M raster, band-sequential, each band row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandImage {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub samples: Vec<f64>,
}

impl MultiBandImage {
    pub fn new(width: usize, height: usize, bands: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions and band count must be at least 1".into(),
            ));
        }
        let expect = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(bands))
            .ok_or_else(|| {
                Error::DimensionOverflow(format!("{width}x{height}x{bands} overflows"))
            })?;
        if samples.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "image expects {expect} samples, got {}",
                samples.len()
            )));
        }
        if !samples.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteData("image samples must be finite".into()));
        }
        Ok(MultiBandImage {
            width,
            height,
            bands,
            samples,
        })
    }

    pub fn zeros(width: usize, height: usize, bands: usize) -> Self {
        MultiBandImage {
            width,
            height,
            bands,
            samples: vec![0.0; width * height * bands],
        }
    }

    /// Number of pixels per band.
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn band(&self, m: usize) -> &[f64] {
        let n = self.pixels();
        &self.samples[m * n..(m + 1) * n]
    }

    pub fn band_mut(&mut self, m: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.samples[m * n..(m + 1) * n]
    }

    pub fn band_field(&self, m: usize) -> Field {
        Field {
            width: self.width,
            height: self.height,
            values: self.band(m).to_vec(),
        }
    }

    /// Assemble an image from per-band fields of identical shape.
    pub fn from_fields(fields: &[Field]) -> Result<MultiBandImage> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidParameter("at least one band required".into()))?;
        let mut samples = Vec::with_capacity(first.len() * fields.len());
        for f in fields {
            if !f.same_shape(first) {
                return Err(Error::DimensionMismatch(
                    "all bands must share the same shape".into(),
                ));
            }
            samples.extend_from_slice(&f.values);
        }
        MultiBandImage::new(first.width, first.height, fields.len(), samples)
    }

    pub fn same_shape(&self, other: &MultiBandImage) -> bool {
        self.width == other.width && self.height == other.height && self.bands == other.bands
    }

    /// Decode an MBR file: magic `MBR1`, three little-endian u32 fields
    /// (width, height, bands), four reserved zero bytes, then
    /// `W*H*M` little-endian IEEE-754 binary32 samples, band 0 first.
    pub fn load_mbr(path: impl AsRef<Path>) -> Result<MultiBandImage> {
        let path = path.as_ref();
        let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::decode_mbr(&bytes)
    }

    pub fn decode_mbr(bytes: &[u8]) -> Result<MultiBandImage> {
        if bytes.len() < MBR_HEADER_LEN {
            return Err(Error::MalformedHeader(format!(
                "file is {} bytes, header needs {MBR_HEADER_LEN}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MBR_MAGIC {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:?}, expected \"MBR1\"",
                &bytes[0..4]
            )));
        }
        let u32le = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let width = u32le(4) as u64;
        let height = u32le(8) as u64;
        let bands = u32le(12) as u64;
        if bytes[16..20] != [0, 0, 0, 0] {
            return Err(Error::MalformedHeader(
                "reserved header bytes must be zero".into(),
            ));
        }
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::MalformedHeader(
                "width, height and bands must all be at least 1".into(),
            ));
        }
        let count = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(bands))
            .filter(|&n| n <= (usize::MAX as u64) / 8 && n <= u64::MAX / 4)
            .ok_or_else(|| {
                Error::DimensionOverflow(format!("{width}x{height}x{bands} samples"))
            })?;
        let expected = count * 4;
        let found = (bytes.len() - MBR_HEADER_LEN) as u64;
        if found != expected {
            return Err(Error::PayloadSize { expected, found });
        }
        let mut samples = Vec::with_capacity(count as usize);
        for chunk in bytes[MBR_HEADER_LEN..].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(Error::NonFiniteData(format!(
                    "sample {} is not finite",
                    samples.len()
                )));
            }
            samples.push(v);
        }
        MultiBandImage::new(width as usize, height as usize, bands as usize, samples)
    }

    pub fn save_mbr(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_mbr()?;
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn encode_mbr(&self) -> Result<Vec<u8>> {
        if self.width > u32::MAX as usize
            || self.height > u32::MAX as usize
            || self.bands > u32::MAX as usize
        {
            return Err(Error::DimensionOverflow(
                "dimensions exceed the u32 header fields".into(),
            ));
        }
        let mut bytes = Vec::with_capacity(MBR_HEADER_LEN + self.samples.len() * 4);
        bytes.extend_from_slice(MBR_MAGIC);
        bytes.extend_from_slice(&(self.width as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.height as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.bands as u32).to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        for &v in &self.samples {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(bytes)
    }
}

/// Raise every sample to `gamma`. Samples must already sit in `[0, 1]`.
pub fn gamma_correct(img: &MultiBandImage, gamma: f64) -> Result<MultiBandImage> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if let Some(&bad) = img
        .samples
        .iter()
        .find(|v| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidParameter(format!(
            "gamma correction expects samples in [0,1], found {bad}"
        )));
    }
    let samples = img.samples.iter().map(|&v| v.powf(gamma)).collect();
    Ok(MultiBandImage {
        width: img.width,
        height: img.height,
        bands: img.bands,
        samples,
    })
}

/// Affinely map each band onto `[0, 1]`. A constant band maps to all zeros.
pub fn linear_rescale(img: &MultiBandImage) -> MultiBandImage {
    let mut out = img.clone();
    let n = img.pixels();
    for m in 0..img.bands {
        let band = &mut out.samples[m * n..(m + 1) * n];
        let lo = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            let scale = 1.0 / (hi - lo);
            for v in band.iter_mut() {
                *v = (*v - lo) * scale;
            }
        } else {
            for v in band.iter_mut() {
                *v = 0.0;
            }
        }
    }
    out
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a binary PGM (P5, maxval 255) from one band of a `[0,1]` image.
/// Export-only; the MBR format is the lossless container.
pub fn save_pgm(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", field.width, field.height).into_bytes();
    bytes.extend(field.values.iter().map(|&v| quantize8(v)));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write a binary PPM (P6, maxval 255) from three bands of a `[0,1]` image.
pub fn save_ppm(img: &MultiBandImage, rgb: [usize; 3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for &m in &rgb {
        if m >= img.bands {
            return Err(Error::InvalidParameter(format!(
                "band {m} out of range for {}-band image",
                img.bands
            )));
        }
    }
    let mut bytes = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    let (r, g, b) = (img.band(rgb[0]), img.band(rgb[1]), img.band(rgb[2]));
    for i in 0..img.pixels() {
        bytes.push(quantize8(r[i]));
        bytes.push(quantize8(g[i]));
        bytes.push(quantize8(b[i]));
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_2x2_single_band() {
        let img = MultiBandImage::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let decoded = MultiBandImage::decode_mbr(&img.encode_mbr().unwrap()).unwrap();
        assert_eq!(decoded.samples, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!((decoded.width, decoded.height, decoded.bands), (2, 2, 1));
    }

    #[test]
    fn smallest_image_is_24_bytes() {
        let img = MultiBandImage::new(1, 1, 1, vec![5.0]).unwrap();
        let bytes = img.encode_mbr().unwrap();
        assert_eq!(bytes.len(), 20 + 4);
        assert_eq!(&bytes[0..4], b"MBR1");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        // deterministic pseudo-random 7x5x4 payload
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let samples: Vec<f64> = (0..7 * 5 * 4).map(|_| (next() * 100.0) as f32 as f64).collect();
        let img = MultiBandImage::new(7, 5, 4, samples).unwrap();
        let bytes = img.encode_mbr().unwrap();
        let reload = MultiBandImage::decode_mbr(&bytes).unwrap();
        assert_eq!(reload.encode_mbr().unwrap(), bytes);
        assert_eq!(reload.samples, img.samples);
    }

    #[test]
    fn truncated_payload_is_detected() {
        let img = MultiBandImage::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut bytes = img.encode_mbr().unwrap();
        bytes.truncate(20 + 8); // half the payload
        match MultiBandImage::decode_mbr(&bytes) {
            Err(Error::PayloadSize { expected, found }) => {
                assert_eq!(expected, 16);
                assert_eq!(found, 8);
            }
            other => panic!("expected PayloadSize, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_malformed_header() {
        let img = MultiBandImage::new(1, 1, 1, vec![1.0]).unwrap();
        let mut bytes = img.encode_mbr().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            MultiBandImage::decode_mbr(&bytes),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn dimension_overflow_is_detected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MBR1");
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        assert!(matches!(
            MultiBandImage::decode_mbr(&bytes),
            Err(Error::DimensionOverflow(_))
        ));
    }

    #[test]
    fn non_finite_payload_rejected() {
        let mut bytes = MultiBandImage::new(1, 1, 1, vec![1.0])
            .unwrap()
            .encode_mbr()
            .unwrap();
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            MultiBandImage::decode_mbr(&bytes),
            Err(Error::NonFiniteData(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let img = MultiBandImage::new(1, 1, 1, vec![1.0]).unwrap();
        let err = img.save_mbr("/nonexistent-dir/x.mbr").unwrap_err();
        assert_eq!(err.category(), "io");
    }

    #[test]
    fn gamma_one_is_identity() {
        let img = MultiBandImage::new(2, 1, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(gamma_correct(&img, 1.0).unwrap().samples, img.samples);
    }

    #[test]
    fn gamma_half_is_square_root() {
        let img = MultiBandImage::new(1, 1, 1, vec![0.25]).unwrap();
        assert_eq!(gamma_correct(&img, 0.5).unwrap().samples[0], 0.5);
    }

    #[test]
    fn gamma_075_matches_scalar_value() {
        let img = MultiBandImage::new(1, 1, 1, vec![0.5]).unwrap();
        let out = gamma_correct(&img, 0.75).unwrap().samples[0];
        assert!((out - 0.5946).abs() < 1e-4, "got {out}");
    }

    #[test]
    fn gamma_rejects_bad_inputs() {
        let img = MultiBandImage::new(1, 1, 1, vec![0.5]).unwrap();
        assert!(gamma_correct(&img, 0.0).is_err());
        let outside = MultiBandImage::new(1, 1, 1, vec![1.5]).unwrap();
        assert!(gamma_correct(&outside, 0.5).is_err());
    }

    #[test]
    fn rescale_maps_band_onto_unit_interval() {
        let img = MultiBandImage::new(3, 1, 1, vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(linear_rescale(&img).samples, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn rescale_is_identity_on_spanning_band() {
        let img = MultiBandImage::new(3, 1, 1, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(linear_rescale(&img).samples, img.samples);
    }

    #[test]
    fn rescale_constant_band_gives_zeros() {
        let img = MultiBandImage::new(3, 1, 1, vec![3.0, 3.0, 3.0]).unwrap();
        assert_eq!(linear_rescale(&img).samples, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn operations_preserve_shape() {
        let img = MultiBandImage::new(4, 3, 2, vec![0.5; 24]).unwrap();
        let g = gamma_correct(&img, 2.0).unwrap();
        let r = linear_rescale(&img);
        for out in [g, r] {
            assert!(out.same_shape(&img));
        }
    }
}
