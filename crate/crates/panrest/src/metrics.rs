//! Quality indices for pansharpening assessment.
//!
//! Full-reference: RMSE, ERGAS, SAM and the quaternion index Q4 (the
//! 4-band instance of Q2^n). No-reference: the QNR index with its
//! spectral (D_lambda) and spatial (D_s) distortion components, built
//! from the universal image quality index on sliding blocks.

use std::fmt;

use crate::error::{Error, Result};
use crate::pipeline::mtf_downsample;
use crate::raster::{Field, MultiBandImage, PanImage};

/// Named metric values plus the parameters they were computed with.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub entries: Vec<(&'static str, f64)>,
    pub ratio: f64,
    pub block: usize,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }

    /// Machine-readable `name=value` lines.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for (name, value) in &self.entries {
            out.push_str(&format!("{name}={value:.10}\n"));
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .entries
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0);
        writeln!(f, "{:<width$}  value", "metric", width = width.max(6))?;
        for (name, value) in &self.entries {
            writeln!(f, "{name:<width$}  {value:>14.8}", width = width.max(6))?;
        }
        write!(
            f,
            "(ratio {}, block {})",
            self.ratio, self.block
        )
    }
}

fn check_same_shape(a: &MultiBandImage, b: &MultiBandImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.bands, b.width, b.height, b.bands
        )));
    }
    Ok(())
}

/// Root mean square error over all bands and pixels.
pub fn rmse(reference: &MultiBandImage, test: &MultiBandImage) -> Result<f64> {
    check_same_shape(reference, test)?;
    let n = reference.samples.len() as f64;
    let sum: f64 = reference
        .samples
        .iter()
        .zip(&test.samples)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / n).sqrt())
}

fn band_rmse(reference: &MultiBandImage, test: &MultiBandImage, m: usize) -> f64 {
    let (a, b) = (reference.band(m), test.band(m));
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / a.len() as f64).sqrt()
}

/// Relative dimensionless global error,
/// `100 / ratio * sqrt(mean_m (RMSE_m / mean_m)^2)`.
pub fn ergas(reference: &MultiBandImage, test: &MultiBandImage, ratio: f64) -> Result<f64> {
    check_same_shape(reference, test)?;
    if !(ratio > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "resolution ratio must be positive, got {ratio}"
        )));
    }
    let mut acc = 0.0;
    for m in 0..reference.bands {
        let mu: f64 = reference.band(m).iter().sum::<f64>() / reference.pixels() as f64;
        if mu == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "band {m} of the reference has zero mean"
            )));
        }
        let r = band_rmse(reference, test, m);
        acc += (r / mu) * (r / mu);
    }
    Ok(100.0 / ratio * (acc / reference.bands as f64).sqrt())
}

/// Mean spectral angle in degrees. Pixels whose spectral vector is zero
/// in either image are skipped; an error is raised if every pixel is.
pub fn sam(reference: &MultiBandImage, test: &MultiBandImage) -> Result<f64> {
    check_same_shape(reference, test)?;
    let n = reference.pixels();
    let m = reference.bands;
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..n {
        let mut dot = 0.0;
        let mut rr = 0.0;
        let mut tt = 0.0;
        for b in 0..m {
            let r = reference.samples[b * n + i];
            let t = test.samples[b * n + i];
            dot += r * t;
            rr += r * r;
            tt += t * t;
        }
        if rr == 0.0 || tt == 0.0 {
            continue;
        }
        let cos = (dot / (rr * tt).sqrt()).clamp(-1.0, 1.0);
        total += cos.acos();
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::DegenerateInput(
            "every pixel has a zero spectral vector".into(),
        ));
    }
    Ok((total / counted as f64).to_degrees())
}

/// Block origins along one axis: the stride grid plus the final fitting
/// position, mirroring the sliding-patch convention of the histogram
/// matcher.
fn block_origins(len: usize, block: usize, stride: usize) -> Vec<usize> {
    let last = len - block;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

struct BlockStats {
    mean_a: f64,
    mean_b: f64,
    var_a: f64,
    var_b: f64,
    cov: f64,
}

fn block_stats(a: &Field, b: &Field, x0: usize, y0: usize, block: usize) -> BlockStats {
    let n = (block * block) as f64;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for y in y0..y0 + block {
        for x in x0..x0 + block {
            sum_a += a.values[y * a.width + x];
            sum_b += b.values[y * b.width + x];
        }
    }
    let mean_a = sum_a / n;
    let mean_b = sum_b / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for y in y0..y0 + block {
        for x in x0..x0 + block {
            let da = a.values[y * a.width + x] - mean_a;
            let db = b.values[y * b.width + x] - mean_b;
            var_a += da * da;
            var_b += db * db;
            cov += da * db;
        }
    }
    BlockStats {
        mean_a,
        mean_b,
        var_a: var_a / n,
        var_b: var_b / n,
        cov: cov / n,
    }
}

/// Universal image quality index averaged over blocks on a stride grid.
/// Blocks whose denominator falls below `1e-12` are skipped and counted;
/// an error is raised when every block degenerates.
pub fn uiqi_blocked(a: &Field, b: &Field, block: usize, stride: usize) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(
            "uiqi operands differ in shape".into(),
        ));
    }
    if block < 2 {
        return Err(Error::InvalidParameter("block must be at least 2".into()));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    if a.width < block || a.height < block {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} smaller than the {block} px block",
            a.width, a.height
        )));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for &y0 in &block_origins(a.height, block, stride) {
        for &x0 in &block_origins(a.width, block, stride) {
            let s = block_stats(a, b, x0, y0, block);
            let den = (s.var_a + s.var_b) * (s.mean_a * s.mean_a + s.mean_b * s.mean_b);
            if den.abs() < 1e-12 {
                continue;
            }
            let num = 4.0 * s.cov * (s.mean_a * s.mean_b);
            total += num / den;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateInput(
            "every block has a degenerate denominator".into(),
        ));
    }
    Ok(total / used as f64)
}

/// Universal image quality index over sliding blocks (stride 1).
pub fn uiqi(a: &Field, b: &Field, block: usize) -> Result<f64> {
    uiqi_blocked(a, b, block, 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Quat {
    r: f64,
    i: f64,
    j: f64,
    k: f64,
}

impl Quat {
    const ZERO: Quat = Quat {
        r: 0.0,
        i: 0.0,
        j: 0.0,
        k: 0.0,
    };

    fn add(self, o: Quat) -> Quat {
        Quat {
            r: self.r + o.r,
            i: self.i + o.i,
            j: self.j + o.j,
            k: self.k + o.k,
        }
    }

    fn sub(self, o: Quat) -> Quat {
        Quat {
            r: self.r - o.r,
            i: self.i - o.i,
            j: self.j - o.j,
            k: self.k - o.k,
        }
    }

    fn scale(self, s: f64) -> Quat {
        Quat {
            r: self.r * s,
            i: self.i * s,
            j: self.j * s,
            k: self.k * s,
        }
    }

    fn conj(self) -> Quat {
        Quat {
            r: self.r,
            i: -self.i,
            j: -self.j,
            k: -self.k,
        }
    }

    fn mul(self, o: Quat) -> Quat {
        Quat {
            r: self.r * o.r - self.i * o.i - self.j * o.j - self.k * o.k,
            i: self.r * o.i + self.i * o.r + self.j * o.k - self.k * o.j,
            j: self.r * o.j - self.i * o.k + self.j * o.r + self.k * o.i,
            k: self.r * o.k + self.i * o.j - self.j * o.i + self.k * o.r,
        }
    }

    fn norm2(self) -> f64 {
        self.r * self.r + self.i * self.i + self.j * self.j + self.k * self.k
    }

    fn modulus(self) -> f64 {
        // pure-real quaternions take the exact path so identical inputs
        // yield exactly Q4 = 1
        if self.i == 0.0 && self.j == 0.0 && self.k == 0.0 {
            self.r.abs()
        } else {
            self.norm2().sqrt()
        }
    }
}

fn q4_block(reference: &MultiBandImage, test: &MultiBandImage, x0: usize, y0: usize, block: usize) -> Option<f64> {
    let n = reference.pixels();
    let w = reference.width;
    let count = (block * block) as f64;

    let quat_at = |img: &MultiBandImage, idx: usize| Quat {
        r: img.samples[idx],
        i: img.samples[n + idx],
        j: img.samples[2 * n + idx],
        k: img.samples[3 * n + idx],
    };

    let mut sum_r = Quat::ZERO;
    let mut sum_t = Quat::ZERO;
    for y in y0..y0 + block {
        for x in x0..x0 + block {
            let idx = y * w + x;
            sum_r = sum_r.add(quat_at(reference, idx));
            sum_t = sum_t.add(quat_at(test, idx));
        }
    }
    let mean_r = sum_r.scale(1.0 / count);
    let mean_t = sum_t.scale(1.0 / count);

    let mut var_r = 0.0;
    let mut var_t = 0.0;
    let mut cov = Quat::ZERO;
    for y in y0..y0 + block {
        for x in x0..x0 + block {
            let idx = y * w + x;
            let zr = quat_at(reference, idx).sub(mean_r);
            let zt = quat_at(test, idx).sub(mean_t);
            var_r += zr.norm2();
            var_t += zt.norm2();
            cov = cov.add(zr.mul(zt.conj()));
        }
    }
    var_r /= count;
    var_t /= count;
    let cov_mod = cov.scale(1.0 / count).modulus();

    let m_r = mean_r.modulus();
    let m_t = mean_t.modulus();
    let den = (var_r + var_t) * (m_r * m_r + m_t * m_t);
    if den.abs() < 1e-12 {
        return None;
    }
    Some(4.0 * cov_mod * (m_r * m_t) / den)
}

/// Quaternion quality index Q4 averaged over non-overlapping blocks
/// (stride = block, final block snapped to fit). Defined for exactly
/// four bands.
pub fn q2n(reference: &MultiBandImage, test: &MultiBandImage, block: usize) -> Result<f64> {
    check_same_shape(reference, test)?;
    if reference.bands != 4 {
        return Err(Error::UnsupportedBandCount {
            expected: 4,
            actual: reference.bands,
        });
    }
    if block < 2 {
        return Err(Error::InvalidParameter("block must be at least 2".into()));
    }
    if reference.width < block || reference.height < block {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} smaller than the {block} px block",
            reference.width, reference.height
        )));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for &y0 in &block_origins(reference.height, block, block) {
        for &x0 in &block_origins(reference.width, block, block) {
            if let Some(q) = q4_block(reference, test, x0, y0, block) {
                total += q;
                used += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::DegenerateInput(
            "every block has a degenerate denominator".into(),
        ));
    }
    Ok(total / used as f64)
}

/// No-reference distortions and their combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnrReport {
    pub d_lambda: f64,
    pub d_s: f64,
    pub qnr: f64,
}

/// Quality with no reference: spectral distortion `D_lambda` compares
/// inter-band UIQI between the fused product and the MS original,
/// spatial distortion `D_s` compares each band's UIQI against PAN at
/// both scales, and `QNR = (1 - D_lambda) * (1 - D_s)`.
///
/// `pan_low` is PAN brought to the MS grid with the 0.15-MTF Gaussian;
/// at ratio 1 the grids coincide and PAN is used as is.
pub fn qnr(
    fused: &MultiBandImage,
    ms: &MultiBandImage,
    pan: &PanImage,
    ratio: usize,
    block: usize,
) -> Result<QnrReport> {
    if ratio == 0 {
        return Err(Error::InvalidParameter("ratio must be at least 1".into()));
    }
    if fused.bands != ms.bands {
        return Err(Error::DimensionMismatch(format!(
            "fused has {} bands, MS has {}",
            fused.bands, ms.bands
        )));
    }
    if fused.width != pan.width || fused.height != pan.height {
        return Err(Error::DimensionMismatch(
            "fused and PAN must share a grid".into(),
        ));
    }
    if ms.width * ratio != fused.width || ms.height * ratio != fused.height {
        return Err(Error::DimensionMismatch(format!(
            "MS {}x{} is not fused/{ratio}",
            ms.width, ms.height
        )));
    }
    let m = fused.bands;
    if m < 2 {
        return Err(Error::InvalidParameter(
            "QNR needs at least 2 bands".into(),
        ));
    }

    let fused_bands: Vec<Field> = (0..m).map(|b| fused.band_field(b)).collect();
    let ms_bands: Vec<Field> = (0..m).map(|b| ms.band_field(b)).collect();

    let mut d_lambda = 0.0;
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            let q_f = uiqi_blocked(&fused_bands[a], &fused_bands[b], block, block)?;
            let q_m = uiqi_blocked(&ms_bands[a], &ms_bands[b], block, block)?;
            d_lambda += (q_f - q_m).abs();
        }
    }
    d_lambda /= (m * (m - 1)) as f64;

    let pan_low = if ratio == 1 {
        pan.clone()
    } else {
        mtf_downsample(&pan.to_image(), ratio, 0.15)?.band_field(0)
    };
    let mut d_s = 0.0;
    for b in 0..m {
        let q_high = uiqi_blocked(&fused_bands[b], pan, block, block)?;
        let q_low = uiqi_blocked(&ms_bands[b], &pan_low, block, block)?;
        d_s += (q_high - q_low).abs();
    }
    d_s /= m as f64;

    Ok(QnrReport {
        d_lambda,
        d_s,
        qnr: (1.0 - d_lambda) * (1.0 - d_s),
    })
}

/// RMSE, ERGAS, SAM and Q4 bundled with the standard configuration
/// (block 32 for the quaternion index).
pub fn evaluate_full_reference(
    reference: &MultiBandImage,
    test: &MultiBandImage,
    ratio: f64,
) -> Result<MetricReport> {
    let block = 32;
    let entries = vec![
        ("RMSE", rmse(reference, test)?),
        ("ERGAS", ergas(reference, test, ratio)?),
        ("SAM", sam(reference, test)?),
        ("Q4", q2n(reference, test, block)?),
    ];
    Ok(MetricReport {
        entries,
        ratio,
        block,
    })
}

/// D_lambda, D_s and QNR bundled with the standard configuration.
pub fn evaluate_no_reference(
    fused: &MultiBandImage,
    ms: &MultiBandImage,
    pan: &PanImage,
    ratio: usize,
) -> Result<MetricReport> {
    let block = 32;
    let report = qnr(fused, ms, pan, ratio, block)?;
    Ok(MetricReport {
        entries: vec![
            ("D_lambda", report.d_lambda),
            ("D_s", report.d_s),
            ("QNR", report.qnr),
        ],
        ratio: ratio as f64,
        block,
    })
}
