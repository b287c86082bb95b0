//! Principal component analysis of multiband images.
//!
//! The forward transform separates a fused image into a structural
//! component (first PC, largest variance) and chromatic components
//! (remaining PCs). Eigendecomposition of the M x M band covariance uses
//! cyclic Jacobi rotations; band counts stay small (M <= 16) so no
//! external linear algebra is needed.

use crate::error::{Error, Result};
use crate::raster::MultiBandImage;

/// Per-band mean plus orthonormal eigenvector basis of the band
/// covariance, variance-descending.
///
/// `basis` is an M x M row-major matrix whose column `k` is the unit
/// eigenvector generating component `k`; `basis[m * bands + k]` is the
/// weight of input band `m` in component `k`. Eigenvector orientation is
/// fixed by making the entry of largest absolute value positive.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub basis: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PcaBasis {
    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn entry(&self, band: usize, component: usize) -> f64 {
        self.basis[band * self.bands() + component]
    }

    /// Largest deviation of `basis^T basis` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.bands();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                let dot: f64 = (0..m).map(|r| self.entry(r, a) * self.entry(r, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Fit a PCA basis to the band covariance of `img` (population divisor N).
pub fn fit_pca(img: &MultiBandImage) -> Result<PcaBasis> {
    let m = img.bands;
    let n = img.pixels();
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "PCA needs at least 2 bands, got {m}"
        )));
    }
    if n < m {
        return Err(Error::InvalidParameter(format!(
            "PCA needs at least {m} pixels, got {n}"
        )));
    }

    let mut mean = vec![0.0f64; m];
    for (b, mu) in mean.iter_mut().enumerate() {
        *mu = img.band(b).iter().sum::<f64>() / n as f64;
    }

    let mut cov = vec![0.0f64; m * m];
    for a in 0..m {
        let ba = img.band(a);
        for b in a..m {
            let bb = img.band(b);
            let mut acc = 0.0;
            for i in 0..n {
                acc += (ba[i] - mean[a]) * (bb[i] - mean[b]);
            }
            let c = acc / n as f64;
            cov[a * m + b] = c;
            cov[b * m + a] = c;
        }
    }

    let (mut eigvals, mut vectors) = jacobi_eigen_cyclic(&cov, m);

    // Order components by variance descending. Exact eigenvalue ties fall
    // back to the band index of the dominant eigenvector entry so the
    // output is reproducible.
    let dominant: Vec<usize> = (0..m).map(|k| dominant_entry(&vectors, m, k)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eigvals[b]
            .partial_cmp(&eigvals[a])
            .unwrap()
            .then(dominant[a].cmp(&dominant[b]))
    });

    let mut basis = vec![0.0f64; m * m];
    let mut variances = vec![0.0f64; m];
    for (dst, &src) in order.iter().enumerate() {
        variances[dst] = eigvals[src].max(0.0);
        let flip = vectors[dominant[src] * m + src] < 0.0;
        for row in 0..m {
            let v = vectors[row * m + src];
            basis[row * m + dst] = if flip { -v } else { v };
        }
    }
    eigvals.clear();
    vectors.clear();

    Ok(PcaBasis {
        mean,
        basis,
        variances,
    })
}

fn dominant_entry(vectors: &[f64], m: usize, col: usize) -> usize {
    let mut best = 0;
    let mut best_abs = -1.0;
    for row in 0..m {
        let a = vectors[row * m + col].abs();
        if a > best_abs {
            best_abs = a;
            best = row;
        }
    }
    best
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
/// unordered eigenvalues and the matrix whose columns are eigenvectors.
fn jacobi_eigen_cyclic(sym: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = sym.to_vec();
    let mut v = vec![0.0f64; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let scale: f64 = sym.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let tol = scale * 1e-15;

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[p * m + q] * a[p * m + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for r in 0..m {
                    let arp = a[r * m + p];
                    let arq = a[r * m + q];
                    a[r * m + p] = c * arp - s * arq;
                    a[r * m + q] = s * arp + c * arq;
                }
                for col in 0..m {
                    let apr = a[p * m + col];
                    let aqr = a[q * m + col];
                    a[p * m + col] = c * apr - s * aqr;
                    a[q * m + col] = s * apr + c * aqr;
                }
                for r in 0..m {
                    let vrp = v[r * m + p];
                    let vrq = v[r * m + q];
                    v[r * m + p] = c * vrp - s * vrq;
                    v[r * m + q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let eigvals = (0..m).map(|i| a[i * m + i]).collect();
    (eigvals, v)
}

/// Project an image onto the basis: component `k` at pixel `i` is
/// `sum_m basis[m][k] * (img[m][i] - mean[m])`. Band 0 of the output is
/// the structural component, the rest are chromatic.
pub fn forward_pca(img: &MultiBandImage, basis: &PcaBasis) -> Result<MultiBandImage> {
    let m = basis.bands();
    if img.bands != m {
        return Err(Error::DimensionMismatch(format!(
            "image has {} bands, basis expects {m}",
            img.bands
        )));
    }
    let n = img.pixels();
    let mut out = MultiBandImage::zeros(img.width, img.height, m);
    let mut centered = vec![0.0f64; m];
    for i in 0..n {
        for b in 0..m {
            centered[b] = img.samples[b * n + i] - basis.mean[b];
        }
        for k in 0..m {
            let mut acc = 0.0;
            for (b, &cb) in centered.iter().enumerate() {
                acc += basis.basis[b * m + k] * cb;
            }
            out.samples[k * n + i] = acc;
        }
    }
    Ok(out)
}

/// Invert the projection: band `m` at pixel `i` is
/// `mean[m] + sum_k basis[m][k] * components[k][i]`.
pub fn inverse_pca(components: &MultiBandImage, basis: &PcaBasis) -> Result<MultiBandImage> {
    let m = basis.bands();
    if components.bands != m {
        return Err(Error::DimensionMismatch(format!(
            "component stack has {} bands, basis expects {m}",
            components.bands
        )));
    }
    let n = components.pixels();
    let mut out = MultiBandImage::zeros(components.width, components.height, m);
    for i in 0..n {
        for b in 0..m {
            let mut acc = basis.mean[b];
            for k in 0..m {
                acc += basis.basis[b * m + k] * components.samples[k * n + i];
            }
            out.samples[b * n + i] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_from_bands(width: usize, height: usize, bands: Vec<Vec<f64>>) -> MultiBandImage {
        let fields: Vec<crate::raster::Field> = bands
            .into_iter()
            .map(|v| crate::raster::Field::new(width, height, v).unwrap())
            .collect();
        MultiBandImage::from_fields(&fields).unwrap()
    }

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
        let base: Vec<f64> = (0..w * h).map(|_| rng()).collect();
        let bands = (0..m)
            .map(|k| {
                base.iter()
                    .map(|&b| 0.5 * b * (k + 1) as f64 + rng() * (0.3 + 0.2 * k as f64))
                    .collect()
            })
            .collect();
        image_from_bands(w, h, bands)
    }

    /// Independent classical Jacobi (largest off-diagonal pivot), used as
    /// an oracle against the cyclic implementation inside the crate.
    fn jacobi_oracle(sym: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|r| (0..m).map(|c| sym[r * m + c]).collect())
            .collect();
        let mut v = vec![vec![0.0f64; m]; m];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..10_000 {
            let mut p = 0;
            let mut q = 1;
            let mut max = 0.0;
            for i in 0..m {
                for j in (i + 1)..m {
                    if a[i][j].abs() > max {
                        max = a[i][j].abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if max < 1e-14 {
                break;
            }
            let theta = if (a[p][p] - a[q][q]).abs() < 1e-300 {
                std::f64::consts::FRAC_PI_4
            } else {
                0.5 * (2.0 * a[p][q] / (a[p][p] - a[q][q])).atan()
            };
            let (s, c) = theta.sin_cos();
            let mut na = a.clone();
            for i in 0..m {
                if i != p && i != q {
                    na[i][p] = c * a[i][p] + s * a[i][q];
                    na[p][i] = na[i][p];
                    na[i][q] = -s * a[i][p] + c * a[i][q];
                    na[q][i] = na[i][q];
                }
            }
            na[p][p] = c * c * a[p][p] + 2.0 * s * c * a[p][q] + s * s * a[q][q];
            na[q][q] = s * s * a[p][p] - 2.0 * s * c * a[p][q] + c * c * a[q][q];
            na[p][q] = 0.0;
            na[q][p] = 0.0;
            a = na;
            for row in v.iter_mut() {
                let vip = row[p];
                let viq = row[q];
                row[p] = c * vip + s * viq;
                row[q] = -s * vip + c * viq;
            }
        }
        let vals = (0..m).map(|i| a[i][i]).collect();
        let flat = (0..m * m).map(|i| v[i / m][i % m]).collect();
        (vals, flat)
    }

    #[test]
    fn identical_bands_give_rank_one_covariance() {
        let band = vec![1.0, 2.0, 3.0, 4.0, 2.5, 0.5];
        let img = image_from_bands(3, 2, vec![band.clone(), band.clone()]);
        let basis = fit_pca(&img).unwrap();
        let sigma2 = {
            let mean = band.iter().sum::<f64>() / band.len() as f64;
            band.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / band.len() as f64
        };
        assert!((basis.variances[0] - 2.0 * sigma2).abs() < 1e-12);
        assert!(basis.variances[1].abs() < 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((basis.entry(0, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((basis.entry(1, 0) - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_bands_give_axis_basis() {
        // band 0 has variance 4, band 1 variance 1, exactly uncorrelated
        let b0 = vec![2.0, -2.0, 2.0, -2.0];
        let b1 = vec![1.0, 1.0, -1.0, -1.0];
        let img = image_from_bands(2, 2, vec![b0, b1]);
        let basis = fit_pca(&img).unwrap();
        assert!((basis.variances[0] - 4.0).abs() < 1e-12);
        assert!((basis.variances[1] - 1.0).abs() < 1e-12);
        assert!((basis.entry(0, 0) - 1.0).abs() < 1e-12);
        assert!(basis.entry(1, 0).abs() < 1e-12);
        assert!((basis.entry(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_jacobi_oracle() {
        let img = random_image(8, 8, 3, 7);
        let basis = fit_pca(&img).unwrap();

        let m = 3;
        let n = img.pixels();
        let mean: Vec<f64> = (0..m)
            .map(|b| img.band(b).iter().sum::<f64>() / n as f64)
            .collect();
        let mut cov = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                cov[a * m + b] = (0..n)
                    .map(|i| (img.band(a)[i] - mean[a]) * (img.band(b)[i] - mean[b]))
                    .sum::<f64>()
                    / n as f64;
            }
        }
        let (mut vals, vecs) = jacobi_oracle(&cov, m);
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for k in 0..m {
            assert!(
                (vals[k] - basis.variances[k]).abs() <= 1e-8 * vals[0].abs().max(1.0),
                "eigenvalue {k}: oracle {} vs {}",
                vals[k],
                basis.variances[k]
            );
        }
        // vectors agree up to the sign convention
        let (raw_vals, _) = jacobi_oracle(&cov, m);
        for k in 0..m {
            // find the oracle column matching this variance
            let col = (0..m)
                .min_by(|&a, &b| {
                    let da = (raw_vals[a] - basis.variances[k]).abs();
                    let db = (raw_vals[b] - basis.variances[k]).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            let mut oracle_vec: Vec<f64> = (0..m).map(|r| vecs[r * m + col]).collect();
            let dom = oracle_vec
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                .unwrap()
                .0;
            if oracle_vec[dom] < 0.0 {
                for v in oracle_vec.iter_mut() {
                    *v = -*v;
                }
            }
            for r in 0..m {
                assert!(
                    (oracle_vec[r] - basis.entry(r, k)).abs() < 1e-8,
                    "vector {k} row {r}"
                );
            }
        }
    }

    #[test]
    fn constant_image_projects_to_zero() {
        let img = image_from_bands(2, 2, vec![vec![3.0; 4], vec![-1.0; 4]]);
        let basis = PcaBasis {
            mean: vec![3.0, -1.0],
            basis: vec![1.0, 0.0, 0.0, 1.0],
            variances: vec![0.0, 0.0],
        };
        let comps = forward_pca(&img, &basis).unwrap();
        assert!(comps.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_basis_zero_mean_is_identity() {
        let img = random_image(4, 4, 2, 3);
        let basis = PcaBasis {
            mean: vec![0.0, 0.0],
            basis: vec![1.0, 0.0, 0.0, 1.0],
            variances: vec![1.0, 1.0],
        };
        let comps = forward_pca(&img, &basis).unwrap();
        assert_eq!(comps.samples, img.samples);
    }

    #[test]
    fn forward_matches_per_pixel_matvec_oracle() {
        let img = random_image(4, 4, 4, 11);
        let basis = fit_pca(&img).unwrap();
        let comps = forward_pca(&img, &basis).unwrap();
        let m = 4;
        let n = img.pixels();
        for i in 0..n {
            for k in 0..m {
                let expect: f64 = (0..m)
                    .map(|b| basis.entry(b, k) * (img.samples[b * n + i] - basis.mean[b]))
                    .sum();
                assert!((comps.samples[k * n + i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_reconstructs_input() {
        let img = random_image(16, 16, 4, 5);
        let basis = fit_pca(&img).unwrap();
        assert!(basis.orthonormality_defect() < 1e-10);
        let comps = forward_pca(&img, &basis).unwrap();
        let back = inverse_pca(&comps, &basis).unwrap();
        let scale: f64 = img.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in back.samples.iter().zip(&img.samples) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn zero_components_restore_the_mean() {
        let img = random_image(4, 4, 3, 9);
        let basis = fit_pca(&img).unwrap();
        let zeros = MultiBandImage::zeros(4, 4, 3);
        let out = inverse_pca(&zeros, &basis).unwrap();
        let n = out.pixels();
        for b in 0..3 {
            for i in 0..n {
                assert!((out.samples[b * n + i] - basis.mean[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropping_a_component_loses_exactly_its_energy() {
        let img = random_image(16, 16, 4, 21);
        let basis = fit_pca(&img).unwrap();
        let mut comps = forward_pca(&img, &basis).unwrap();
        let k = 2;
        comps.band_mut(k).iter_mut().for_each(|v| *v = 0.0);
        let back = inverse_pca(&comps, &basis).unwrap();

        // Oracle: the projection residual is the dropped component mapped
        // back through its eigenvector, so the total squared error equals
        // the component's energy N * variances[k].
        let n = img.pixels();
        let err: f64 = back
            .samples
            .iter()
            .zip(&img.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let expect = basis.variances[k] * n as f64;
        assert!(
            (err - expect).abs() <= 1e-8 * expect.max(1e-12),
            "residual {err} vs component energy {expect}"
        );
        let rms_per_band = (err / (n as f64 * 4.0)).sqrt();
        assert!((rms_per_band - (basis.variances[k] / 4.0).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn components_are_decorrelated_and_variance_is_conserved() {
        let img = random_image(16, 16, 4, 31);
        let basis = fit_pca(&img).unwrap();
        let comps = forward_pca(&img, &basis).unwrap();
        let n = img.pixels() as f64;

        let mut total_in = 0.0;
        for b in 0..4 {
            let band = img.band(b);
            let mu = band.iter().sum::<f64>() / n;
            total_in += band.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        }
        let total_out: f64 = basis.variances.iter().sum();
        assert!((total_in - total_out).abs() <= 1e-8 * total_in);

        for a in 0..4 {
            let ca = comps.band(a);
            let mu_a = ca.iter().sum::<f64>() / n;
            let var_a = ca.iter().map(|v| (v - mu_a) * (v - mu_a)).sum::<f64>() / n;
            assert!(
                (var_a - basis.variances[a]).abs() <= 1e-8 * basis.variances[0].max(1e-12),
                "component {a} variance"
            );
            for b in (a + 1)..4 {
                let cb = comps.band(b);
                let mu_b = cb.iter().sum::<f64>() / n;
                let cov = ca
                    .iter()
                    .zip(cb)
                    .map(|(x, y)| (x - mu_a) * (y - mu_b))
                    .sum::<f64>()
                    / n;
                assert!(cov.abs() <= 1e-8 * basis.variances[0]);
            }
        }
    }

    #[test]
    fn band_count_mismatch_is_rejected() {
        let img = random_image(4, 4, 3, 1);
        let basis = fit_pca(&img).unwrap();
        let other = random_image(4, 4, 2, 2);
        assert!(forward_pca(&other, &basis).is_err());
        assert!(inverse_pca(&other, &basis).is_err());
    }

    #[test]
    fn single_band_is_rejected() {
        let img = image_from_bands(2, 2, vec![vec![1.0, 2.0, 3.0, 4.0]]);
        assert!(fit_pca(&img).is_err());
    }
}
