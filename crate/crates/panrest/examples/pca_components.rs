//! Decompose a multiband image into principal components and write each
//! one as MBR plus an 8-bit PGM visualization.
//!
//! ```bash
//! cargo run --release --example pca_components
//! ```

use panrest::pca::{fit_pca, forward_pca, inverse_pca};
use panrest::raster::{gamma_correct, linear_rescale, save_pgm};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let img = synthetic_scene(192, 192, 4, 5);
    let basis = fit_pca(&img)?;
    let components = forward_pca(&img, &basis)?;

    let total: f64 = basis.variances.iter().sum();
    println!("component  variance     share");
    for (k, &v) in basis.variances.iter().enumerate() {
        println!("pc{}        {:.6e}  {:5.1}%", k + 1, v, 100.0 * v / total);
    }
    println!(
        "\northonormality defect of the basis: {:.2e}",
        basis.orthonormality_defect()
    );

    let dir = std::env::temp_dir().join("panrest-pca");
    std::fs::create_dir_all(&dir).map_err(|e| panrest::Error::io(&dir, e))?;
    for k in 0..components.bands {
        let pc = components.band_field(k);
        pc.save_mbr(dir.join(format!("pc{}.mbr", k + 1)))?;
        let display = linear_rescale(&pc.to_image());
        // structural component shown gamma-corrected
        let display = if k == 0 {
            gamma_correct(&display, 0.75)?
        } else {
            display
        };
        save_pgm(&display.band_field(0), dir.join(format!("pc{}.pgm", k + 1)))?;
    }
    println!("wrote pc1..pc4 (.mbr and .pgm) to {}", dir.display());

    let back = inverse_pca(&components, &basis)?;
    let worst = back
        .samples
        .iter()
        .zip(&img.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("round-trip worst absolute error: {worst:.2e}");
    Ok(())
}
