//! Moment-based histogram matching, globally and over sliding windows.
//! Local matching adapts to illumination that varies across the image,
//! which a single global affine map cannot track.
//!
//! ```bash
//! cargo run --release --example histogram_match
//! ```

use panrest::histmatch::{match_global, match_local, MatchParams};
use panrest::raster::Field;
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let scene = synthetic_scene(96, 96, 4, 13);
    let target = scene.band_field(0);

    // a PAN-like signal with a spatially varying gain and offset
    let w = target.width;
    let pan_values: Vec<f64> = target
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = (i % w) as f64 / w as f64;
            (1.0 + 0.8 * x) * v + 0.3 * x
        })
        .collect();
    let pan = Field::new(w, target.height, pan_values)?;

    let global = match_global(&pan, &target)?;
    println!(
        "global: mean {:.5} -> {:.5} (target {:.5}), sd {:.5} -> {:.5} (target {:.5})",
        pan.mean(),
        global.mean(),
        target.mean(),
        pan.std_dev(),
        global.std_dev(),
        target.std_dev()
    );

    let rms = |a: &Field, b: &Field| -> f64 {
        (a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.len() as f64)
            .sqrt()
    };
    println!("rms(global matched, target) = {:.5}", rms(&global, &target));

    for window in [31, 15, 7] {
        let local = match_local(
            &pan,
            &target,
            &MatchParams { window, stride: 1 },
        )?;
        println!(
            "local window {window:>2}: rms(matched, target) = {:.5}",
            rms(&local, &target)
        );
    }
    println!(
        "\nsmaller windows track the varying illumination more closely, at \
         the price of copying more of the target's own content"
    );
    Ok(())
}
