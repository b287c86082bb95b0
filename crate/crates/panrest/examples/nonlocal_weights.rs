//! Inspect the nonlocal weight graph: how the PAN geometry shapes one
//! pixel's weight distribution on a flat region versus across an edge.
//!
//! ```bash
//! cargo run --release --example nonlocal_weights
//! ```

use panrest::nlweights::{compute_weights, weight_row, WeightParams};
use panrest::raster::Field;

fn main() -> panrest::Result<()> {
    // left half dark, right half bright, mild gradient on top
    let w = 48;
    let values: Vec<f64> = (0..w * w)
        .map(|i| {
            let x = i % w;
            let y = i / w;
            let step = if x < w / 2 { 0.2 } else { 0.8 };
            step + 0.001 * y as f64
        })
        .collect();
    let pan = Field::new(w, w, values)?;

    let params = WeightParams {
        nu_r: 5,
        ..WeightParams::default()
    };
    let graph = compute_weights(&pan, &params)?;
    println!(
        "graph {}x{} with {} slots per pixel",
        graph.width,
        graph.height,
        graph.slots()
    );

    let show = |label: &str, x: usize, y: usize| -> panrest::Result<()> {
        let row = weight_row(&pan, &params, x, y)?;
        let mass_left: f64 = row
            .iter()
            .filter(|(_, dx, _)| (x as isize + dx) < (w / 2) as isize)
            .map(|(_, _, wgt)| wgt)
            .sum();
        println!(
            "\npixel ({x},{y}) [{label}]: {} in-domain neighbors, \
             weight mass left of the edge {:.4}",
            row.len(),
            mass_left
        );
        // center row of the window as a profile
        print!("  dy=0 profile:");
        for (dy, _, wgt) in row.iter().filter(|(dy, _, _)| *dy == 0) {
            let _ = dy;
            print!(" {wgt:.4}");
        }
        println!();
        Ok(())
    };

    show("flat region", 12, 24)?;
    show("one pixel left of the edge", w / 2 - 1, 24)?;
    show("one pixel right of the edge", w / 2, 24)?;

    // row sums stay one everywhere
    let worst = (0..graph.pixels())
        .map(|i| (graph.row_sum(i) - 1.0).abs())
        .fold(0.0f64, f64::max);
    println!("\nworst row-sum defect over all pixels: {worst:.2e}");
    Ok(())
}
