//! Full-reference and no-reference quality indices on a small simulated
//! fusion problem.
//!
//! ```bash
//! cargo run --release --example quality_metrics
//! ```

use panrest::metrics::{evaluate_full_reference, evaluate_no_reference, rmse, sam, uiqi};
use panrest::pipeline::{baseline_pansharpen, simulate_dataset, SimulationSpec};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let spec = SimulationSpec {
        ref_factor: 1,
        ref_mtf: 1.0,
        ..SimulationSpec::default()
    };
    let scene = synthetic_scene(128, 128, 4, 23);
    let data = simulate_dataset(&scene, &spec)?;
    let fused = baseline_pansharpen(&data.ms, &data.pan, spec.ms_factor)?;

    println!("full-reference metrics of the fused product:");
    let report = evaluate_full_reference(&data.reference, &fused, spec.ms_factor as f64)?;
    println!("{report}");

    println!("\nidentity sanity: metrics of the reference against itself:");
    let ident = evaluate_full_reference(&data.reference, &data.reference, 4.0)?;
    print!("{}", ident.key_values());

    println!("\nno-reference metrics of the fused product:");
    let nr = evaluate_no_reference(&fused, &data.ms, &data.pan, spec.ms_factor)?;
    println!("{nr}");

    // the constituent indices are available on their own
    println!("\nconstituents:");
    println!("  rmse  = {:.6}", rmse(&data.reference, &fused)?);
    println!("  sam   = {:.6} degrees", sam(&data.reference, &fused)?);
    println!(
        "  uiqi(band 0 of reference vs fused, 8 px sliding blocks) = {:.6}",
        uiqi(&data.reference.band_field(0), &fused.band_field(0), 8)?
    );
    Ok(())
}
