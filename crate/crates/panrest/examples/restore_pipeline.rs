//! End-to-end demonstration: simulate a reduced-resolution dataset from a
//! synthetic scene, fuse it with the component-substitution baseline,
//! restore the fused product, and compare quality before and after.
//!
//! ```bash
//! cargo run --release --example restore_pipeline
//! ```

use std::time::Instant;

use panrest::metrics::{evaluate_full_reference, evaluate_no_reference};
use panrest::pipeline::{baseline_pansharpen, restore, RestoreParams, SimulationSpec};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let spec = SimulationSpec::default();
    let scale = spec.ref_factor * spec.ms_factor;
    let size = 64 * scale; // high-res grid divisible by both factors

    println!("generating a {size}x{size}x4 synthetic scene");
    let scene = synthetic_scene(size, size, 4, 42);

    let t = Instant::now();
    let data = panrest::pipeline::simulate_dataset(&scene, &spec)?;
    println!(
        "simulated reference {}x{}, pan {}x{}, ms {}x{} in {:.2?}",
        data.reference.width,
        data.reference.height,
        data.pan.width,
        data.pan.height,
        data.ms.width,
        data.ms.height,
        t.elapsed()
    );

    let t = Instant::now();
    let fused = baseline_pansharpen(&data.ms, &data.pan, spec.ms_factor)?;
    println!("baseline fusion took {:.2?}", t.elapsed());

    let t = Instant::now();
    let restored = restore(&fused, &data.pan, &RestoreParams::default())?;
    println!("restoration took {:.2?}", t.elapsed());

    let ratio = spec.ms_factor as f64;
    let before = evaluate_full_reference(&data.reference, &fused, ratio)?;
    let after = evaluate_full_reference(&data.reference, &restored, ratio)?;
    println!("\nfull-reference metrics (fused -> restored):");
    for ((name, b), (_, a)) in before.entries.iter().zip(&after.entries) {
        println!("  {name:<6} {b:>12.6} -> {a:>12.6}");
    }

    let qnr_before = evaluate_no_reference(&fused, &data.ms, &data.pan, spec.ms_factor)?;
    let qnr_after = evaluate_no_reference(&restored, &data.ms, &data.pan, spec.ms_factor)?;
    println!("\nno-reference metrics (fused -> restored):");
    for ((name, b), (_, a)) in qnr_before.entries.iter().zip(&qnr_after.entries) {
        println!("  {name:<9} {b:>12.6} -> {a:>12.6}");
    }
    Ok(())
}
