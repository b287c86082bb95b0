//! Watch the primal-dual solver converge on one chromatic component of a
//! realistic restoration problem: per-iteration energy and primal change.
//!
//! ```bash
//! cargo run --release --example solver_trace
//! ```

use std::time::Instant;

use panrest::nlweights::{compute_weights, WeightParams};
use panrest::pca::{fit_pca, forward_pca};
use panrest::pdsolver::{filter_component_with_trace, SolverParams};
use panrest::pipeline::{baseline_pansharpen, simulate_dataset, SimulationSpec};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let spec = SimulationSpec::default();
    let size = 48 * spec.ref_factor * spec.ms_factor;
    let scene = synthetic_scene(size, size, 4, 42);
    let data = simulate_dataset(&scene, &spec)?;
    let fused = baseline_pansharpen(&data.ms, &data.pan, spec.ms_factor)?;

    let basis = fit_pca(&fused)?;
    let components = forward_pca(&fused, &basis)?;

    let t = Instant::now();
    let graph = compute_weights(&data.pan, &WeightParams::default())?;
    println!(
        "weights for the {}x{} PAN: {:.2?}",
        data.pan.width,
        data.pan.height,
        t.elapsed()
    );

    // second principal component, trade-off in normalized units
    let chroma = components.band_field(1);
    let params = SolverParams {
        lambda: 0.5 * chroma.std_dev(),
        ..SolverParams::default()
    };
    let t = Instant::now();
    let (result, trace) = filter_component_with_trace(&chroma, &graph, &params)?;
    println!(
        "filtered component 1: {} iterations, converged: {}, {:.2?}",
        result.iterations,
        result.converged,
        t.elapsed()
    );
    println!("{:>6} {:>18} {:>14}", "iter", "energy", "primal change");
    for p in trace.iter().step_by((trace.len() / 12).max(1)) {
        println!(
            "{:>6} {:>18.10e} {:>14.4e}",
            p.iteration, p.energy, p.primal_change
        );
    }
    if let Some(last) = trace.last() {
        println!(
            "{:>6} {:>18.10e} {:>14.4e}",
            last.iteration, last.energy, last.primal_change
        );
    }
    Ok(())
}
