//! Grid-search the similarity decay and the regularization trade-off by
//! the RMSE of the restored image against a known reference.
//!
//! ```bash
//! cargo run --release --example tune_parameters
//! ```

use panrest::nlweights::resolve_h_sim;
use panrest::pipeline::{
    baseline_pansharpen, best_sample, simulate_dataset, tune, RestoreParams, SimulationSpec,
    TuneGrid,
};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let spec = SimulationSpec::default();
    let scale = spec.ref_factor * spec.ms_factor;
    let scene = synthetic_scene(32 * scale, 32 * scale, 4, 31);
    let data = simulate_dataset(&scene, &spec)?;
    let fused = baseline_pansharpen(&data.ms, &data.pan, spec.ms_factor)?;

    let mut params = RestoreParams::default();
    params.weights.nu_r = 4; // smaller window keeps the sweep quick
    params.solver.max_iters = 120;

    let auto = resolve_h_sim(&data.pan, &params.weights)?;
    let grid = TuneGrid {
        h_sim: vec![0.5 * auto, auto, 2.0 * auto],
        lambda: vec![0.2, 0.5, 1.0],
    };
    println!(
        "sweeping {}x{} combinations around the automatic h_sim {auto:.5}",
        grid.h_sim.len(),
        grid.lambda.len()
    );

    let samples = tune(&fused, &data.pan, &data.reference, &grid, &params)?;
    println!("{:>10} {:>8} {:>12}", "h_sim", "lambda", "rmse");
    for s in &samples {
        println!("{:>10.5} {:>8.3} {:>12.8}", s.h_sim, s.lambda, s.rmse);
    }
    let best = best_sample(&samples).unwrap();
    println!(
        "\nbest: h_sim {:.5}, lambda {:.3} (rmse {:.8})",
        best.h_sim, best.lambda, best.rmse
    );
    Ok(())
}
