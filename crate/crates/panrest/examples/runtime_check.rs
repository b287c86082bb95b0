//! Time a full restoration of a 512x512x4 image with default parameters
//! on a single thread.
//!
//! ```bash
//! cargo run --release --example runtime_check
//! ```

use std::time::Instant;

use panrest::pipeline::{baseline_pansharpen, restore, RestoreParams, SimulationSpec};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    // ref_factor 1 keeps PAN on the source grid: a 512x512 scene gives a
    // 512x512 PAN and 128x128 MS
    let spec = SimulationSpec {
        ref_factor: 1,
        ref_mtf: 1.0,
        ..SimulationSpec::default()
    };
    let scene = synthetic_scene(512, 512, 4, 7);
    let data = panrest::pipeline::simulate_dataset(&scene, &spec)?;
    println!("pan {}x{}, ms {}x{}", data.pan.width, data.pan.height, data.ms.width, data.ms.height);
    let fused = baseline_pansharpen(&data.ms, &data.pan, spec.ms_factor)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = Instant::now();
    let restored = pool.install(|| restore(&fused, &data.pan, &RestoreParams::default()))?;
    let elapsed = t.elapsed();
    println!(
        "single-threaded restore of {}x{}x{}: {:.2?}",
        restored.width, restored.height, restored.bands, elapsed
    );
    Ok(())
}
