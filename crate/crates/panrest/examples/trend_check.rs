//! Quick multi-seed check of the end-to-end improvement trends.

use panrest::metrics::{evaluate_full_reference, qnr};
use panrest::pipeline::{baseline_pansharpen, restore, simulate_dataset, RestoreParams, SimulationSpec};
use panrest::scene::synthetic_scene;

fn main() -> panrest::Result<()> {
    let spec = SimulationSpec::default();
    for seed in [101u64, 202, 303, 404, 505] {
        let scene = synthetic_scene(768, 768, 4, seed);
        let data = simulate_dataset(&scene, &spec)?;
        let fused = baseline_pansharpen(&data.ms, &data.pan, spec.ms_factor)?;
        let restored = restore(&fused, &data.pan, &RestoreParams::default())?;
        let b = evaluate_full_reference(&data.reference, &fused, 4.0)?;
        let a = evaluate_full_reference(&data.reference, &restored, 4.0)?;
        let nb = qnr(&fused, &data.ms, &data.pan, 4, 32)?;
        let na = qnr(&restored, &data.ms, &data.pan, 4, 32)?;
        let ok = |cond: bool| if cond { "ok " } else { "BAD" };
        println!(
            "seed {seed}: RMSE {:.4}->{:.4} {} ERGAS {:.3}->{:.3} {} SAM {:.3}->{:.3} {} Q4 {:.4}->{:.4} {} | D_s {:.4}->{:.4} {} QNR {:.4}->{:.4} {}",
            b.get("RMSE").unwrap(), a.get("RMSE").unwrap(), ok(a.get("RMSE") < b.get("RMSE")),
            b.get("ERGAS").unwrap(), a.get("ERGAS").unwrap(), ok(a.get("ERGAS") < b.get("ERGAS")),
            b.get("SAM").unwrap(), a.get("SAM").unwrap(), ok(a.get("SAM") < b.get("SAM")),
            b.get("Q4").unwrap(), a.get("Q4").unwrap(), ok(a.get("Q4") > b.get("Q4")),
            nb.d_s, na.d_s, ok(na.d_s < nb.d_s),
            nb.qnr, na.qnr, ok(na.qnr > nb.qnr),
        );
    }
    Ok(())
}
