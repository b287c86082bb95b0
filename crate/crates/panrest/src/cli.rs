//! Command-line front end: argument parsing, parameter wiring and exit
//! codes. All processing lives in the library.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use panrest::error::{Error, Result};
use panrest::histmatch::MatchParams;
use panrest::metrics::{evaluate_full_reference, evaluate_no_reference, MetricReport};
use panrest::nlweights::{weight_row, WeightParams};
use panrest::pca::{fit_pca, forward_pca};
use panrest::pdsolver::SolverParams;
use panrest::pipeline::{
    baseline_pansharpen, best_sample, restore, restore_with_trace, simulate_dataset,
    RestoreParams, SimulationSpec, TuneGrid,
};
use panrest::raster::{gamma_correct, linear_rescale, save_pgm, Field, MultiBandImage};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(
    name = "panrest",
    version,
    about = "Restore pansharpened multispectral images and evaluate their quality",
    propagate_version = true
)]
struct Cli {
    /// Worker threads; 0 uses all cores. Defaults to the PANREST_THREADS
    /// environment variable when set.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive (reference, PAN, MS) rasters from a high-resolution image
    Simulate {
        /// High-resolution source image (MBR)
        #[arg(long)]
        input: PathBuf,
        /// Simulation spec JSON; omitted fields take the defaults
        /// (coefficients 0.1/0.4/0.25/0.25, factors 3 and 4, MTF 0.15,
        /// MS cut 0.35)
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for reference.mbr, pan.mbr, ms.mbr
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fuse MS and PAN with the component-substitution baseline
    Pansharpen {
        #[arg(long)]
        ms: PathBuf,
        #[arg(long)]
        pan: PathBuf,
        /// PAN/MS resolution ratio
        #[arg(long, default_value_t = 4)]
        factor: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore a fused product conditioned on its PAN image
    Restore {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        pan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: RestoreFlags,
        /// Write a CSV of (component, iteration, energy, primal change)
        #[arg(long)]
        trace_energy: Option<PathBuf>,
    },
    /// Quality metrics
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Decompose an image into principal components (MBR + PGM per PC)
    PcaDump {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print one row of the nonlocal weight graph
    WeightsDump {
        #[arg(long)]
        pan: PathBuf,
        /// Pixel as x,y
        #[arg(long, value_parser = parse_pixel)]
        pixel: (usize, usize),
        #[command(flatten)]
        weights: WeightFlags,
    },
    /// Grid-search (h_sim, lambda) by RMSE against a reference
    Tune {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        pan: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// JSON file with arrays "h_sim" and "lambda"
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        params: RestoreFlags,
    },
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Full-reference metrics: RMSE, ERGAS, SAM, Q4
    Full {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// PAN/MS resolution ratio used by ERGAS
        #[arg(long, default_value_t = 4.0)]
        ratio: f64,
        /// Emit a JSON object instead of key=value lines
        #[arg(long)]
        json: bool,
    },
    /// No-reference metrics: D_lambda, D_s, QNR
    Qnr {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        ms: PathBuf,
        #[arg(long)]
        pan: PathBuf,
        #[arg(long, default_value_t = 4)]
        ratio: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone)]
struct WeightFlags {
    /// Search window radius (window side 2*nu_r + 1)
    #[arg(long, default_value_t = 7)]
    nu_r: usize,
    /// Patch side length for the similarity term (odd)
    #[arg(long, default_value_t = 3)]
    patch_size: usize,
    /// Spatial decay of the weights, pixels
    #[arg(long, default_value_t = 2.5)]
    h_spt: f64,
    /// Similarity decay; defaults to 4% of the PAN dynamic range
    #[arg(long)]
    h_sim: Option<f64>,
}

impl WeightFlags {
    fn to_params(&self) -> Result<WeightParams> {
        if self.patch_size == 0 || self.patch_size % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "patch size must be odd, got {}",
                self.patch_size
            )));
        }
        Ok(WeightParams {
            nu_r: self.nu_r,
            patch_radius: self.patch_size / 2,
            h_spt: self.h_spt,
            h_sim: self.h_sim,
        })
    }
}

#[derive(Args, Clone)]
struct RestoreFlags {
    #[command(flatten)]
    weights: WeightFlags,
    /// Regularization trade-off shared by all chromatic components
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Per-component trade-off overrides, comma separated
    #[arg(long, value_delimiter = ',')]
    lambda_per_component: Option<Vec<f64>>,
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    rel_tol: f64,
    /// Sliding window side for local histogram matching (odd)
    #[arg(long, default_value_t = 15)]
    hist_window: usize,
    /// Stride between histogram-matching windows
    #[arg(long, default_value_t = 1)]
    hist_stride: usize,
    /// Match PAN globally instead of per sliding window
    #[arg(long)]
    hist_global: bool,
}

impl RestoreFlags {
    fn to_params(&self) -> Result<RestoreParams> {
        Ok(RestoreParams {
            weights: self.weights.to_params()?,
            solver: SolverParams {
                lambda: self.lambda,
                max_iters: self.max_iters,
                rel_tol: self.rel_tol,
                ..SolverParams::default()
            },
            matching: MatchParams {
                window: self.hist_window,
                stride: self.hist_stride,
            },
            global_match: self.hist_global,
            lambda_overrides: self.lambda_per_component.clone(),
        })
    }
}

fn parse_pixel(s: &str) -> std::result::Result<(usize, usize), String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected x,y but got {s:?}"))?;
    Ok((
        x.trim().parse().map_err(|e| format!("bad x: {e}"))?,
        y.trim().parse().map_err(|e| format!("bad y: {e}"))?,
    ))
}

/// Parse the arguments, run the requested subcommand and return the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            eprint!("{err}");
            eprintln!("error[usage]: invalid invocation");
            return code;
        }
    };

    let threads = cli.threads.or_else(|| {
        std::env::var("PANREST_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(k) = threads {
        if k > 0 {
            // ignore failure: the pool can only be set once per process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }

    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            match err {
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_INVARIANT,
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_report(report: &MetricReport, json: bool) {
    if json {
        let fields: Vec<String> = report
            .entries
            .iter()
            .map(|(k, v)| format!("\"{k}\": {v:.10}"))
            .collect();
        println!("{{{}}}", fields.join(", "));
    } else {
        print!("{}", report.key_values());
        println!("{report}");
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            input,
            spec,
            out_dir,
        } => {
            let highres = MultiBandImage::load_mbr(&input)?;
            let spec: SimulationSpec = match spec {
                Some(path) => read_json(&path)?,
                None => SimulationSpec::default(),
            };
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let data = simulate_dataset(&highres, &spec)?;
            data.reference.save_mbr(out_dir.join("reference.mbr"))?;
            data.pan.save_mbr(out_dir.join("pan.mbr"))?;
            data.ms.save_mbr(out_dir.join("ms.mbr"))?;
            println!(
                "reference {}x{}x{}  pan {}x{}  ms {}x{}x{}",
                data.reference.width,
                data.reference.height,
                data.reference.bands,
                data.pan.width,
                data.pan.height,
                data.ms.width,
                data.ms.height,
                data.ms.bands
            );
            Ok(())
        }
        Command::Pansharpen {
            ms,
            pan,
            factor,
            out,
        } => {
            let ms = MultiBandImage::load_mbr(&ms)?;
            let pan = Field::load_mbr(&pan)?;
            let fused = baseline_pansharpen(&ms, &pan, factor)?;
            fused.save_mbr(&out)?;
            println!("fused {}x{}x{}", fused.width, fused.height, fused.bands);
            Ok(())
        }
        Command::Restore {
            fused,
            pan,
            out,
            params,
            trace_energy,
        } => {
            let fused = MultiBandImage::load_mbr(&fused)?;
            let pan = Field::load_mbr(&pan)?;
            let params = params.to_params()?;
            let restored = if let Some(trace_path) = trace_energy {
                let (restored, traces) = restore_with_trace(&fused, &pan, &params)?;
                let mut csv = String::from("component,iteration,energy,primal_change\n");
                for (component, points) in &traces {
                    for p in points {
                        csv.push_str(&format!(
                            "{component},{},{:.12e},{:.12e}\n",
                            p.iteration, p.energy, p.primal_change
                        ));
                    }
                }
                write_text(&trace_path, &csv)?;
                restored
            } else {
                restore(&fused, &pan, &params)?
            };
            restored.save_mbr(&out)?;
            println!(
                "restored {}x{}x{}",
                restored.width, restored.height, restored.bands
            );
            Ok(())
        }
        Command::Metrics(MetricsCommand::Full {
            reference,
            test,
            ratio,
            json,
        }) => {
            let reference = MultiBandImage::load_mbr(&reference)?;
            let test = MultiBandImage::load_mbr(&test)?;
            let report = evaluate_full_reference(&reference, &test, ratio)?;
            print_report(&report, json);
            Ok(())
        }
        Command::Metrics(MetricsCommand::Qnr {
            fused,
            ms,
            pan,
            ratio,
            json,
        }) => {
            let fused = MultiBandImage::load_mbr(&fused)?;
            let ms = MultiBandImage::load_mbr(&ms)?;
            let pan = Field::load_mbr(&pan)?;
            let report = evaluate_no_reference(&fused, &ms, &pan, ratio)?;
            print_report(&report, json);
            Ok(())
        }
        Command::PcaDump { input, out_dir } => {
            let img = MultiBandImage::load_mbr(&input)?;
            let basis = fit_pca(&img)?;
            let components = forward_pca(&img, &basis)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            for k in 0..components.bands {
                let pc = components.band_field(k);
                pc.save_mbr(out_dir.join(format!("pc{}.mbr", k + 1)))?;

                let display = linear_rescale(&pc.to_image());
                // the structural component is shown gamma-corrected
                let display = if k == 0 {
                    gamma_correct(&display, 0.75)?
                } else {
                    display
                };
                save_pgm(
                    &display.band_field(0),
                    out_dir.join(format!("pc{}.pgm", k + 1)),
                )?;
                println!("pc{} variance {:.10e}", k + 1, basis.variances[k]);
            }
            Ok(())
        }
        Command::WeightsDump { pan, pixel, weights } => {
            let pan = Field::load_mbr(&pan)?;
            let params = weights.to_params()?;
            let row = weight_row(&pan, &params, pixel.0, pixel.1)?;
            println!("# weights of pixel ({},{}) as dy dx weight", pixel.0, pixel.1);
            let mut sum = 0.0;
            for (dy, dx, w) in &row {
                println!("{dy} {dx} {w:.12e}");
                sum += w;
            }
            println!("# {} neighbors, row sum {sum:.12}", row.len());
            Ok(())
        }
        Command::Tune {
            fused,
            pan,
            reference,
            grid,
            params,
        } => {
            let fused = MultiBandImage::load_mbr(&fused)?;
            let pan = Field::load_mbr(&pan)?;
            let reference = MultiBandImage::load_mbr(&reference)?;
            let grid: TuneGrid = read_json(&grid)?;
            let params = params.to_params()?;
            let samples = panrest::pipeline::tune(&fused, &pan, &reference, &grid, &params)?;
            println!("{:>12} {:>12} {:>14}", "h_sim", "lambda", "rmse");
            for s in &samples {
                println!("{:>12.6} {:>12.6} {:>14.10}", s.h_sim, s.lambda, s.rmse);
            }
            if let Some(best) = best_sample(&samples) {
                println!(
                    "best: h_sim={} lambda={} rmse={:.10}",
                    best.h_sim, best.lambda, best.rmse
                );
            }
            Ok(())
        }
    }
}
