//! Restoration of pansharpened multispectral imagery.
//!
//! Fused satellite products often carry spectral spots, jagged edges and
//! aliasing inherited from the low-resolution multispectral sensor. This
//! crate post-processes such products without knowing how they were
//! fused: a PCA transform separates structure from chromaticity, every
//! chromatic component is filtered by a nonlocal total-variation model
//! whose weights come from the panchromatic image, the structural
//! component is replaced by the locally histogram-matched PAN, and the
//! transform is inverted.
//!
//! The crate also ships the reduced-resolution simulation protocol
//! (Gaussian MTF filtering and Fourier decimation), a minimal
//! component-substitution pansharpener for end-to-end experiments, and
//! the standard quality indices (RMSE, ERGAS, SAM, Q4, QNR).
//!
//! ```no_run
//! use panrest::pipeline::{restore, RestoreParams};
//! use panrest::raster::{Field, MultiBandImage};
//!
//! # fn main() -> panrest::Result<()> {
//! let fused = MultiBandImage::load_mbr("fused.mbr")?;
//! let pan = Field::load_mbr("pan.mbr")?;
//! let restored = restore(&fused, &pan, &RestoreParams::default())?;
//! restored.save_mbr("restored.mbr")?;
//! # Ok(())
//! # }
//! ```
//!
//! Runnable demonstrations of each capability live under `examples/`;
//! the `panrest` binary exposes the same operations as subcommands.

pub mod error;
mod fft;
pub mod histmatch;
pub mod metrics;
pub mod nlweights;
pub mod pca;
pub mod pdsolver;
pub mod pipeline;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
pub use raster::{Field, MultiBandImage, PanImage};
