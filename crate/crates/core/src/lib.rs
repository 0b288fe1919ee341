//! Separation of a mixed X-ray scan of a double-sided panel into per-side
//! components, guided by photographs of both sides.
//!
//! The pipeline learns coupled visual/X-ray dictionaries per scale
//! ([`dictlearn`]), decomposes images into a DC pyramid ([`patching`]) and
//! separates every texture patch with a budget-partitioned orthogonal
//! matching pursuit ([`sparse`], [`separation`]). A morphological component
//! analysis baseline and SSIM scoring ([`metrics`]) are included for
//! comparison.

pub mod config;
pub mod dictfile;
pub mod dictlearn;
pub mod error;
pub mod fsio;
pub mod image;
pub mod metrics;
pub mod numerics;
pub mod parallel;
pub mod patching;
pub mod pipeline;
pub mod pgm;
pub mod separation;
pub mod sparse;
pub mod synth;

pub use crate::config::RunConfig;
pub use crate::dictlearn::{CoupledDictionaryTriple, LearnConfig, TrainingSet};
pub use crate::error::{Error, Result};
pub use crate::image::Image;
pub use crate::metrics::SsimParams;
pub use crate::numerics::Mat;
pub use crate::patching::{PatchGrid, Pyramid, PyramidLevel, ScaleGeometry};
pub use crate::separation::{McaDictionaries, Separation, SeparationConfig};
pub use crate::sparse::{BudgetPartition, SparseCode};
