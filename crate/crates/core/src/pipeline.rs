//! Multi-scale training drivers shared by the command line and the tests.

use crate::config::RunConfig;
use crate::dictlearn::{sample_training_patches, train, train_single, CoupledDictionaryTriple, IterationRecord};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::Mat;
use crate::separation::McaDictionaries;

/// Trained coupled triples, one per trained scale, with objective traces.
#[derive(Clone, Debug)]
pub struct CoupledModel {
    pub triples: Vec<CoupledDictionaryTriple>,
    pub traces: Vec<Vec<IterationRecord>>,
}

/// Trains a triple for each of the `cfg.trained_scales` finest scales from
/// co-registered `(visual, xray)` pairs.
pub fn train_coupled_scales(pairs: &[(Image, Image)], cfg: &RunConfig) -> Result<CoupledModel> {
    cfg.validate()?;
    let mut triples = Vec::with_capacity(cfg.trained_scales);
    let mut traces = Vec::with_capacity(cfg.trained_scales);
    for s in 0..cfg.trained_scales {
        let lc = cfg.learn_config(s);
        let set = sample_training_patches(pairs, cfg.train_patches, &cfg.scales, s + 1, lc.seed)?;
        let out = train(&set, cfg.common_atoms, cfg.innovation_atoms, &lc)?;
        log::info!(
            "scale {}: {} iterations, final objective {:.6e}",
            s + 1,
            out.trace.len(),
            out.trace.last().map_or(f64::NAN, |r| r.normalized)
        );
        let mut t = out.dictionaries;
        t.scale = s + 1;
        triples.push(t);
        traces.push(out.trace);
    }
    Ok(CoupledModel { triples, traces })
}

/// Trains one MCA dictionary per trained scale from X-ray images alone.
pub fn train_mca_scales(xrays: &[Image], cfg: &RunConfig) -> Result<Vec<Mat>> {
    cfg.validate()?;
    let pairs: Vec<(Image, Image)> = xrays.iter().map(|x| (x.clone(), x.clone())).collect();
    (0..cfg.trained_scales)
        .map(|s| {
            let lc = cfg.learn_config(s);
            let set = sample_training_patches(&pairs, cfg.train_patches, &cfg.scales, s + 1, lc.seed)?;
            let out = train_single(
                &set.x,
                cfg.mca_atoms,
                cfg.mca_sparsity,
                cfg.iterations,
                cfg.objective_tol,
            )?;
            Ok(out.dictionary)
        })
        .collect()
}

/// Pairs per-scale dictionaries of the two components.
pub fn mca_pairs(side1: &[Mat], side2: &[Mat]) -> Result<Vec<McaDictionaries>> {
    if side1.len() != side2.len() {
        return Err(Error::dims(format!(
            "MCA dictionaries cover {} and {} scales",
            side1.len(),
            side2.len()
        )));
    }
    side1
        .iter()
        .zip(side2)
        .map(|(a, b)| McaDictionaries::new(a.clone(), b.clone()))
        .collect()
}
