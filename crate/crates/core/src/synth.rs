//! Synthetic double-sided scenes with planted coupled dictionaries.
//!
//! Every scale gets a planted triple `(Ψᶜ, Φᶜ, Φ)`. Side 1 draws its common
//! codes from the first half of the γ common atoms and side 2 from the
//! second half, so the two sides never share a common atom; the innovation
//! dictionary is shared. Per patch a visual texture `Ψᶜz` and an X-ray
//! texture `Φᶜz + Φv` are planted and the images are assembled coarse to
//! fine exactly like a pyramid collapse.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::RunConfig;
use crate::dictlearn::CoupledDictionaryTriple;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{normalize_columns, Mat};
use crate::patching::{collapse_pyramid, uncovered_pixels, PatchGrid, PyramidLevel, ScaleGeometry};
use crate::sparse::SparseCode;

/// X-ray intensity is `XRAY_OFFSET + XRAY_GAIN · raw`, clamped to
/// `[0, XRAY_MAX]` so that the sum of two sides stays within `[0, 1]`.
pub const XRAY_OFFSET: f64 = 0.25;
pub const XRAY_GAIN: f64 = 0.08;
pub const XRAY_MAX: f64 = 32767.0 / 65535.0;
/// Visual intensity is `VISUAL_OFFSET + VISUAL_GAIN · raw`, clamped to `[0, 1]`.
pub const VISUAL_OFFSET: f64 = 0.5;
pub const VISUAL_GAIN: f64 = 0.15;
/// Intensities are snapped to the 16-bit grid so PGM output is lossless.
const LEVELS: f64 = 65535.0;

/// Which half of the common atoms a panel draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    One,
    Two,
}

/// Codes planted in one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedCode {
    pub scale: usize,
    pub patch: usize,
    pub z: SparseCode,
    pub v: SparseCode,
}

/// A co-registered visual/X-ray image pair and its codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub side: Side,
    pub visual: Image,
    pub xray: Image,
    pub codes: Vec<PlantedCode>,
}

/// A double-sided scene, its ground truth, and one single-sided training
/// panel per side drawn from the same planted dictionaries.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub front: Panel,
    pub back: Panel,
    /// `front.xray + back.xray`, elementwise.
    pub mixed: Image,
    pub train_front: Panel,
    pub train_back: Panel,
    /// Planted triples, finest scale first.
    pub truth: Vec<CoupledDictionaryTriple>,
}

fn random_texture_dictionary(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Result<Mat> {
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter_mut().for_each(|v| *v -= mean);
            c
        })
        .collect();
    Ok(normalize_columns(&Mat::from_columns(n, &cols)?)?.0)
}

/// Planted triples for every scale of `cfg`.
pub fn plant_dictionaries(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CoupledDictionaryTriple>> {
    cfg.scales
        .iter()
        .enumerate()
        .map(|(l, g)| {
            let n = g.patch_dim();
            let psi = random_texture_dictionary(rng, n, cfg.common_atoms)?;
            let phic = random_texture_dictionary(rng, n, cfg.common_atoms)?;
            let phi = random_texture_dictionary(rng, n, cfg.innovation_atoms)?;
            CoupledDictionaryTriple::new(psi, phic, phi, l + 1)
        })
        .collect()
}

fn random_code(rng: &mut ChaCha8Rng, dim: usize, offset: usize, range: usize, k: usize) -> Result<SparseCode> {
    let picks = index::sample(rng, range, k);
    let entries = picks
        .iter()
        .map(|i| {
            let mag: f64 = rng.random_range(0.5..1.5);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (offset + i, sign * mag)
        })
        .collect();
    SparseCode::new(dim, entries)
}

/// Image sizes of every level's source, finest first, plus the coarsest.
fn level_sizes(h: usize, w: usize, scales: &[ScaleGeometry]) -> Result<Vec<(usize, usize)>> {
    let mut sizes = vec![(h, w)];
    for (l, g) in scales.iter().enumerate() {
        let (ch, cw) = sizes[l];
        g.validate(ch, cw).map_err(|e| Error::Pyramid {
            level: l + 1,
            reason: e.to_string(),
        })?;
        sizes.push(g.grid_dims(ch, cw));
    }
    Ok(sizes)
}

/// Raw level data of one image: coarse-to-fine reconstruction input.
fn level_with_texture(
    scale: usize,
    geom: ScaleGeometry,
    source: (usize, usize),
    coarse: &Image,
    texture: Vec<f64>,
) -> Result<PyramidLevel> {
    let (gh, gw) = coarse.dims();
    let texture = PatchGrid::from_flat(geom.patch_side, geom.step, gh, gw, texture)?;
    let uncovered = uncovered_pixels(geom, source.0, source.1)
        .into_iter()
        .map(|i| {
            let (r, c) = (i / source.1, i % source.1);
            (i, coarse.get((r / geom.step).min(gh - 1), (c / geom.step).min(gw - 1)))
        })
        .collect();
    Ok(PyramidLevel {
        scale,
        texture,
        lowpass: coarse.clone(),
        source_h: source.0,
        source_w: source.1,
        uncovered,
    })
}

fn quantize(img: &Image, offset: f64, gain: f64, max: f64) -> Image {
    img.map(|v| ((offset + gain * v).clamp(0.0, max) * LEVELS).round() / LEVELS)
}

/// Plants one panel of `side` content.
pub fn synth_panel(
    cfg: &RunConfig,
    truth: &[CoupledDictionaryTriple],
    side: Side,
    rng: &mut ChaCha8Rng,
) -> Result<Panel> {
    let gamma = cfg.common_atoms;
    let half = gamma / 2;
    if cfg.s_z > half || cfg.s_v > cfg.innovation_atoms {
        return Err(Error::param(format!(
            "budgets ({}, {}) do not fit {half} atoms per side and {} innovation atoms",
            cfg.s_z, cfg.s_v, cfg.innovation_atoms
        )));
    }
    let (offset, range) = match side {
        Side::One => (0, half),
        Side::Two => (half, gamma - half),
    };
    let sizes = level_sizes(cfg.synth_height, cfg.synth_width, &cfg.scales)?;
    let (ch, cw) = *sizes.last().unwrap();
    let coarse_v = Image::from_fn(ch, cw, |_, _| rng.random_range(-1.0..1.0));
    let coarse_x = Image::from_fn(ch, cw, |_, _| rng.random_range(-1.0..1.0));

    let mut codes = Vec::new();
    let mut lp_v = coarse_v.clone();
    let mut lp_x = coarse_x.clone();
    for l in (0..cfg.scales.len()).rev() {
        let geom = cfg.scales[l];
        let dicts = &truth[l];
        let (gh, gw) = sizes[l + 1];
        let n = geom.patch_dim();
        let mut tex_v = Vec::with_capacity(gh * gw * n);
        let mut tex_x = Vec::with_capacity(gh * gw * n);
        for p in 0..gh * gw {
            let z = random_code(rng, gamma, offset, range, cfg.s_z)?;
            let v = random_code(rng, cfg.innovation_atoms, 0, cfg.innovation_atoms, cfg.s_v)?;
            tex_v.extend(z.synthesize(&dicts.psi_c)?);
            let common = z.synthesize(&dicts.phi_c)?;
            let inn = v.synthesize(&dicts.phi)?;
            tex_x.extend(common.iter().zip(&inn).map(|(a, b)| a + b));
            codes.push(PlantedCode {
                scale: l + 1,
                patch: p,
                z,
                v,
            });
        }
        let lv = level_with_texture(l + 1, geom, sizes[l], &lp_v, tex_v)?;
        let lx = level_with_texture(l + 1, geom, sizes[l], &lp_x, tex_x)?;
        lp_v = collapse_pyramid(std::slice::from_ref(&lv), &lp_v)?;
        lp_x = collapse_pyramid(std::slice::from_ref(&lx), &lp_x)?;
    }
    codes.sort_by_key(|c| (c.scale, c.patch));
    Ok(Panel {
        side,
        visual: quantize(&lp_v, VISUAL_OFFSET, VISUAL_GAIN, 1.0),
        xray: quantize(&lp_x, XRAY_OFFSET, XRAY_GAIN, XRAY_MAX),
        codes,
    })
}

/// Generates a full scene from `seed`. Identical inputs give identical
/// scenes.
pub fn synthesize(cfg: &RunConfig, seed: u64) -> Result<SynthScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = plant_dictionaries(cfg, &mut rng)?;
    let front = synth_panel(cfg, &truth, Side::One, &mut rng)?;
    let back = synth_panel(cfg, &truth, Side::Two, &mut rng)?;
    let train_front = synth_panel(cfg, &truth, Side::One, &mut rng)?;
    let train_back = synth_panel(cfg, &truth, Side::Two, &mut rng)?;
    let mixed = front.xray.add(&back.xray)?;
    Ok(SynthScene {
        front,
        back,
        mixed,
        train_front,
        train_back,
        truth,
    })
}
