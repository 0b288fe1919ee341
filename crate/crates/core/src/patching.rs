//! Overlapping patch grids and the DC pyramid.
//!
//! A level with patch side `s` and step `ε` over an `H×W` image has
//! `⌊H/ε⌋ × ⌊W/ε⌋` patches with top-left corners at `(ε·u₁, ε·u₂)`. Reads
//! past the bottom/right border replicate the edge pixel, and overlap-add
//! folds those contributions back onto the edge. Pixels that no patch
//! touches (possible when `H mod ε > s − ε`) are carried verbatim in the
//! level so that collapsing a pyramid reproduces its input exactly.

use crate::error::{Error, Result};
use crate::image::Image;

/// Patch side and step for one pyramid scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleGeometry {
    pub patch_side: usize,
    pub step: usize,
}

impl ScaleGeometry {
    pub fn new(patch_side: usize, step: usize) -> Self {
        ScaleGeometry { patch_side, step }
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_side * self.patch_side
    }

    /// Grid size `(⌊H/ε⌋, ⌊W/ε⌋)` for an `H×W` source.
    pub fn grid_dims(&self, height: usize, width: usize) -> (usize, usize) {
        (height / self.step, width / self.step)
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.step == 0 || self.patch_side == 0 {
            return Err(Error::param("patch side and step must be positive"));
        }
        if self.step > self.patch_side {
            return Err(Error::param(format!(
                "step {} exceeds patch side {}",
                self.step, self.patch_side
            )));
        }
        if self.patch_side > height.min(width) {
            return Err(Error::param(format!(
                "patch side {} exceeds image size {height}x{width}",
                self.patch_side
            )));
        }
        Ok(())
    }
}

/// Row-major grid of equally sized patch vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    patch_side: usize,
    step: usize,
    grid_h: usize,
    grid_w: usize,
    data: Vec<f64>,
}

impl PatchGrid {
    /// Builds a grid from concatenated row-major patch vectors.
    pub fn from_flat(
        patch_side: usize,
        step: usize,
        grid_h: usize,
        grid_w: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let n = patch_side * patch_side;
        if data.len() != grid_h * grid_w * n {
            return Err(Error::dims(format!(
                "{grid_h}x{grid_w} grid of {n}-pixel patches needs {} values, got {}",
                grid_h * grid_w * n,
                data.len()
            )));
        }
        Ok(PatchGrid {
            patch_side,
            step,
            grid_h,
            grid_w,
            data,
        })
    }

    pub fn zeros(patch_side: usize, step: usize, grid_h: usize, grid_w: usize) -> Self {
        PatchGrid {
            patch_side,
            step,
            grid_h,
            grid_w,
            data: vec![0.0; grid_h * grid_w * patch_side * patch_side],
        }
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn geometry(&self) -> ScaleGeometry {
        ScaleGeometry::new(self.patch_side, self.step)
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn len(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let n = self.patch_dim();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn patch_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.patch_dim();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn patches(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.patch_dim().max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Same geometry with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PatchGrid {
        PatchGrid {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Extracts the `⌊H/ε⌋ × ⌊W/ε⌋` overlapping patches of `img`.
pub fn extract_patches(img: &Image, patch_side: usize, step: usize) -> Result<PatchGrid> {
    let geom = ScaleGeometry::new(patch_side, step);
    geom.validate(img.height(), img.width())?;
    let (h, w) = img.dims();
    let (gh, gw) = geom.grid_dims(h, w);
    let n = geom.patch_dim();
    let mut data = Vec::with_capacity(gh * gw * n);
    for u1 in 0..gh {
        for u2 in 0..gw {
            for pr in 0..patch_side {
                let r = (step * u1 + pr).min(h - 1);
                for pc in 0..patch_side {
                    let c = (step * u2 + pc).min(w - 1);
                    data.push(img.get(r, c));
                }
            }
        }
    }
    PatchGrid::from_flat(patch_side, step, gh, gw, data)
}

/// Splits a patch into its zero-mean texture and its DC value.
pub fn remove_dc(patch: &[f64]) -> (Vec<f64>, f64) {
    if patch.is_empty() {
        return (Vec::new(), 0.0);
    }
    let dc = patch.iter().sum::<f64>() / patch.len() as f64;
    (patch.iter().map(|v| v - dc).collect(), dc)
}

/// Places one DC value per grid position into a `grid_h × grid_w` image.
pub fn assemble_dc_image(grid_h: usize, grid_w: usize, dcs: &[f64]) -> Result<Image> {
    Image::new(grid_h, grid_w, dcs.to_vec())
}

fn check_grid(grid: &PatchGrid, height: usize, width: usize) -> Result<()> {
    let geom = grid.geometry();
    geom.validate(height, width)?;
    if geom.grid_dims(height, width) != grid.grid_dims() {
        return Err(Error::dims(format!(
            "grid {:?} does not match a {height}x{width} image at step {}",
            grid.grid_dims(),
            grid.step
        )));
    }
    Ok(())
}

/// Accumulates `value(patch, offset)` for every pixel read of every patch,
/// returning per-pixel sums and read counts. Patch order is row-major, so the
/// accumulation order per pixel is fixed.
fn accumulate(
    geom: ScaleGeometry,
    grid: (usize, usize),
    height: usize,
    width: usize,
    mut value: impl FnMut(usize, usize) -> f64,
) -> (Vec<f64>, Vec<u32>) {
    let mut sum = vec![0.0; height * width];
    let mut weight = vec![0u32; height * width];
    let (gh, gw) = grid;
    let s = geom.patch_side;
    for u1 in 0..gh {
        for u2 in 0..gw {
            let p = u1 * gw + u2;
            for pr in 0..s {
                let r = (geom.step * u1 + pr).min(height - 1);
                for pc in 0..s {
                    let c = (geom.step * u2 + pc).min(width - 1);
                    let idx = r * width + c;
                    sum[idx] += value(p, pr * s + pc);
                    weight[idx] += 1;
                }
            }
        }
    }
    (sum, weight)
}

fn normalize_accumulated(sum: Vec<f64>, weight: &[u32], height: usize, width: usize) -> Image {
    let data = sum
        .into_iter()
        .zip(weight)
        .map(|(s, &w)| if w == 0 { 0.0 } else { s / w as f64 })
        .collect();
    Image::new(height, width, data).expect("accumulated values are finite")
}

/// Inverse of [`extract_patches`]: every pixel becomes the average of all
/// patch values read from it. Pixels outside every patch are zero.
pub fn overlap_add(grid: &PatchGrid, height: usize, width: usize) -> Result<Image> {
    check_grid(grid, height, width)?;
    let n = grid.patch_dim();
    let (sum, weight) = accumulate(grid.geometry(), grid.grid_dims(), height, width, |p, o| {
        grid.data[p * n + o]
    });
    Ok(normalize_accumulated(sum, &weight, height, width))
}

/// Overlap-add of constant patches, patch `(u₁,u₂)` holding `lowpass(u₁,u₂)`.
///
/// This is the exact counterpart of DC aggregation: for any image,
/// `upsample_lowpass(dc image) + overlap_add(textures)` reproduces it on
/// every covered pixel.
pub fn upsample_lowpass(
    lowpass: &Image,
    height: usize,
    width: usize,
    patch_side: usize,
    step: usize,
) -> Result<Image> {
    let geom = ScaleGeometry::new(patch_side, step);
    geom.validate(height, width)?;
    let grid = geom.grid_dims(height, width);
    if lowpass.dims() != grid {
        return Err(Error::dims(format!(
            "low-pass is {:?}, expected {grid:?} for a {height}x{width} image",
            lowpass.dims()
        )));
    }
    let lp = lowpass.as_slice();
    let (sum, weight) = accumulate(geom, grid, height, width, |p, _| lp[p]);
    Ok(normalize_accumulated(sum, &weight, height, width))
}

/// Flat indices of pixels that no patch of the grid reads.
pub fn uncovered_pixels(geom: ScaleGeometry, height: usize, width: usize) -> Vec<usize> {
    let (gh, gw) = geom.grid_dims(height, width);
    let reach_r = if gh == 0 { 0 } else { geom.step * (gh - 1) + geom.patch_side };
    let reach_c = if gw == 0 { 0 } else { geom.step * (gw - 1) + geom.patch_side };
    let mut out = Vec::new();
    for r in 0..height {
        for c in 0..width {
            if r >= reach_r || c >= reach_c {
                out.push(r * width + c);
            }
        }
    }
    out
}

/// One scale of the DC pyramid.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidLevel {
    /// 1-based scale index.
    pub scale: usize,
    /// Zero-mean patches.
    pub texture: PatchGrid,
    /// DC image, `⌊H/ε⌋ × ⌊W/ε⌋`.
    pub lowpass: Image,
    pub source_h: usize,
    pub source_w: usize,
    /// `(flat index, value)` of source pixels outside every patch.
    pub uncovered: Vec<(usize, f64)>,
}

impl PyramidLevel {
    /// The same level with its texture replaced; the low-pass and the
    /// uncovered pixels are kept as-is.
    pub fn with_texture(&self, texture: PatchGrid) -> Result<PyramidLevel> {
        if texture.grid_dims() != self.texture.grid_dims()
            || texture.geometry() != self.texture.geometry()
        {
            return Err(Error::dims("replacement texture has a different grid"));
        }
        Ok(PyramidLevel {
            texture,
            ..self.clone()
        })
    }
}

/// Output of [`build_pyramid`]: finest level first.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid {
    pub levels: Vec<PyramidLevel>,
    pub coarsest: Image,
}

impl Pyramid {
    pub fn collapse(&self) -> Result<Image> {
        collapse_pyramid(&self.levels, &self.coarsest)
    }
}

/// Decomposes `img` over `scales.len()` levels; level `l+1` decomposes the
/// low-pass of level `l`.
pub fn build_pyramid(img: &Image, scales: &[ScaleGeometry]) -> Result<Pyramid> {
    if scales.is_empty() {
        return Err(Error::param("pyramid needs at least one scale"));
    }
    let mut levels = Vec::with_capacity(scales.len());
    let mut current = img.clone();
    for (i, geom) in scales.iter().enumerate() {
        let level = i + 1;
        let (h, w) = current.dims();
        geom.validate(h, w).map_err(|e| Error::Pyramid {
            level,
            reason: e.to_string(),
        })?;
        let grid = extract_patches(&current, geom.patch_side, geom.step)?;
        let (gh, gw) = grid.grid_dims();
        let mut dcs = Vec::with_capacity(grid.len());
        let mut tex = Vec::with_capacity(grid.as_flat().len());
        for p in grid.patches() {
            let (t, dc) = remove_dc(p);
            tex.extend_from_slice(&t);
            dcs.push(dc);
        }
        let texture = PatchGrid::from_flat(geom.patch_side, geom.step, gh, gw, tex)?;
        let lowpass = assemble_dc_image(gh, gw, &dcs)?;
        let uncovered = uncovered_pixels(*geom, h, w)
            .into_iter()
            .map(|i| (i, current.as_slice()[i]))
            .collect();
        levels.push(PyramidLevel {
            scale: level,
            texture,
            lowpass: lowpass.clone(),
            source_h: h,
            source_w: w,
            uncovered,
        });
        current = lowpass;
    }
    Ok(Pyramid {
        levels,
        coarsest: current,
    })
}

/// Rebuilds the full-resolution image: from the coarsest level down, the
/// running image is upsampled, the level's texture overlap-add is added and
/// uncovered pixels are restored.
pub fn collapse_pyramid(levels: &[PyramidLevel], coarsest: &Image) -> Result<Image> {
    let mut current = coarsest.clone();
    for level in levels.iter().rev() {
        if current.dims() != level.texture.grid_dims() {
            return Err(Error::Pyramid {
                level: level.scale,
                reason: format!(
                    "coarser image is {:?} but the grid is {:?}",
                    current.dims(),
                    level.texture.grid_dims()
                ),
            });
        }
        let geom = level.texture.geometry();
        let mut img = overlap_add(&level.texture, level.source_h, level.source_w)?;
        let up = upsample_lowpass(
            &current,
            level.source_h,
            level.source_w,
            geom.patch_side,
            geom.step,
        )?;
        img.add_assign(&up)?;
        let data = img.as_mut_slice();
        for &(i, v) in &level.uncovered {
            data[i] = v;
        }
        current = img;
    }
    Ok(current)
}
