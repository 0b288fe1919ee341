//! Guided separation of a mixed X-ray image and the MCA baseline.
//!
//! Per texture patch the mixed X-ray `m` and the two photographs `y₁`, `y₂`
//! are coded jointly over
//!
//! ```text
//! [ m  ]   [ Φᶜ  Φᶜ  2Φ ] [ z₁ ]
//! [ y₁ ] = [ Ψᶜ  0   0  ] [ z₂ ]
//! [ y₂ ]   [ 0   Ψᶜ  0  ] [ v  ]
//! ```
//!
//! and each side's texture is `Φᶜzᵢ`. The shared innovation `Φv` is dropped
//! from both outputs.

use rayon::prelude::*;

use crate::dictlearn::{CoupledDictionaryTriple, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{normalize_columns, Mat};
use crate::patching::{build_pyramid, collapse_pyramid, PatchGrid, Pyramid, PyramidLevel, ScaleGeometry};
use crate::sparse::{budgeted_omp, BudgetPartition, SparseCode};

/// Multi-scale separation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationConfig {
    /// Finest scale first.
    pub scales: Vec<ScaleGeometry>,
    pub s_z: usize,
    pub s_v: usize,
    /// Share of the coarsest low-pass (and of uncovered border pixels)
    /// assigned to side 1.
    pub lowpass_split: f64,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig {
            scales: vec![
                ScaleGeometry::new(8, 4),
                ScaleGeometry::new(8, 4),
                ScaleGeometry::new(8, 7),
            ],
            s_z: 10,
            s_v: 8,
            lowpass_split: 0.5,
        }
    }
}

impl SeparationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::param("at least one scale is required"));
        }
        for g in &self.scales {
            g.validate(g.patch_side, g.patch_side)?;
        }
        if !(0.0..=1.0).contains(&self.lowpass_split) {
            return Err(Error::param(format!(
                "lowpass_split {} is outside [0, 1]",
                self.lowpass_split
            )));
        }
        Ok(())
    }
}

/// `b = [m; y₁; y₂]` and the normalized stacked dictionary.
#[derive(Clone, Debug)]
pub struct StackedSystem {
    pub b: Vec<f64>,
    /// Unit-norm columns; `theta · diag(column_scales)` is the raw matrix.
    pub theta: Mat,
    pub column_scales: Vec<f64>,
    /// Blocks `z₁` (γ, `s_z`), `z₂` (γ, `s_z`), `v` (d, `s_v`).
    pub partition: BudgetPartition,
}

/// The raw `3n × (2γ+d)` matrix `[[Φᶜ, Φᶜ, 2Φ], [Ψᶜ, 0, 0], [0, Ψᶜ, 0]]`.
pub fn stacked_matrix(dicts: &CoupledDictionaryTriple) -> Mat {
    let n = dicts.patch_dim();
    let (g, d) = (dicts.common_atoms(), dicts.innovation_atoms());
    let mut m = Mat::zeros(3 * n, 2 * g + d);
    for i in 0..n {
        let row = m.row_mut(i);
        row[..g].copy_from_slice(dicts.phi_c.row(i));
        row[g..2 * g].copy_from_slice(dicts.phi_c.row(i));
        for (dst, src) in row[2 * g..].iter_mut().zip(dicts.phi.row(i)) {
            *dst = 2.0 * src;
        }
        m.row_mut(n + i)[..g].copy_from_slice(dicts.psi_c.row(i));
        m.row_mut(2 * n + i)[g..2 * g].copy_from_slice(dicts.psi_c.row(i));
    }
    m
}

/// Per-scale solver state shared by all patches of the scale.
struct GuidedSolver<'a> {
    dicts: &'a CoupledDictionaryTriple,
    theta: Mat,
    column_scales: Vec<f64>,
    partition: BudgetPartition,
}

impl<'a> GuidedSolver<'a> {
    fn new(dicts: &'a CoupledDictionaryTriple, s_z: usize, s_v: usize) -> Result<Self> {
        let (g, d) = (dicts.common_atoms(), dicts.innovation_atoms());
        if s_z > g || s_v > d {
            return Err(Error::param(format!(
                "budgets ({s_z}, {s_v}) exceed block sizes ({g}, {d})"
            )));
        }
        let (theta, column_scales) = normalize_columns(&stacked_matrix(dicts))?;
        let partition = BudgetPartition::contiguous(&[(g, s_z), (g, s_z), (d, s_v)]);
        Ok(GuidedSolver {
            dicts,
            theta,
            column_scales,
            partition,
        })
    }

    fn stack(&self, m: &[f64], y1: &[f64], y2: &[f64]) -> Result<Vec<f64>> {
        let n = self.dicts.patch_dim();
        for (name, v) in [("m", m), ("y1", y1), ("y2", y2)] {
            if v.len() != n {
                return Err(Error::dims(format!(
                    "{name} has length {}, dictionaries expect {n}",
                    v.len()
                )));
            }
        }
        Ok([m, y1, y2].concat())
    }

    fn solve(&self, m: &[f64], y1: &[f64], y2: &[f64]) -> Result<PatchSeparation> {
        let b = self.stack(m, y1, y2)?;
        let code = budgeted_omp(&self.theta, &b, &self.partition)?;
        let g = self.dicts.common_atoms();
        let d = self.dicts.innovation_atoms();
        let entries: Vec<(usize, f64)> = code
            .entries()
            .iter()
            .map(|&(i, w)| (i, w / self.column_scales[i]))
            .collect();
        let full = SparseCode::new(2 * g + d, entries)?;
        let z1 = full.slice(0, g);
        let z2 = full.slice(g, 2 * g);
        let v = full.slice(2 * g, 2 * g + d);
        let x1 = z1.synthesize(&self.dicts.phi_c)?;
        let x2 = z2.synthesize(&self.dicts.phi_c)?;
        let innovation = v.synthesize(&self.dicts.phi)?;
        Ok(PatchSeparation {
            x1,
            x2,
            innovation,
            z1,
            z2,
            v,
            block_counts: self.partition.block_counts(&code),
        })
    }
}

/// Assembles `b` and the normalized stacked matrix for one patch.
pub fn build_stacked_system(
    m: &[f64],
    y1: &[f64],
    y2: &[f64],
    dicts: &CoupledDictionaryTriple,
    s_z: usize,
    s_v: usize,
) -> Result<StackedSystem> {
    let solver = GuidedSolver::new(dicts, s_z, s_v)?;
    let b = solver.stack(m, y1, y2)?;
    Ok(StackedSystem {
        b,
        theta: solver.theta,
        column_scales: solver.column_scales,
        partition: solver.partition,
    })
}

/// Result of separating one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSeparation {
    /// `Φᶜz₁`
    pub x1: Vec<f64>,
    /// `Φᶜz₂`
    pub x2: Vec<f64>,
    /// `Φv`, not part of either side.
    pub innovation: Vec<f64>,
    pub z1: SparseCode,
    pub z2: SparseCode,
    pub v: SparseCode,
    /// Selected atoms per block `(z₁, z₂, v)`.
    pub block_counts: Vec<usize>,
}

/// Separates one texture patch.
pub fn separate_patch(
    m: &[f64],
    y1: &[f64],
    y2: &[f64],
    dicts: &CoupledDictionaryTriple,
    s_z: usize,
    s_v: usize,
) -> Result<PatchSeparation> {
    GuidedSolver::new(dicts, s_z, s_v)?.solve(m, y1, y2)
}

/// Per-scale diagnostics of an image separation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleReport {
    pub scale: usize,
    pub patches: usize,
    /// Largest per-block atom count over all patches.
    pub max_block_counts: Vec<usize>,
    /// Per-block budgets the counts are bounded by.
    pub budgets: Vec<usize>,
    /// Discarded innovation textures `Φv` (guided separation only).
    pub innovation: Option<PatchGrid>,
}

/// Two full-resolution components and per-scale diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Separation {
    pub x1: Image,
    pub x2: Image,
    pub reports: Vec<ScaleReport>,
}

struct PatchResult {
    x1: Vec<f64>,
    x2: Vec<f64>,
    innovation: Option<Vec<f64>>,
    counts: Vec<usize>,
}

fn side_level(level: &PyramidLevel, texture: PatchGrid, share: f64) -> Result<PyramidLevel> {
    let mut out = level.with_texture(texture)?;
    for (_, v) in out.uncovered.iter_mut() {
        *v *= share;
    }
    Ok(out)
}

/// Separates every texture patch of every level of `mix` with `solve` and
/// collapses both sides. `solve(level, patch)` sees 0-based level indices.
fn orchestrate<F>(mix: &Pyramid, split: f64, budgets: &[Vec<usize>], solve: F) -> Result<Separation>
where
    F: Fn(usize, usize) -> Result<PatchResult> + Sync,
{
    let mut side1 = Vec::with_capacity(mix.levels.len());
    let mut side2 = Vec::with_capacity(mix.levels.len());
    let mut reports = Vec::with_capacity(mix.levels.len());
    for (li, level) in mix.levels.iter().enumerate() {
        let grid = &level.texture;
        let results: Vec<PatchResult> = (0..grid.len())
            .into_par_iter()
            .map(|p| solve(li, p))
            .collect::<Result<_>>()?;
        let geom = grid.geometry();
        let (gh, gw) = grid.grid_dims();
        let gather = |pick: &dyn Fn(&PatchResult) -> &[f64]| {
            let flat: Vec<f64> = results.iter().flat_map(|r| pick(r).iter().copied()).collect();
            PatchGrid::from_flat(geom.patch_side, geom.step, gh, gw, flat)
        };
        let t1 = gather(&|r| &r.x1)?;
        let t2 = gather(&|r| &r.x2)?;
        let innovation = if results.iter().all(|r| r.innovation.is_some()) && !results.is_empty() {
            Some(gather(&|r| r.innovation.as_deref().unwrap())?)
        } else {
            None
        };
        let mut max_block_counts = vec![0; budgets[li].len()];
        for r in &results {
            for (m, c) in max_block_counts.iter_mut().zip(&r.counts) {
                *m = (*m).max(*c);
            }
        }
        reports.push(ScaleReport {
            scale: level.scale,
            patches: results.len(),
            max_block_counts,
            budgets: budgets[li].clone(),
            innovation,
        });
        side1.push(side_level(level, t1, split)?);
        side2.push(side_level(level, t2, 1.0 - split)?);
    }
    let x1 = collapse_pyramid(&side1, &mix.coarsest.scaled(split))?;
    let x2 = collapse_pyramid(&side2, &mix.coarsest.scaled(1.0 - split))?;
    Ok(Separation { x1, x2, reports })
}

/// Picks the dictionaries of each level: entry `l` if present, otherwise the
/// last one supplied.
fn per_level<T>(items: &[T], levels: usize) -> Result<Vec<&T>> {
    if items.is_empty() {
        return Err(Error::param("no dictionaries supplied"));
    }
    Ok((0..levels).map(|l| &items[l.min(items.len() - 1)]).collect())
}

fn check_patch_dim(level: &PyramidLevel, n: usize) -> Result<()> {
    let want = level.texture.patch_dim();
    if want != n {
        return Err(Error::dims(format!(
            "scale {} has {want}-pixel patches but its dictionaries have {n} rows",
            level.scale
        )));
    }
    Ok(())
}

/// Guided multi-scale separation of `mix` using photographs `y1`, `y2`.
///
/// `dicts_per_scale[l]` serves level `l + 1`; levels beyond the list re-use
/// its last entry.
pub fn separate_image(
    mix: &Image,
    y1: &Image,
    y2: &Image,
    dicts_per_scale: &[CoupledDictionaryTriple],
    cfg: &SeparationConfig,
) -> Result<Separation> {
    cfg.validate()?;
    if mix.dims() != y1.dims() || mix.dims() != y2.dims() {
        return Err(Error::dims(format!(
            "image sizes differ: mixed {:?}, side 1 {:?}, side 2 {:?}",
            mix.dims(),
            y1.dims(),
            y2.dims()
        )));
    }
    let pm = build_pyramid(mix, &cfg.scales)?;
    let p1 = build_pyramid(y1, &cfg.scales)?;
    let p2 = build_pyramid(y2, &cfg.scales)?;
    let dicts = per_level(dicts_per_scale, pm.levels.len())?;
    let solvers = pm
        .levels
        .iter()
        .zip(&dicts)
        .map(|(level, d)| {
            check_patch_dim(level, d.patch_dim())?;
            GuidedSolver::new(d, cfg.s_z, cfg.s_v)
        })
        .collect::<Result<Vec<_>>>()?;
    let budgets: Vec<Vec<usize>> = solvers
        .iter()
        .map(|s| s.partition.blocks().iter().map(|b| b.budget).collect())
        .collect();
    orchestrate(&pm, cfg.lowpass_split, &budgets, |l, p| {
        let r = solvers[l].solve(
            pm.levels[l].texture.patch(p),
            p1.levels[l].texture.patch(p),
            p2.levels[l].texture.patch(p),
        )?;
        Ok(PatchResult {
            x1: r.x1,
            x2: r.x2,
            innovation: Some(r.innovation),
            counts: r.block_counts,
        })
    })
}

/// Dictionaries `Λ₁`, `Λ₂` of the two MCA components at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct McaDictionaries {
    pub lambda1: Mat,
    pub lambda2: Mat,
}

impl McaDictionaries {
    pub fn new(lambda1: Mat, lambda2: Mat) -> Result<Self> {
        if lambda1.rows() != lambda2.rows() {
            return Err(Error::dims(format!(
                "MCA dictionaries have {} and {} rows",
                lambda1.rows(),
                lambda2.rows()
            )));
        }
        for (name, m) in [("lambda1", &lambda1), ("lambda2", &lambda2)] {
            if let Some(j) = m
                .column_norms()
                .iter()
                .position(|v| (v - 1.0).abs() > UNIT_NORM_TOL)
            {
                return Err(Error::param(format!("{name} column {j} is not unit norm")));
            }
        }
        Ok(McaDictionaries { lambda1, lambda2 })
    }

    pub fn patch_dim(&self) -> usize {
        self.lambda1.rows()
    }
}

struct McaSolver<'a> {
    dicts: &'a McaDictionaries,
    theta: Mat,
    partition: BudgetPartition,
}

impl<'a> McaSolver<'a> {
    fn new(dicts: &'a McaDictionaries, s1: usize, s2: usize) -> Result<Self> {
        let (d1, d2) = (dicts.lambda1.cols(), dicts.lambda2.cols());
        if s1 > d1 || s2 > d2 {
            return Err(Error::param(format!(
                "budgets ({s1}, {s2}) exceed dictionary sizes ({d1}, {d2})"
            )));
        }
        Ok(McaSolver {
            dicts,
            theta: Mat::hstack(&[&dicts.lambda1, &dicts.lambda2])?,
            partition: BudgetPartition::contiguous(&[(d1, s1), (d2, s2)]),
        })
    }

    fn solve(&self, m: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
        let code = budgeted_omp(&self.theta, m, &self.partition)?;
        let d1 = self.dicts.lambda1.cols();
        let mut x1 = vec![0.0; m.len()];
        let mut x2 = vec![0.0; m.len()];
        for &(i, w) in code.entries() {
            let (target, col) = if i < d1 {
                (&mut x1, self.dicts.lambda1.column(i))
            } else {
                (&mut x2, self.dicts.lambda2.column(i - d1))
            };
            for (t, c) in target.iter_mut().zip(&col) {
                *t += w * c;
            }
        }
        Ok((x1, x2, self.partition.block_counts(&code)))
    }
}

/// Separates one patch as `m ≈ Λ₁z₁ + Λ₂z₂`, returning `(Λ₁z₁, Λ₂z₂)`.
pub fn mca_separate_patch(
    m: &[f64],
    dicts: &McaDictionaries,
    s1: usize,
    s2: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    McaSolver::new(dicts, s1, s2)?.solve(m).map(|(a, b, _)| (a, b))
}

/// Multi-scale MCA baseline. Uses the scales and `lowpass_split` of `cfg`;
/// the guided budgets `s_z`, `s_v` are ignored in favour of `s1`, `s2`.
pub fn mca_separate(
    mix: &Image,
    dicts_per_scale: &[McaDictionaries],
    s1: usize,
    s2: usize,
    cfg: &SeparationConfig,
) -> Result<Separation> {
    cfg.validate()?;
    let pm = build_pyramid(mix, &cfg.scales)?;
    let dicts = per_level(dicts_per_scale, pm.levels.len())?;
    let solvers = pm
        .levels
        .iter()
        .zip(&dicts)
        .map(|(level, d)| {
            check_patch_dim(level, d.patch_dim())?;
            McaSolver::new(d, s1, s2)
        })
        .collect::<Result<Vec<_>>>()?;
    let budgets = vec![vec![s1, s2]; solvers.len()];
    orchestrate(&pm, cfg.lowpass_split, &budgets, |l, p| {
        let (x1, x2, counts) = solvers[l].solve(pm.levels[l].texture.patch(p))?;
        Ok(PatchResult {
            x1,
            x2,
            innovation: None,
            counts,
        })
    })
}
