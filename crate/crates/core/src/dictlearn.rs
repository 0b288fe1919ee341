//! Coupled dictionary learning.
//!
//! Learns a visual common dictionary `Ψᶜ`, an X-ray common dictionary `Φᶜ`
//! and an X-ray innovation dictionary `Φ` from co-located visual/X-ray
//! texture patches so that `y ≈ Ψᶜz` and `x ≈ Φᶜz + Φv` with sparse `z`,
//! `v`. Training alternates budgeted pursuit over the stacked system
//! `[[Ψᶜ, 0], [Φᶜ, Φ]]` with closed-form least-squares dictionary updates.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{initial_dictionary, normalize_columns, norm2, solve_spd, Mat};
use crate::patching::{build_pyramid, ScaleGeometry};
use crate::sparse::{budgeted_omp, BudgetPartition, SparseCode};

/// Column norms must be within this of 1 for a triple to be accepted.
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// Per-scale dictionaries `(Ψᶜ, Φᶜ, Φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledDictionaryTriple {
    /// Visual common dictionary, `n × γ`.
    pub psi_c: Mat,
    /// X-ray common dictionary, `n × γ`.
    pub phi_c: Mat,
    /// X-ray innovation dictionary, `n × d`.
    pub phi: Mat,
    /// 1-based pyramid scale the triple was trained for.
    pub scale: usize,
}

impl CoupledDictionaryTriple {
    pub fn new(psi_c: Mat, phi_c: Mat, phi: Mat, scale: usize) -> Result<Self> {
        let n = psi_c.rows();
        if phi_c.rows() != n || phi.rows() != n {
            return Err(Error::dims(format!(
                "dictionary row counts differ: {}, {}, {}",
                n,
                phi_c.rows(),
                phi.rows()
            )));
        }
        if psi_c.cols() != phi_c.cols() {
            return Err(Error::dims(format!(
                "common dictionaries have {} and {} atoms",
                psi_c.cols(),
                phi_c.cols()
            )));
        }
        for (name, m) in [("psi_c", &psi_c), ("phi_c", &phi_c), ("phi", &phi)] {
            if let Some(j) = m
                .column_norms()
                .iter()
                .position(|v| (v - 1.0).abs() > UNIT_NORM_TOL)
            {
                return Err(Error::param(format!("{name} column {j} is not unit norm")));
            }
        }
        Ok(CoupledDictionaryTriple {
            psi_c,
            phi_c,
            phi,
            scale,
        })
    }

    /// ODCT initialization of all three dictionaries.
    pub fn initial(n: usize, gamma: usize, d: usize) -> Result<Self> {
        let common = initial_dictionary(n, gamma)?;
        let innovation = initial_dictionary(n, d)?;
        CoupledDictionaryTriple::new(common.clone(), common, innovation, 1)
    }

    pub fn patch_dim(&self) -> usize {
        self.psi_c.rows()
    }

    /// γ
    pub fn common_atoms(&self) -> usize {
        self.psi_c.cols()
    }

    /// d
    pub fn innovation_atoms(&self) -> usize {
        self.phi.cols()
    }

    /// The X-ray dictionary `[Φᶜ Φ]`.
    pub fn xray_dictionary(&self) -> Mat {
        Mat::hstack(&[&self.phi_c, &self.phi]).expect("row counts checked on construction")
    }

    /// `[[Ψᶜ, 0], [Φᶜ, Φ]]`, `2n × (γ+d)`.
    pub fn stacked(&self) -> Mat {
        let n = self.patch_dim();
        let (g, d) = (self.common_atoms(), self.innovation_atoms());
        let mut m = Mat::zeros(2 * n, g + d);
        for i in 0..n {
            m.row_mut(i)[..g].copy_from_slice(self.psi_c.row(i));
            let row = m.row_mut(n + i);
            row[..g].copy_from_slice(self.phi_c.row(i));
            row[g..].copy_from_slice(self.phi.row(i));
        }
        m
    }
}

/// Co-located X-ray (`x`) and visual (`y`) texture patches, one per column.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub x: Mat,
    pub y: Mat,
}

impl TrainingSet {
    pub fn new(x: Mat, y: Mat) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::dims(format!(
                "X is {:?} but Y is {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let n = x.rows() as f64;
        for m in [&x, &y] {
            let mut sums = vec![0.0; m.cols()];
            for i in 0..m.rows() {
                sums.iter_mut().zip(m.row(i)).for_each(|(s, v)| *s += v);
            }
            if let Some(j) = sums.iter().position(|s| (s / n).abs() > 1e-10) {
                return Err(Error::param(format!("training column {j} is not DC-free")));
            }
        }
        Ok(TrainingSet { x, y })
    }

    pub fn patch_dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    /// Common-code budget per column.
    pub s_z: usize,
    /// Innovation-code budget per column.
    pub s_v: usize,
    pub iterations: usize,
    /// Stop when the relative change of the post-coding objective between
    /// iterations falls below this. Zero disables early stopping.
    pub objective_tol: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            s_z: 10,
            s_v: 8,
            iterations: 50,
            objective_tol: 1e-4,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self, n: usize, gamma: usize, d: usize) -> Result<()> {
        if self.s_z > gamma {
            return Err(Error::param(format!("s_z = {} exceeds γ = {gamma}", self.s_z)));
        }
        if self.s_v > d {
            return Err(Error::param(format!("s_v = {} exceeds d = {d}", self.s_v)));
        }
        if self.s_z + self.s_v > 2 * n {
            return Err(Error::param(format!(
                "s_z + s_v = {} exceeds 2n = {}",
                self.s_z + self.s_v,
                2 * n
            )));
        }
        if self.objective_tol.is_nan() || self.objective_tol < 0.0 {
            return Err(Error::param("objective_tol must be non-negative"));
        }
        Ok(())
    }
}

/// Per-column sparse codes of the stacked system, coefficients referring to
/// the original (un-normalized) stacked columns.
pub fn coupled_codes(
    train: &TrainingSet,
    dicts: &CoupledDictionaryTriple,
    cfg: &LearnConfig,
) -> Result<Vec<SparseCode>> {
    let n = dicts.patch_dim();
    if train.patch_dim() != n {
        return Err(Error::dims(format!(
            "training patches have {} pixels, dictionaries {n}",
            train.patch_dim()
        )));
    }
    let (gamma, d) = (dicts.common_atoms(), dicts.innovation_atoms());
    cfg.validate(n, gamma, d)?;
    let (theta, scales) = normalize_columns(&dicts.stacked())?;
    let partition = BudgetPartition::contiguous(&[(gamma, cfg.s_z), (d, cfg.s_v)]);
    let xt = train.x.transpose();
    let yt = train.y.transpose();
    (0..train.len())
        .into_par_iter()
        .map(|tau| {
            let mut b = Vec::with_capacity(2 * n);
            b.extend_from_slice(yt.row(tau));
            b.extend_from_slice(xt.row(tau));
            let code = budgeted_omp(&theta, &b, &partition)?;
            let entries = code
                .entries()
                .iter()
                .map(|&(i, w)| (i, w / scales[i]))
                .collect();
            SparseCode::new(gamma + d, entries)
        })
        .collect()
}

/// Solves the per-column coupled sparse coding problem for the whole
/// training set, returning `(Z, V)`.
pub fn coupled_sparse_coding(
    train: &TrainingSet,
    dicts: &CoupledDictionaryTriple,
    cfg: &LearnConfig,
) -> Result<(Mat, Mat)> {
    let codes = coupled_codes(train, dicts, cfg)?;
    Ok(split_codes(&codes, dicts.common_atoms(), dicts.innovation_atoms()))
}

fn split_codes(codes: &[SparseCode], gamma: usize, d: usize) -> (Mat, Mat) {
    let t = codes.len();
    let mut z = Mat::zeros(gamma, t);
    let mut v = Mat::zeros(d, t);
    for (tau, c) in codes.iter().enumerate() {
        for &(i, w) in c.entries() {
            if i < gamma {
                z[(i, tau)] = w;
            } else {
                v[(i - gamma, tau)] = w;
            }
        }
    }
    (z, v)
}

/// Nonzeros of each column of a dense code matrix.
fn sparse_columns(codes: &Mat) -> Vec<Vec<(usize, f64)>> {
    let mut cols = vec![Vec::new(); codes.cols()];
    for k in 0..codes.rows() {
        for (tau, &w) in codes.row(k).iter().enumerate() {
            if w != 0.0 {
                cols[tau].push((k, w));
            }
        }
    }
    cols
}

/// Closed-form dictionary update: unit-norm columns plus the norms of the
/// raw least-squares solution. Atoms whose code row is all zero are "dead":
/// their column is left zero with norm 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DictUpdate {
    pub dictionary: Mat,
    pub norms: Vec<f64>,
    pub dead: Vec<usize>,
}

impl DictUpdate {
    /// The un-normalized least-squares solution.
    pub fn raw(&self) -> Mat {
        let mut m = self.dictionary.clone();
        m.scale_columns(&self.norms);
        m
    }
}

/// `target · codesᵀ (codes codesᵀ + λI)⁻¹`, λ = 1e-10·trace/k.
fn closed_form(target: &Mat, codes: &Mat) -> Result<DictUpdate> {
    if target.cols() != codes.cols() {
        return Err(Error::dims(format!(
            "{} training columns but {} code columns",
            target.cols(),
            codes.cols()
        )));
    }
    let (n, k) = (target.rows(), codes.rows());
    let cols = sparse_columns(codes);
    if cols.iter().all(Vec::is_empty) {
        return Err(Error::param("all codes are zero; dictionary update is undefined"));
    }
    let tt = target.transpose();
    let mut gram = Mat::zeros(k, k);
    // rhsᵀ = codes · targetᵀ, k × n
    let mut rhs_t = Mat::zeros(k, n);
    for (tau, nz) in cols.iter().enumerate() {
        let col = tt.row(tau);
        for &(a, wa) in nz {
            for &(b, wb) in nz {
                gram[(a, b)] += wa * wb;
            }
            for (r, x) in rhs_t.row_mut(a).iter_mut().zip(col) {
                *r += wa * x;
            }
        }
    }
    let trace: f64 = (0..k).map(|i| gram[(i, i)]).sum();
    let lambda = 1e-10 * trace / k as f64;
    for i in 0..k {
        gram[(i, i)] += lambda;
    }
    let sol = solve_spd(&gram, &rhs_t)?.transpose();

    let mut used = vec![false; k];
    for nz in &cols {
        for &(a, _) in nz {
            used[a] = true;
        }
    }
    let mut norms = sol.column_norms();
    let mut dictionary = sol;
    let mut inv = vec![0.0; k];
    for a in 0..k {
        if used[a] && norms[a] > 0.0 {
            inv[a] = 1.0 / norms[a];
        } else {
            norms[a] = 0.0;
        }
    }
    dictionary.scale_columns(&inv);
    let dead = (0..k).filter(|&a| norms[a] == 0.0).collect();
    Ok(DictUpdate {
        dictionary,
        norms,
        dead,
    })
}

/// Least-squares update of `Ψᶜ` for fixed common codes `Z`.
pub fn update_psi(y: &Mat, z: &Mat) -> Result<DictUpdate> {
    closed_form(y, z)
}

/// Least-squares update of `[Φᶜ Φ]` for fixed codes `[Z; V]`.
pub fn update_phi(x: &Mat, z: &Mat, v: &Mat) -> Result<DictUpdate> {
    if z.cols() != v.cols() {
        return Err(Error::dims("Z and V have different column counts"));
    }
    let mut stacked = Mat::zeros(z.rows() + v.rows(), z.cols());
    for i in 0..z.rows() {
        stacked.row_mut(i).copy_from_slice(z.row(i));
    }
    for i in 0..v.rows() {
        stacked.row_mut(z.rows() + i).copy_from_slice(v.row(i));
    }
    closed_form(x, &stacked)
}

/// `(Y − Ψᶜ Z, X − Φᶜ Z − Φ V)`.
fn residuals(train: &TrainingSet, psi_c: &Mat, phi_c: &Mat, phi: &Mat, z: &Mat, v: &Mat) -> (Mat, Mat) {
    let mut ey = train.y.clone();
    let mut ex = train.x.clone();
    let zc = sparse_columns(z);
    let vc = sparse_columns(v);
    let n = train.patch_dim();
    for i in 0..n {
        let (pr, fr, ir) = (psi_c.row(i), phi_c.row(i), phi.row(i));
        let eyr = ey.row_mut(i);
        for (tau, nz) in zc.iter().enumerate() {
            for &(k, w) in nz {
                eyr[tau] -= pr[k] * w;
            }
        }
        let exr = ex.row_mut(i);
        for (tau, nz) in zc.iter().enumerate() {
            for &(k, w) in nz {
                exr[tau] -= fr[k] * w;
            }
            for &(k, w) in &vc[tau] {
                exr[tau] -= ir[k] * w;
            }
        }
    }
    (ey, ex)
}

/// `½‖Y − ΨᶜZ‖²_F + ½‖X − ΦᶜZ − ΦV‖²_F`.
pub fn coupled_objective(
    train: &TrainingSet,
    psi_c: &Mat,
    phi_c: &Mat,
    phi: &Mat,
    z: &Mat,
    v: &Mat,
) -> f64 {
    let (ey, ex) = residuals(train, psi_c, phi_c, phi, z, v);
    0.5 * (ey.frobenius_sq() + ex.frobenius_sq())
}

/// Objective values recorded during one training iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    /// After sparse coding with the current dictionaries.
    pub coded: f64,
    /// After the closed-form dictionary updates, codes unchanged.
    pub updated: f64,
    /// After re-normalizing atoms, refitting common code scales and
    /// replacing dead atoms.
    pub normalized: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dictionaries: CoupledDictionaryTriple,
    pub trace: Vec<IterationRecord>,
}

/// Indices of training columns ordered by decreasing squared residual,
/// ties to the lower index.
fn worst_columns(ey: Option<&Mat>, ex: &Mat) -> Vec<usize> {
    let t = ex.cols();
    let mut err = vec![0.0; t];
    for m in ey.into_iter().chain(std::iter::once(ex)) {
        for i in 0..m.rows() {
            err.iter_mut().zip(m.row(i)).for_each(|(e, v)| *e += v * v);
        }
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| err[b].total_cmp(&err[a]).then(a.cmp(&b)));
    order
}

/// Coupled dictionary learning from an ODCT start.
pub fn train(
    train: &TrainingSet,
    gamma: usize,
    d: usize,
    cfg: &LearnConfig,
) -> Result<TrainOutput> {
    let n = train.patch_dim();
    cfg.validate(n, gamma, d)?;
    let mut dicts = CoupledDictionaryTriple::initial(n, gamma, d)?;
    let mut trace: Vec<IterationRecord> = Vec::new();

    for it in 0..cfg.iterations {
        let (mut z, mut v) = coupled_sparse_coding(train, &dicts, cfg)?;
        let coded = coupled_objective(train, &dicts.psi_c, &dicts.phi_c, &dicts.phi, &z, &v);

        let psi_up = update_psi(&train.y, &z)?;
        let phi_up = update_phi(&train.x, &z, &v)?;
        let psi_raw = psi_up.raw();
        let phi_bar_raw = phi_up.raw();
        let phi_c_raw = phi_bar_raw.column_range(0, gamma);
        let phi_raw = phi_bar_raw.column_range(gamma, gamma + d);
        let (mut ey, mut ex) = residuals(train, &psi_raw, &phi_c_raw, &phi_raw, &z, &v);
        let updated = 0.5 * (ey.frobenius_sq() + ex.frobenius_sq());

        let mut psi_c = psi_up.dictionary;
        let mut phi_c = phi_up.dictionary.column_range(0, gamma);
        let mut phi = phi_up.dictionary.column_range(gamma, gamma + d);

        // Innovation atoms: scaling the code row by the atom norm keeps ΦV.
        for k in 0..d {
            let s = phi_up.norms[gamma + k];
            v.row_mut(k).iter_mut().for_each(|w| *w *= s);
        }

        // Common atoms: both unit-norm atoms share one code row, so the
        // products cannot both be preserved. Refit the row scale that
        // minimizes the objective, one row at a time, tracking residuals.
        for j in 0..gamma {
            let (a, b) = (psi_up.norms[j], phi_up.norms[j]);
            if a == 0.0 || b == 0.0 {
                z.row_mut(j).iter_mut().for_each(|w| *w = 0.0);
                continue;
            }
            let support: Vec<(usize, f64)> = z
                .row(j)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(t, w)| (t, *w))
                .collect();
            let q: f64 = support.iter().map(|(_, w)| w * w).sum();
            let mut p = 0.0;
            for i in 0..n {
                let (ps, ph) = (psi_c[(i, j)], phi_c[(i, j)]);
                for &(t, w) in &support {
                    p += (ps * ey[(i, t)] + ph * ex[(i, t)]) * w;
                }
            }
            let s = 0.5 * (a + b) + p / (2.0 * q);
            for i in 0..n {
                let (ps, ph) = (psi_c[(i, j)], phi_c[(i, j)]);
                for &(t, w) in &support {
                    ey[(i, t)] += ps * (a - s) * w;
                    ex[(i, t)] += ph * (b - s) * w;
                }
            }
            z.row_mut(j).iter_mut().for_each(|w| *w *= s);
        }

        // Dead atoms take the worst-reconstructed training columns.
        let dead_common: Vec<usize> = (0..gamma)
            .filter(|&j| psi_up.norms[j] == 0.0 || phi_up.norms[j] == 0.0)
            .collect();
        let dead_innov: Vec<usize> = (0..d).filter(|&k| phi_up.norms[gamma + k] == 0.0).collect();
        if !dead_common.is_empty() || !dead_innov.is_empty() {
            let order = worst_columns(Some(&ey), &ex);
            let mut candidates = order.into_iter();
            for &j in &dead_common {
                let mut replaced = false;
                for tau in candidates.by_ref() {
                    let (yc, xc) = (train.y.column(tau), train.x.column(tau));
                    let (ny, nx) = (norm2(&yc), norm2(&xc));
                    if ny > 0.0 && nx > 0.0 {
                        psi_c.set_column(j, &yc.iter().map(|v| v / ny).collect::<Vec<_>>());
                        phi_c.set_column(j, &xc.iter().map(|v| v / nx).collect::<Vec<_>>());
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    psi_c.set_column(j, &dicts.psi_c.column(j));
                    phi_c.set_column(j, &dicts.phi_c.column(j));
                }
            }
            for &k in &dead_innov {
                let mut replaced = false;
                for tau in candidates.by_ref() {
                    let xc = train.x.column(tau);
                    let nx = norm2(&xc);
                    if nx > 0.0 {
                        phi.set_column(k, &xc.iter().map(|v| v / nx).collect::<Vec<_>>());
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    phi.set_column(k, &dicts.phi.column(k));
                }
            }
        }

        let normalized = coupled_objective(train, &psi_c, &phi_c, &phi, &z, &v);
        log::debug!(
            "iteration {}: coded {coded:.6e} updated {updated:.6e} normalized {normalized:.6e}",
            it + 1
        );
        trace.push(IterationRecord {
            coded,
            updated,
            normalized,
        });
        dicts = CoupledDictionaryTriple::new(psi_c, phi_c, phi, dicts.scale)?;

        if it > 0 && cfg.objective_tol > 0.0 {
            let prev = trace[it - 1].coded;
            let change = (prev - coded).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if change < cfg.objective_tol {
                break;
            }
        }
    }
    Ok(TrainOutput {
        dictionaries: dicts,
        trace,
    })
}

/// Output of single-modality dictionary learning.
#[derive(Clone, Debug)]
pub struct SingleTrainOutput {
    pub dictionary: Mat,
    /// `½‖X − DA‖²_F` after each coding step.
    pub trace: Vec<f64>,
}

/// Learns one dictionary for `data` (columns are signals) by alternating OMP
/// coding and the closed-form least-squares update. Used for the trained
/// morphological component analysis baseline.
pub fn train_single(
    data: &Mat,
    atoms: usize,
    sparsity: usize,
    iterations: usize,
    objective_tol: f64,
) -> Result<SingleTrainOutput> {
    let n = data.rows();
    if sparsity > atoms || sparsity > n {
        return Err(Error::param(format!(
            "sparsity {sparsity} exceeds {atoms} atoms or dimension {n}"
        )));
    }
    let mut dict = initial_dictionary(n, atoms)?;
    let mut trace = Vec::new();
    let dt = data.transpose();
    let partition = BudgetPartition::single(atoms, sparsity);
    for it in 0..iterations {
        let codes: Vec<SparseCode> = (0..data.cols())
            .into_par_iter()
            .map(|tau| budgeted_omp(&dict, dt.row(tau), &partition))
            .collect::<Result<_>>()?;
        let mut a = Mat::zeros(atoms, data.cols());
        for (tau, c) in codes.iter().enumerate() {
            for &(k, w) in c.entries() {
                a[(k, tau)] = w;
            }
        }
        let fit = dict.matmul(&a)?;
        let obj = 0.5
            * data
                .as_slice()
                .iter()
                .zip(fit.as_slice())
                .map(|(x, f)| (x - f) * (x - f))
                .sum::<f64>();
        trace.push(obj);

        let up = closed_form(data, &a)?;
        let mut next = up.dictionary.clone();
        if !up.dead.is_empty() {
            let resid = {
                let f = up.raw().matmul(&a)?;
                let diff: Vec<f64> = data
                    .as_slice()
                    .iter()
                    .zip(f.as_slice())
                    .map(|(x, f)| x - f)
                    .collect();
                Mat::from_row_major(n, data.cols(), diff)?
            };
            let mut candidates = worst_columns(None, &resid).into_iter();
            for &k in &up.dead {
                let mut replaced = false;
                for tau in candidates.by_ref() {
                    let c = data.column(tau);
                    let nc = norm2(&c);
                    if nc > 0.0 {
                        next.set_column(k, &c.iter().map(|v| v / nc).collect::<Vec<_>>());
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    next.set_column(k, &dict.column(k));
                }
            }
        }
        dict = next;
        if it > 0 && objective_tol > 0.0 {
            let prev = trace[it - 1];
            if (prev - obj).abs() / prev.abs().max(f64::MIN_POSITIVE) < objective_tol {
                break;
            }
        }
    }
    Ok(SingleTrainOutput {
        dictionary: dict,
        trace,
    })
}

/// Draws `t` co-located texture patch pairs from `(visual, xray)` images at
/// pyramid scale `scale` (1-based) of the given geometry.
///
/// Positions are sampled uniformly without replacement; when `t` exceeds the
/// number of available positions they are sampled with replacement and a
/// warning is logged.
pub fn sample_training_patches(
    pairs: &[(Image, Image)],
    t: usize,
    scales: &[ScaleGeometry],
    scale: usize,
    seed: u64,
) -> Result<TrainingSet> {
    if scale == 0 || scale > scales.len() {
        return Err(Error::param(format!(
            "scale {scale} outside 1..={}",
            scales.len()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::param("no training images"));
    }
    let geoms = &scales[..scale];
    let mut visual = Vec::new();
    let mut xray = Vec::new();
    for (i, (vis, xr)) in pairs.iter().enumerate() {
        if vis.dims() != xr.dims() {
            return Err(Error::dims(format!(
                "pair {i}: visual {:?} vs X-ray {:?}",
                vis.dims(),
                xr.dims()
            )));
        }
        let pv = build_pyramid(vis, geoms)?;
        let px = build_pyramid(xr, geoms)?;
        visual.push(pv.levels.into_iter().last().expect("scale >= 1").texture);
        xray.push(px.levels.into_iter().last().expect("scale >= 1").texture);
    }
    let n = scales[scale - 1].patch_dim();
    let offsets: Vec<usize> = visual
        .iter()
        .scan(0, |acc, g| {
            let start = *acc;
            *acc += g.len();
            Some(start)
        })
        .collect();
    let total: usize = visual.iter().map(|g| g.len()).sum();
    if total == 0 {
        return Err(Error::param("training images yield no patches"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if t <= total {
        index::sample(&mut rng, total, t).into_vec()
    } else {
        log::warn!(
            "requested {t} training patches but only {total} positions exist; sampling with replacement"
        );
        (0..t).map(|_| rng.random_range(0..total)).collect()
    };
    let mut x = Mat::zeros(n, t);
    let mut y = Mat::zeros(n, t);
    for (col, &p) in picks.iter().enumerate() {
        let img = offsets.partition_point(|&o| o <= p) - 1;
        let local = p - offsets[img];
        x.set_column(col, xray[img].patch(local));
        y.set_column(col, visual[img].patch(local));
    }
    TrainingSet::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        Mat::from_row_major(rows, cols, data).unwrap()
    }

    fn zero_mean_unit(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Mat {
        let mut m = gaussian(rng, n, k);
        for j in 0..k {
            let mut c = m.column(j);
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter_mut().for_each(|v| *v -= mean);
            m.set_column(j, &c);
        }
        normalize_columns(&m).unwrap().0
    }

    #[test]
    fn zero_budgets_give_zero_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dicts = CoupledDictionaryTriple::new(
            zero_mean_unit(&mut rng, 16, 8),
            zero_mean_unit(&mut rng, 16, 8),
            zero_mean_unit(&mut rng, 16, 4),
            1,
        )
        .unwrap();
        let x = dicts.phi_c.column_range(0, 3);
        let y = dicts.psi_c.column_range(0, 3);
        let ts = TrainingSet::new(x, y).unwrap();
        let cfg = LearnConfig { s_z: 0, s_v: 0, ..LearnConfig::default() };
        let (z, v) = coupled_sparse_coding(&ts, &dicts, &cfg).unwrap();
        assert!(z.as_slice().iter().all(|&w| w == 0.0));
        assert!(v.as_slice().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn zero_columns_give_zero_codes() {
        let dicts = CoupledDictionaryTriple::initial(16, 16, 16).unwrap();
        let ts = TrainingSet::new(Mat::zeros(16, 2), Mat::zeros(16, 2)).unwrap();
        let cfg = LearnConfig { s_z: 2, s_v: 1, ..LearnConfig::default() };
        let (z, v) = coupled_sparse_coding(&ts, &dicts, &cfg).unwrap();
        assert!(z.as_slice().iter().all(|&w| w == 0.0));
        assert!(v.as_slice().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn planted_code_recovery_orthonormal() {
        // Stacked system with orthonormal columns: Ψᶜ = [e0 e1], Φᶜ = [e2 e3],
        // Φ = [e4] in R^8 (already DC-free is not required for coding).
        let n = 8;
        let e = |i: usize| {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            c
        };
        let psi = Mat::from_columns(n, &[e(0), e(1)]).unwrap();
        let phc = Mat::from_columns(n, &[e(2), e(3)]).unwrap();
        let ph = Mat::from_columns(n, &[e(4)]).unwrap();
        let dicts = CoupledDictionaryTriple::new(psi, phc, ph, 1).unwrap();
        // z = (0, 1.5), v = (-2)
        let mut y = vec![0.0; n];
        y[1] = 1.5;
        let mut x = vec![0.0; n];
        x[3] = 1.5;
        x[4] = -2.0;
        let codes_in = TrainingSet {
            x: Mat::from_columns(n, &[x]).unwrap(),
            y: Mat::from_columns(n, &[y]).unwrap(),
        };
        let cfg = LearnConfig { s_z: 1, s_v: 1, ..LearnConfig::default() };
        let (z, v) = coupled_sparse_coding(&codes_in, &dicts, &cfg).unwrap();
        assert!(z[(0, 0)].abs() < 1e-10);
        assert!((z[(1, 0)] - 1.5).abs() < 1e-10);
        assert!((v[(0, 0)] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn update_psi_identity_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = gaussian(&mut rng, 6, 4);
        let up = update_psi(&y, &Mat::identity(4)).unwrap();
        let (want, norms) = normalize_columns(&y).unwrap();
        assert!(up.dictionary.max_abs_diff(&want) < 1e-8);
        for (a, b) in up.norms.iter().zip(&norms) {
            assert!((a - b).abs() < 1e-8 * b);
        }
        assert!(up.dead.is_empty());
    }

    #[test]
    fn update_psi_planted_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = zero_mean_unit(&mut rng, 8, 5);
        let z = gaussian(&mut rng, 5, 40);
        let y = psi.matmul(&z).unwrap();
        let up = update_psi(&y, &z).unwrap();
        assert!(up.dictionary.max_abs_diff(&psi) < 1e-8);
    }

    #[test]
    fn update_rejects_zero_codes() {
        assert!(update_psi(&Mat::zeros(4, 3), &Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn update_phi_planted_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phc = zero_mean_unit(&mut rng, 8, 4);
        let ph = zero_mean_unit(&mut rng, 8, 3);
        let z = gaussian(&mut rng, 4, 50);
        let v = gaussian(&mut rng, 3, 50);
        let x = phc.matmul(&z).unwrap();
        let x2 = ph.matmul(&v).unwrap();
        let x = Mat::from_row_major(
            8,
            50,
            x.as_slice().iter().zip(x2.as_slice()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let up = update_phi(&x, &z, &v).unwrap();
        assert!(up.dictionary.column_range(0, 4).max_abs_diff(&phc) < 1e-8);
        assert!(up.dictionary.column_range(4, 7).max_abs_diff(&ph) < 1e-8);
    }

    #[test]
    fn update_phi_zero_innovation_marks_dead() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 6, 10);
        let z = gaussian(&mut rng, 3, 10);
        let v = Mat::zeros(2, 10);
        let up = update_phi(&x, &z, &v).unwrap();
        assert_eq!(up.dead, vec![3, 4]);
        let psi_like = update_psi(&x, &z).unwrap();
        assert!(up.dictionary.column_range(0, 3).max_abs_diff(&psi_like.dictionary) < 1e-10);
    }

    #[test]
    fn update_never_increases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = gaussian(&mut rng, 8, 30);
        let z = gaussian(&mut rng, 5, 30);
        let psi0 = gaussian(&mut rng, 8, 5);
        let obj = |psi: &Mat| {
            let f = psi.matmul(&z).unwrap();
            y.as_slice().iter().zip(f.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let up = update_psi(&y, &z).unwrap();
        assert!(obj(&up.raw()) <= obj(&psi0) + 1e-9);
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = zero_mean_unit(&mut rng, 16, 20);
        let y = zero_mean_unit(&mut rng, 16, 20);
        let ts = TrainingSet::new(x, y).unwrap();
        let cfg = LearnConfig { s_z: 2, s_v: 1, iterations: 0, ..LearnConfig::default() };
        let out = train(&ts, 16, 4, &cfg).unwrap();
        assert_eq!(out.dictionaries, CoupledDictionaryTriple::initial(16, 16, 4).unwrap());
        assert!(out.trace.is_empty());
    }

    #[test]
    fn training_keeps_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = zero_mean_unit(&mut rng, 16, 12);
        let phc = zero_mean_unit(&mut rng, 16, 12);
        let ph = zero_mean_unit(&mut rng, 16, 4);
        let t = 300;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..t {
            let mut z = vec![0.0; 12];
            for _ in 0..2 {
                z[rng.random_range(0..12)] = rng.sample::<f64, _>(StandardNormal);
            }
            let mut v = vec![0.0; 4];
            v[rng.random_range(0..4)] = rng.sample::<f64, _>(StandardNormal);
            ys.push(psi.matvec(&z));
            let a = phc.matvec(&z);
            let b = ph.matvec(&v);
            xs.push(a.iter().zip(&b).map(|(p, q)| p + q).collect());
        }
        let ts = TrainingSet::new(Mat::from_columns(16, &xs).unwrap(), Mat::from_columns(16, &ys).unwrap()).unwrap();
        let cfg = LearnConfig { s_z: 2, s_v: 1, iterations: 8, objective_tol: 0.0, seed: 1 };
        let out = train(&ts, 12, 4, &cfg).unwrap();
        assert_eq!(out.trace.len(), 8);
        for r in &out.trace {
            assert!(r.updated <= r.coded + 1e-9, "{r:?}");
        }
        let d = &out.dictionaries;
        for m in [&d.psi_c, &d.phi_c, &d.phi] {
            for c in m.column_norms() {
                assert!((c - 1.0).abs() < 1e-10);
            }
        }
        let codes = coupled_codes(&ts, d, &cfg).unwrap();
        let p = BudgetPartition::contiguous(&[(12, 2), (4, 1)]);
        assert!(codes.iter().all(|c| p.complies(c)));
        let again = train(&ts, 12, 4, &cfg).unwrap();
        assert_eq!(again.trace, out.trace);
    }

    #[test]
    fn sampling_small_enumeration() {
        let vis = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64);
        let xr = Image::from_fn(8, 8, |r, c| ((r + 2 * c) % 5) as f64);
        let scales = [ScaleGeometry::new(8, 1)];
        let ts = sample_training_patches(&[(vis, xr)], 4, &scales, 1, 9).unwrap();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts.patch_dim(), 64);
    }

    #[test]
    fn sampling_constant_images_zero_columns() {
        let pair = (Image::filled(16, 16, 0.3), Image::filled(16, 16, 0.8));
        let ts = sample_training_patches(&[pair], 10, &[ScaleGeometry::new(4, 2)], 1, 0).unwrap();
        assert!(ts.x.as_slice().iter().chain(ts.y.as_slice()).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn sampling_is_seeded_and_checks_sizes() {
        let vis = Image::from_fn(20, 20, |r, c| ((r * 3 + c * 7) % 11) as f64);
        let xr = Image::from_fn(20, 20, |r, c| ((r * 5 + c) % 13) as f64);
        let scales = [ScaleGeometry::new(4, 2)];
        let pairs = [(vis.clone(), xr.clone())];
        let a = sample_training_patches(&pairs, 30, &scales, 1, 42).unwrap();
        let b = sample_training_patches(&pairs, 30, &scales, 1, 42).unwrap();
        assert_eq!(a, b);
        // More than the 100 available positions: sampled with replacement.
        let c = sample_training_patches(&pairs, 150, &scales, 1, 42).unwrap();
        assert_eq!(c.len(), 150);
        let bad = [(vis, Image::zeros(20, 21))];
        assert!(sample_training_patches(&bad, 5, &scales, 1, 0).is_err());
    }
}
