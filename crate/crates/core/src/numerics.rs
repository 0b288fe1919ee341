//! Dense linear algebra kernels shared by the pursuit, learning and
//! separation code.
//!
//! Matrices are small (patch dimension times atom count), so everything here
//! is plain row-major storage with straightforward loops. Accumulation order
//! is fixed so results are reproducible bit for bit.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting a length mismatch or
    /// any NaN/Inf entry.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut m = Mat::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::dims(format!(
                    "column {j} has length {}, expected {rows}",
                    c.len()
                )));
            }
            m.set_column(j, c);
        }
        if let Some(index) = m.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = *v;
        }
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, r) in orow.iter_mut().zip(rrow) {
                    *o += a * r;
                }
            }
        }
        Ok(out)
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ * x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    /// Copies the listed columns, in the order given.
    pub fn select_columns(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = &mut out.data[i * idx.len()..(i + 1) * idx.len()];
            for (d, &j) in dst.iter_mut().zip(idx) {
                *d = src[j];
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hstack(parts: &[&Mat]) -> Result<Mat> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::dims(format!(
                "hstack row mismatch: {} vs {rows}",
                bad.rows
            )));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for m in parts {
                out.data[i * cols + off..i * cols + off + m.cols].copy_from_slice(m.row(i));
                off += m.cols;
            }
        }
        Ok(out)
    }

    /// Copies columns `start..end`.
    pub fn column_range(&self, start: usize, end: usize) -> Mat {
        let idx: Vec<usize> = (start..end).collect();
        self.select_columns(&idx)
    }

    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, a) in sq.iter_mut().zip(self.row(i)) {
                *s += a * a;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Multiplies column `j` by `factors[j]`.
    pub fn scale_columns(&mut self, factors: &[f64]) {
        debug_assert_eq!(factors.len(), self.cols);
        for i in 0..self.rows {
            for (a, f) in self.row_mut(i).iter_mut().zip(factors) {
                *a *= f;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Householder reflector for `x`: returns `(v, beta, alpha)` with
/// `(I - beta v vᵀ) x = alpha e₁`. `beta == 0` means no reflection is needed.
fn householder(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let norm = norm2(x);
    if norm == 0.0 {
        return (vec![0.0; x.len()], 0.0, 0.0);
    }
    let alpha = if x[0] > 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vv = dot(&v, &v);
    if vv == 0.0 {
        return (v, 0.0, x[0]);
    }
    (v, 2.0 / vv, alpha)
}

fn apply_reflector(v: &[f64], beta: f64, y: &mut [f64]) {
    if beta == 0.0 {
        return;
    }
    let s = beta * dot(v, y);
    for (yi, vi) in y.iter_mut().zip(v) {
        *yi -= s * vi;
    }
}

/// Least-squares solution of `A x ≈ b`.
///
/// Householder QR with column pivoting. When `A` is numerically rank
/// deficient the minimum-norm minimizer is returned, obtained from a second
/// QR of the leading trapezoid (complete orthogonal decomposition).
pub fn least_squares(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = a.shape();
    if m == 0 || k == 0 {
        return Err(Error::dims(format!("least squares on empty {m}x{k} system")));
    }
    if b.len() != m {
        return Err(Error::dims(format!(
            "least squares: matrix has {m} rows but rhs has {}",
            b.len()
        )));
    }

    let mut cols = a.columns();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut rhs = b.to_vec();
    let steps = m.min(k);
    let mut diag_done = 0;

    for p in 0..steps {
        // Pivot on the largest remaining column norm; ties go to the lower index.
        let mut best = p;
        let mut best_norm = -1.0;
        for (j, c) in cols.iter().enumerate().skip(p) {
            let s: f64 = c[p..].iter().map(|v| v * v).sum();
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        cols.swap(p, best);
        perm.swap(p, best);

        let (v, beta, alpha) = householder(&cols[p][p..]);
        if beta == 0.0 && alpha == 0.0 {
            break;
        }
        for c in cols.iter_mut().skip(p + 1) {
            apply_reflector(&v, beta, &mut c[p..]);
        }
        apply_reflector(&v, beta, &mut rhs[p..]);
        cols[p][p] = alpha;
        for e in cols[p][p + 1..].iter_mut() {
            *e = 0.0;
        }
        diag_done = p + 1;
    }

    let r = |i: usize, j: usize| cols[j][i];
    let r00 = if diag_done > 0 { r(0, 0).abs() } else { 0.0 };
    let tol = (m.max(k) as f64) * f64::EPSILON * r00;
    let rank = (0..diag_done).take_while(|&i| r(i, i).abs() > tol).count();

    let mut x = vec![0.0; k];
    if rank == 0 {
        return Ok(x);
    }

    let y = if rank == k {
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s = rhs[i] - (i + 1..k).map(|j| r(i, j) * y[j]).sum::<f64>();
            y[i] = s / r(i, i);
        }
        y
    } else {
        // T = R[0..rank, 0..k]; factor Tᵀ = Q₂ R₂ so T = R₂ᵀ Q₂ᵀ.
        let mut tt: Vec<Vec<f64>> = (0..rank)
            .map(|i| (0..k).map(|j| if j >= i { r(i, j) } else { 0.0 }).collect())
            .collect();
        let mut reflectors = Vec::with_capacity(rank);
        for p in 0..rank {
            let (v, beta, alpha) = householder(&tt[p][p..]);
            for c in tt.iter_mut().skip(p + 1) {
                apply_reflector(&v, beta, &mut c[p..]);
            }
            tt[p][p] = alpha;
            for e in tt[p][p + 1..].iter_mut() {
                *e = 0.0;
            }
            reflectors.push((v, beta));
        }
        // R₂ᵀ u = c (forward substitution); R₂[i][j] = tt[j][i].
        let mut u = vec![0.0; k];
        for i in 0..rank {
            let mut s = rhs[i];
            for (j, uj) in u.iter().enumerate().take(i) {
                s -= tt[i][j] * uj;
            }
            u[i] = s / tt[i][i];
        }
        for (p, (v, beta)) in reflectors.iter().enumerate().rev() {
            apply_reflector(v, *beta, &mut u[p..]);
        }
        u
    };

    for (j, &pj) in perm.iter().enumerate() {
        x[pj] = y[j];
    }
    Ok(x)
}

/// Scales every column to unit ℓ2 norm, returning the original norms.
pub fn normalize_columns(m: &Mat) -> Result<(Mat, Vec<f64>)> {
    let norms = m.column_norms();
    if let Some(index) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn { index });
    }
    let mut out = m.clone();
    let inv: Vec<f64> = norms.iter().map(|n| 1.0 / n).collect();
    out.scale_columns(&inv);
    Ok((out, norms))
}

fn exact_sqrt(v: usize) -> Option<usize> {
    let r = (v as f64).sqrt().round() as usize;
    (r * r == v).then_some(r)
}

/// Columns of a 1-D overcomplete DCT frame: `len` samples, `atoms` columns.
fn odct_1d(len: usize, atoms: usize) -> Vec<Vec<f64>> {
    (0..atoms)
        .map(|j| {
            let mut c: Vec<f64> = (0..len)
                .map(|i| (PI * j as f64 * (2 * i + 1) as f64 / (2 * atoms) as f64).cos())
                .collect();
            if j > 0 {
                let mean = c.iter().sum::<f64>() / len as f64;
                c.iter_mut().for_each(|v| *v -= mean);
            }
            let n = norm2(&c);
            c.iter_mut().for_each(|v| *v /= n);
            c
        })
        .collect()
}

/// 2-D overcomplete DCT dictionary with `n` pixels per atom and `d` atoms.
///
/// Kronecker product of two 1-D frames of size `√n × √d`. Column
/// `j1·√d + j2` is the separable atom with vertical frequency `j1` and
/// horizontal frequency `j2`, vectorized row-major.
pub fn odct_dictionary(n: usize, d: usize) -> Result<Mat> {
    let side = exact_sqrt(n)
        .ok_or_else(|| Error::param(format!("ODCT patch dimension {n} is not a perfect square")))?;
    let per_axis = exact_sqrt(d)
        .ok_or_else(|| Error::param(format!("ODCT atom count {d} is not a perfect square")))?;
    if side == 0 || per_axis == 0 {
        return Err(Error::param("ODCT dimensions must be positive"));
    }
    if d < n {
        return Err(Error::param(format!(
            "ODCT needs at least as many atoms as pixels ({d} < {n})"
        )));
    }
    let frame = odct_1d(side, per_axis);
    let mut m = Mat::zeros(n, d);
    for j1 in 0..per_axis {
        for j2 in 0..per_axis {
            let col = j1 * per_axis + j2;
            for i1 in 0..side {
                for i2 in 0..side {
                    m[(i1 * side + i2, col)] = frame[j1][i1] * frame[j2][i2];
                }
            }
        }
    }
    let (m, _) = normalize_columns(&m)?;
    Ok(m)
}

/// Initial dictionary for learning: the ODCT when `d` is a perfect square
/// no smaller than `n`, otherwise the `d` lowest-frequency atoms (ordered
/// by `j1 + j2`, then `j1`) of the smallest square ODCT that has enough
/// atoms.
pub fn initial_dictionary(n: usize, d: usize) -> Result<Mat> {
    let side = exact_sqrt(n)
        .ok_or_else(|| Error::param(format!("patch dimension {n} is not a perfect square")))?;
    if d == 0 {
        return Ok(Mat::zeros(n, 0));
    }
    if exact_sqrt(d).is_some() && d >= n {
        return odct_dictionary(n, d);
    }
    let mut per_axis = (d as f64).sqrt().ceil() as usize;
    per_axis = per_axis.max(side);
    let full = odct_dictionary(n, per_axis * per_axis)?;
    let mut order: Vec<(usize, usize)> = (0..per_axis)
        .flat_map(|j1| (0..per_axis).map(move |j2| (j1, j2)))
        .collect();
    order.sort_by_key(|&(j1, j2)| (j1 + j2, j1));
    let idx: Vec<usize> = order
        .iter()
        .take(d)
        .map(|&(j1, j2)| j1 * per_axis + j2)
        .collect();
    Ok(full.select_columns(&idx))
}

/// Solves `G X = B` for symmetric positive definite `G` (Cholesky).
pub fn solve_spd(g: &Mat, b: &Mat) -> Result<Mat> {
    let n = g.rows();
    if g.cols() != n || b.rows() != n {
        return Err(Error::dims(format!(
            "SPD solve: {}x{} system with {}x{} rhs",
            g.rows(),
            g.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::param(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}
