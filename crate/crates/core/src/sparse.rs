//! Greedy sparse coding: orthogonal matching pursuit and its
//! budget-partitioned variant.
//!
//! The budgeted pursuit splits the atom indices into disjoint blocks, each
//! with its own sparsity cap. Every iteration admits the atom with the
//! largest residual correlation among those whose block still has budget,
//! refits all selected coefficients by least squares and updates the
//! residual. Plain OMP is the single-block special case and runs through the
//! same code path.

use crate::error::{Error, Result};
use crate::numerics::{least_squares, norm2, Mat};

/// Pursuit stops once `‖r‖₂ ≤ RESIDUAL_EXIT_RATIO · ‖b‖₂`.
pub const RESIDUAL_EXIT_RATIO: f64 = 1e-12;

/// Sparse vector as strictly increasing `(index, value)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCode {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseCode {
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("duplicate index in sparse code"));
        }
        if let Some(&(i, _)) = entries.iter().find(|&&(i, _)| i >= dim) {
            return Err(Error::dims(format!("index {i} out of range for dimension {dim}")));
        }
        Ok(SparseCode { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        SparseCode {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseCode {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|&(i, _)| i).collect()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// Entries with indices in `start..end`, re-indexed from zero.
    pub fn slice(&self, start: usize, end: usize) -> SparseCode {
        SparseCode {
            dim: end - start,
            entries: self
                .entries
                .iter()
                .filter(|&&(i, _)| i >= start && i < end)
                .map(|&(i, v)| (i - start, v))
                .collect(),
        }
    }

    /// `dictionary · self`.
    pub fn synthesize(&self, dictionary: &Mat) -> Result<Vec<f64>> {
        if dictionary.cols() != self.dim {
            return Err(Error::dims(format!(
                "code of dimension {} against a dictionary with {} atoms",
                self.dim,
                dictionary.cols()
            )));
        }
        let mut out = vec![0.0; dictionary.rows()];
        for (r, o) in out.iter_mut().enumerate() {
            let row = dictionary.row(r);
            *o = self.entries.iter().map(|&(i, v)| row[i] * v).sum();
        }
        Ok(out)
    }
}

/// One block of a partition: its atom indices and sparsity cap.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub indices: Vec<usize>,
    pub budget: usize,
}

/// Disjoint cover of `0..dim` by blocks with per-block budgets.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetPartition {
    blocks: Vec<Block>,
    block_of: Vec<usize>,
}

impl BudgetPartition {
    pub fn new(dim: usize, blocks: Vec<Block>) -> Result<Self> {
        let mut block_of = vec![usize::MAX; dim];
        for (k, b) in blocks.iter().enumerate() {
            for &i in &b.indices {
                if i >= dim {
                    return Err(Error::param(format!(
                        "block {k} holds index {i} outside 0..{dim}"
                    )));
                }
                if block_of[i] != usize::MAX {
                    return Err(Error::param(format!(
                        "index {i} belongs to blocks {} and {k}",
                        block_of[i]
                    )));
                }
                block_of[i] = k;
            }
        }
        if let Some(i) = block_of.iter().position(|&k| k == usize::MAX) {
            return Err(Error::param(format!("index {i} is in no block")));
        }
        Ok(BudgetPartition { blocks, block_of })
    }

    /// Consecutive blocks of the given `(length, budget)` pairs.
    pub fn contiguous(spec: &[(usize, usize)]) -> Self {
        let mut start = 0;
        let blocks: Vec<Block> = spec
            .iter()
            .map(|&(len, budget)| {
                let b = Block {
                    indices: (start..start + len).collect(),
                    budget,
                };
                start += len;
                b
            })
            .collect();
        BudgetPartition::new(start, blocks).expect("contiguous blocks form a partition")
    }

    pub fn single(dim: usize, budget: usize) -> Self {
        BudgetPartition::contiguous(&[(dim, budget)])
    }

    pub fn dim(&self) -> usize {
        self.block_of.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_of(&self, index: usize) -> usize {
        self.block_of[index]
    }

    pub fn total_budget(&self) -> usize {
        self.blocks.iter().map(|b| b.budget).sum()
    }

    /// Number of nonzeros of `code` falling in each block.
    pub fn block_counts(&self, code: &SparseCode) -> Vec<usize> {
        let mut counts = vec![0; self.blocks.len()];
        for &(i, _) in code.entries() {
            counts[self.block_of[i]] += 1;
        }
        counts
    }

    /// True when no block holds more nonzeros of `code` than its budget.
    pub fn complies(&self, code: &SparseCode) -> bool {
        self.block_counts(code)
            .iter()
            .zip(&self.blocks)
            .all(|(c, b)| *c <= b.budget)
    }
}

/// Result of a pursuit with its iteration history.
#[derive(Clone, Debug)]
pub struct PursuitTrace {
    pub code: SparseCode,
    /// Atoms in the order they were admitted.
    pub selected: Vec<usize>,
    /// `‖r‖₂` before the first iteration and after each one.
    pub residual_norms: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Picks the atom the budgeted pursuit admits next.
///
/// Equivalent to sorting all atoms by `|⟨r, θ⟩|` (descending, stable, so
/// ties go to the lower index) and walking the list until an atom is found
/// that is not yet selected and whose block has budget left.
pub fn greedy_step_oracle(
    theta: &Mat,
    residual: &[f64],
    partition: &BudgetPartition,
    selected: &[usize],
    counts: &[usize],
) -> Result<usize> {
    let corr = theta.tr_matvec(residual);
    pick_admissible(&corr, partition, selected, counts)
}

fn pick_admissible(
    corr: &[f64],
    partition: &BudgetPartition,
    selected: &[usize],
    counts: &[usize],
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in corr.iter().enumerate() {
        let k = partition.block_of(j);
        if counts[k] >= partition.blocks[k].budget || selected.contains(&j) {
            continue;
        }
        let a = c.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((j, a));
        }
    }
    best.map(|(j, _)| j).ok_or_else(|| {
        Error::NoAdmissibleAtom(format!(
            "{} atoms selected, block counts {counts:?}",
            selected.len()
        ))
    })
}

fn check_pursuit_dims(theta: &Mat, b: &[f64], partition: &BudgetPartition) -> Result<()> {
    if theta.rows() != b.len() {
        return Err(Error::dims(format!(
            "dictionary has {} rows, signal has length {}",
            theta.rows(),
            b.len()
        )));
    }
    if theta.cols() != partition.dim() {
        return Err(Error::dims(format!(
            "dictionary has {} atoms, partition covers {}",
            theta.cols(),
            partition.dim()
        )));
    }
    if partition.total_budget() > theta.rows() {
        return Err(Error::param(format!(
            "total budget {} exceeds signal dimension {}",
            partition.total_budget(),
            theta.rows()
        )));
    }
    Ok(())
}

/// Budget-partitioned OMP with its per-iteration history.
pub fn budgeted_omp_traced(
    theta: &Mat,
    b: &[f64],
    partition: &BudgetPartition,
) -> Result<PursuitTrace> {
    check_pursuit_dims(theta, b, partition)?;
    let b_norm = norm2(b);
    let mut residual = b.to_vec();
    let mut residual_norms = vec![b_norm];
    let mut selected: Vec<usize> = Vec::with_capacity(partition.total_budget());
    let mut counts = vec![0usize; partition.blocks.len()];
    let mut coeffs: Vec<f64> = Vec::new();

    for _ in 0..partition.total_budget() {
        if *residual_norms.last().unwrap() <= RESIDUAL_EXIT_RATIO * b_norm {
            break;
        }
        let kappa = greedy_step_oracle(theta, &residual, partition, &selected, &counts)?;
        selected.push(kappa);
        counts[partition.block_of(kappa)] += 1;

        let sub = theta.select_columns(&selected);
        coeffs = least_squares(&sub, b)?;
        let fit = sub.matvec(&coeffs);
        for ((r, bi), f) in residual.iter_mut().zip(b).zip(&fit) {
            *r = bi - f;
        }
        residual_norms.push(norm2(&residual));
    }

    let code = SparseCode::new(
        theta.cols(),
        selected.iter().copied().zip(coeffs.iter().copied()).collect(),
    )?;
    if !partition.complies(&code) {
        return Err(Error::NoAdmissibleAtom(format!(
            "budget exceeded: counts {:?}",
            partition.block_counts(&code)
        )));
    }
    Ok(PursuitTrace {
        code,
        selected,
        residual_norms,
        residual,
    })
}

/// Sparse code of `b` over `theta` with at most `budget_k` atoms from each
/// block `k` of `partition`.
pub fn budgeted_omp(theta: &Mat, b: &[f64], partition: &BudgetPartition) -> Result<SparseCode> {
    budgeted_omp_traced(theta, b, partition).map(|t| t.code)
}

/// Orthogonal matching pursuit with at most `s` atoms.
pub fn omp(theta: &Mat, b: &[f64], s: usize) -> Result<SparseCode> {
    if s > theta.cols() {
        return Err(Error::param(format!(
            "sparsity {s} exceeds the {} available atoms",
            theta.cols()
        )));
    }
    budgeted_omp(theta, b, &BudgetPartition::single(theta.cols(), s))
}
