use std::collections::BTreeMap;

use crate::scalar::Real;
use crate::solver::LeastSquaresProblem;

/// Contiguous range of parameter columns touched by a residual block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnRange {
    pub start: usize,
    pub len: usize,
}

/// Dense rows of the Jacobian restricted to a few column ranges.
///
/// `values` is row-major with `nrows` rows of width `Σ cols[i].len`.
#[derive(Clone, Debug)]
pub struct JacobianBlock<T> {
    pub row: usize,
    pub nrows: usize,
    pub cols: Vec<ColumnRange>,
    pub values: Vec<T>,
}

impl<T: Real> JacobianBlock<T> {
    pub fn width(&self) -> usize {
        self.cols.iter().map(|c| c.len).sum()
    }
}

/// Block-sparse `m × n` Jacobian. Blocks must not share rows.
#[derive(Clone, Debug)]
pub struct Jacobian<T> {
    nrows: usize,
    ncols: usize,
    blocks: Vec<JacobianBlock<T>>,
}

impl<T: Real> Jacobian<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            blocks: Vec::new(),
        }
    }

    /// Single dense block from row-major values.
    pub fn dense(nrows: usize, ncols: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), nrows * ncols, "dense Jacobian shape");
        let mut j = Self::new(nrows, ncols);
        j.push(JacobianBlock {
            row: 0,
            nrows,
            cols: vec![ColumnRange {
                start: 0,
                len: ncols,
            }],
            values,
        });
        j
    }

    pub fn push(&mut self, block: JacobianBlock<T>) {
        debug_assert_eq!(block.values.len(), block.nrows * block.width());
        debug_assert!(block.row + block.nrows <= self.nrows);
        debug_assert!(block.cols.iter().all(|c| c.start + c.len <= self.ncols));
        self.blocks.push(block);
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn blocks(&self) -> &[JacobianBlock<T>] {
        &self.blocks
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.ncols]; self.nrows];
        for b in &self.blocks {
            let w = b.width();
            for r in 0..b.nrows {
                let mut off = 0;
                for c in &b.cols {
                    for k in 0..c.len {
                        out[b.row + r][c.start + k] += b.values[r * w + off + k];
                    }
                    off += c.len;
                }
            }
        }
        out
    }

    /// `Jᵀ r`.
    pub fn transpose_mul(&self, r: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.ncols];
        for b in &self.blocks {
            let w = b.width();
            for row in 0..b.nrows {
                let rv = r[b.row + row];
                if rv == T::zero() {
                    continue;
                }
                let mut off = 0;
                for c in &b.cols {
                    for k in 0..c.len {
                        g[c.start + k] += b.values[row * w + off + k] * rv;
                    }
                    off += c.len;
                }
            }
        }
        g
    }

    /// Upper triangle of `JᵀJ` as `(row, col, value)` triplets with `row <= col`,
    /// in deterministic order. Duplicate coordinates may appear and must be summed.
    pub fn normal_triplets(&self) -> Vec<(usize, usize, T)> {
        // keyed by (start_a, start_b); blocks sharing a start must agree on widths
        let mut acc: BTreeMap<(usize, usize), (usize, usize, Vec<T>)> = BTreeMap::new();
        let mut loose: Vec<(usize, usize, T)> = Vec::new();
        for b in &self.blocks {
            let w = b.width();
            let mut offs = Vec::with_capacity(b.cols.len());
            let mut o = 0;
            for c in &b.cols {
                offs.push(o);
                o += c.len;
            }
            for (ia, ca) in b.cols.iter().enumerate() {
                for (ib, cb) in b.cols.iter().enumerate() {
                    if ca.start > cb.start {
                        continue;
                    }
                    let entry = acc
                        .entry((ca.start, cb.start))
                        .or_insert_with(|| (ca.len, cb.len, vec![T::zero(); ca.len * cb.len]));
                    if entry.0 != ca.len || entry.1 != cb.len {
                        for r in 0..b.nrows {
                            for ka in 0..ca.len {
                                let va = b.values[r * w + offs[ia] + ka];
                                for kb in 0..cb.len {
                                    let (i, j) = (ca.start + ka, cb.start + kb);
                                    if i <= j {
                                        loose.push((i, j, va * b.values[r * w + offs[ib] + kb]));
                                    }
                                }
                            }
                        }
                        continue;
                    }
                    for r in 0..b.nrows {
                        let row = &b.values[r * w..(r + 1) * w];
                        for ka in 0..ca.len {
                            let va = row[offs[ia] + ka];
                            if va == T::zero() {
                                continue;
                            }
                            for kb in 0..cb.len {
                                entry.2[ka * cb.len + kb] += va * row[offs[ib] + kb];
                            }
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        for ((sa, sb), (la, lb, vals)) in acc {
            for ka in 0..la {
                for kb in 0..lb {
                    let (i, j) = (sa + ka, sb + kb);
                    if i <= j {
                        out.push((i, j, vals[ka * lb + kb]));
                    } else if sa != sb {
                        out.push((j, i, vals[ka * lb + kb]));
                    }
                }
            }
        }
        out.extend(loose);
        out
    }
}

/// Central-difference Jacobian of the problem's residuals at `x`.
///
/// Column `k` uses the step `h * problem.step_scale(x, k)`.
pub fn numeric_jacobian<T: Real, P: LeastSquaresProblem<T> + ?Sized>(
    problem: &P,
    x: &P::Params,
    h: T,
) -> Result<Jacobian<T>, crate::solver::SolverError> {
    let n = problem.num_params();
    let m = problem.num_residuals();
    let mut values = vec![T::zero(); m * n];
    let mut delta = vec![T::zero(); n];
    for k in 0..n {
        let step = h * problem.step_scale(x, k);
        delta[k] = step;
        let plus = problem.residuals(&problem.retract(x, &delta))?;
        delta[k] = -step;
        let minus = problem.residuals(&problem.retract(x, &delta))?;
        delta[k] = T::zero();
        for i in 0..m {
            values[i * n + k] = (plus[i] - minus[i]) / (step + step);
        }
    }
    Ok(Jacobian::dense(m, n, values))
}
