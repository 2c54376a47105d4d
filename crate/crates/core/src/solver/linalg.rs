//! Symmetric positive definite solves for the normal equations.

use crate::scalar::Real;

/// Symmetric matrix stored as its upper triangle in compressed columns.
///
/// Column `j` holds rows `i <= j`, sorted, without duplicates.
#[derive(Clone, Debug)]
pub struct UpperCsc<T> {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> UpperCsc<T> {
    /// Builds from `(row, col, value)` triplets with `row <= col`; duplicates are summed
    /// in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            debug_assert!(i <= j && j < n);
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(i, j, v) in triplets {
            let p = next[j];
            rows[p] = i;
            vals[p] = v;
            next[j] += 1;
        }
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut order: Vec<usize> = Vec::new();
        for j in 0..n {
            order.clear();
            order.extend(counts[j]..counts[j + 1]);
            order.sort_by_key(|&p| rows[p]);
            let mut last = usize::MAX;
            for &p in &order {
                if rows[p] == last {
                    *values.last_mut().expect("previous entry") += vals[p];
                } else {
                    row_idx.push(rows[p]);
                    values.push(vals[p]);
                    last = rows[p];
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Self {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                if self.row_idx[p] == j {
                    d[j] = self.values[p];
                }
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is not positive definite")]
pub struct NotPositiveDefinite;

/// Result of a factorization: solution and the ratio of smallest to largest pivot.
#[derive(Debug, Clone)]
pub struct SpdSolution<T> {
    pub x: Vec<T>,
    pub pivot_ratio: T,
}

/// Dense Cholesky solve of `A x = b` for a full symmetric matrix.
pub fn dense_cholesky_solve<T: Real>(
    a: &[Vec<T>],
    b: &[T],
) -> Result<SpdSolution<T>, NotPositiveDefinite> {
    let n = b.len();
    let mut l = vec![vec![T::zero(); n]; n];
    let mut dmin = T::infinity();
    let mut dmax = T::zero();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(NotPositiveDefinite);
        }
        dmin = dmin.min(d);
        dmax = dmax.max(d);
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / ljj;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let v = l[i][k] * y[k];
            y[i] -= v;
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = l[k][i] * y[k];
            y[i] -= v;
        }
        y[i] /= l[i][i];
    }
    Ok(SpdSolution {
        x: y,
        pivot_ratio: if dmax > T::zero() { dmin / dmax } else { T::zero() },
    })
}

/// Minimum-degree ordering of the sparsity graph. Returns `perm` with
/// `perm[new] = old`.
///
/// Runs of consecutive columns sharing the same closed neighbourhood (the
/// parameters of one pose, say) are eliminated together, which keeps the
/// graph small and the blocks contiguous.
pub fn minimum_degree<T: Real>(a: &UpperCsc<T>) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for p in a.col_ptr[j]..a.col_ptr[j + 1] {
            let i = a.row_idx[p];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for nb in &mut adj {
        nb.sort_unstable();
        nb.dedup();
    }
    let closed = |j: usize| {
        let mut c = adj[j].clone();
        if let Err(pos) = c.binary_search(&j) {
            c.insert(pos, j);
        }
        c
    };

    // group[j]: supervariable of column j; members[g]: its columns
    let mut group = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut j = 0;
    while j < n {
        let head = closed(j);
        let g = members.len();
        let mut cols = vec![j];
        group[j] = g;
        j += 1;
        while j < n && closed(j) == head {
            group[j] = g;
            cols.push(j);
            j += 1;
        }
        members.push(cols);
    }
    let m = members.len();
    let mut gadj: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); m];
    for (g, cols) in members.iter().enumerate() {
        for &c in cols {
            for &o in &adj[c] {
                if group[o] != g {
                    gadj[g].insert(group[o]);
                }
            }
        }
    }
    drop(adj);
    let weight: Vec<usize> = members.iter().map(Vec::len).collect();
    let degree_of = |gadj: &[std::collections::BTreeSet<usize>], g: usize| -> usize {
        gadj[g].iter().map(|&o| weight[o]).sum()
    };
    let mut degree: Vec<usize> = (0..m).map(|g| degree_of(&gadj, g)).collect();
    let mut queue: std::collections::BTreeSet<(usize, usize)> =
        (0..m).map(|g| (degree[g], g)).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        perm.extend_from_slice(&members[v]);
        let nbrs: Vec<usize> = std::mem::take(&mut gadj[v]).into_iter().collect();
        for &u in &nbrs {
            gadj[u].remove(&v);
            for &w in &nbrs {
                if w != u {
                    gadj[u].insert(w);
                }
            }
        }
        for &u in &nbrs {
            queue.remove(&(degree[u], u));
            degree[u] = degree_of(&gadj, u);
            queue.insert((degree[u], u));
        }
    }
    perm
}

/// Ordering and elimination structure of a symmetric sparsity pattern,
/// reusable for every matrix with that pattern.
#[derive(Clone, Debug)]
pub struct LdlSymbolic {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    perm: Vec<usize>,
    // permuted upper pattern
    pcol_ptr: Vec<usize>,
    prow_idx: Vec<usize>,
    // position in the permuted values of each original entry
    scatter: Vec<usize>,
    // position of each original diagonal entry, if stored
    diag_pos: Vec<Option<usize>>,
    parent: Vec<usize>,
    lp: Vec<usize>,
}

impl LdlSymbolic {
    pub fn analyze<T: Real>(a: &UpperCsc<T>) -> Self {
        let n = a.n;
        let perm = minimum_degree(a);
        let mut perm_inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            perm_inv[old] = new;
        }
        // permuted pattern with a position map back to `a`
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(a.row_idx.len());
        let mut diag_pos = vec![None; n];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (x, y) = (perm_inv[a.row_idx[p]], perm_inv[j]);
                entries.push((x.max(y), x.min(y), p));
            }
        }
        entries.sort_unstable();
        let mut pcol_ptr = vec![0usize; n + 1];
        let mut prow_idx = Vec::with_capacity(entries.len());
        let mut scatter = vec![0usize; entries.len()];
        for (q, &(col, row, p)) in entries.iter().enumerate() {
            pcol_ptr[col + 1] = q + 1;
            prow_idx.push(row);
            scatter[p] = q;
            if row == col {
                diag_pos[perm[col]] = Some(q);
            }
        }
        for k in 0..n {
            pcol_ptr[k + 1] = pcol_ptr[k + 1].max(pcol_ptr[k]);
        }

        // elimination tree and column counts
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &row in &prow_idx[pcol_ptr[k]..pcol_ptr[k + 1]] {
                let mut i = row;
                if i < k {
                    while flag[i] != k {
                        if parent[i] == usize::MAX {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        Self {
            n,
            col_ptr: a.col_ptr.clone(),
            row_idx: a.row_idx.clone(),
            perm,
            pcol_ptr,
            prow_idx,
            scatter,
            diag_pos,
            parent,
            lp,
        }
    }

    /// Whether `a` has exactly the analyzed pattern.
    pub fn matches<T>(&self, a: &UpperCsc<T>) -> bool {
        a.n == self.n && a.col_ptr == self.col_ptr && a.row_idx == self.row_idx
    }

    /// Stored entries of the factor `L`.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Solves `(A + diag(shift)) x = b`. `a` must match the analyzed pattern;
    /// a nonzero shift needs every diagonal entry to be stored.
    pub fn solve<T: Real>(
        &self,
        a: &UpperCsc<T>,
        shift: Option<&[T]>,
        b: &[T],
    ) -> Result<SpdSolution<T>, NotPositiveDefinite> {
        debug_assert!(self.matches(a));
        let n = self.n;
        let mut values = vec![T::zero(); self.prow_idx.len()];
        for (p, &v) in a.values.iter().enumerate() {
            values[self.scatter[p]] = v;
        }
        if let Some(shift) = shift {
            for (j, &s) in shift.iter().enumerate() {
                match self.diag_pos[j] {
                    Some(q) => values[q] += s,
                    None if s != T::zero() => return Err(NotPositiveDefinite),
                    None => {}
                }
            }
        }

        let nnz = self.lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![T::zero(); nnz];
        let mut d = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            y[k] = T::zero();
            let mut top = n;
            flag[k] = k;
            for p in self.pcol_ptr[k]..self.pcol_ptr[k + 1] {
                let mut i = self.prow_idx[p];
                y[i] += values[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = T::zero();
            while top < n {
                let i = pattern[top];
                top += 1;
                let yi = y[i];
                y[i] = T::zero();
                let p2 = self.lp[i] + lnz[i];
                for p in self.lp[i]..p2 {
                    let v = lx[p] * yi;
                    y[li[p]] -= v;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                lnz[i] += 1;
            }
            if !(d[k] > T::zero()) || !d[k].is_finite() {
                return Err(NotPositiveDefinite);
            }
        }

        let mut x: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                let v = lx[p] * xj;
                x[li[p]] -= v;
            }
        }
        for j in 0..n {
            x[j] /= d[j];
        }
        for j in (0..n).rev() {
            let mut xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                xj -= lx[p] * x[li[p]];
            }
            x[j] = xj;
        }
        let mut out = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        let (dmin, dmax) = d
            .iter()
            .fold((T::infinity(), T::zero()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(SpdSolution {
            x: out,
            pivot_ratio: if dmax > T::zero() { dmin / dmax } else { T::zero() },
        })
    }
}

/// Sparse `L D Lᵀ` solve with a fill-reducing reordering.
pub fn sparse_ldl_solve<T: Real>(
    a: &UpperCsc<T>,
    b: &[T],
) -> Result<SpdSolution<T>, NotPositiveDefinite> {
    LdlSymbolic::analyze(a).solve(a, None, b)
}
