//! Simplicial sparse Cholesky (up-looking) with a fill-reducing ordering and
//! the Takahashi recursion for the entries of the inverse on the factor's
//! sparsity pattern.

use std::sync::Arc;

use super::SparseSym;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and column structure of L for one pattern.
///
/// Built once per sparsity pattern and shared by every numeric
/// factorization of matrices with that pattern.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv_perm[old] = new`
    inv_perm: Vec<usize>,
    parent: Vec<usize>,
    /// permuted upper triangle, by column: rows `<= col`
    c_ptr: Vec<usize>,
    c_row: Vec<usize>,
    /// source slot in the input value array for every permuted entry
    c_src: Vec<usize>,
    l_ptr: Vec<usize>,
    l_row: Vec<usize>,
    source_nnz: usize,
}

impl SymbolicCholesky {
    /// Analyses `matrix`, ordering its leading `n - n_tail` indices with AMD
    /// and keeping the trailing `n_tail` indices last (in order). Trailing
    /// dense rows such as fixed effects then cause no extra fill.
    pub fn analyze(matrix: &SparseSym, n_tail: usize) -> Self {
        let n = matrix.dim();
        let n_lead = n - n_tail.min(n);
        let mut perm = lead_ordering(matrix, n_lead);
        perm.extend(n_lead..n);
        Self::with_permutation(matrix, perm)
    }

    /// Analyses `matrix` under a caller-supplied ordering (`perm[new] = old`).
    pub fn with_permutation(matrix: &SparseSym, perm: Vec<usize>) -> Self {
        let n = matrix.dim();
        assert_eq!(perm.len(), n);
        let mut inv_perm = vec![NONE; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        assert!(inv_perm.iter().all(|&v| v != NONE), "not a permutation");

        // permuted upper triangle in column form
        let mut counts = vec![0usize; n];
        for (i, j, _) in matrix.triplets() {
            counts[inv_perm[i].max(inv_perm[j])] += 1;
        }
        let mut c_ptr = vec![0usize; n + 1];
        for k in 0..n {
            c_ptr[k + 1] = c_ptr[k] + counts[k];
        }
        let mut next = c_ptr[..n].to_vec();
        let mut c_row = vec![0usize; c_ptr[n]];
        let mut c_src = vec![0usize; c_ptr[n]];
        for (slot, (i, j, _)) in matrix.triplets().enumerate() {
            let (pi, pj) = (inv_perm[i], inv_perm[j]);
            let col = pi.max(pj);
            c_row[next[col]] = pi.min(pj);
            c_src[next[col]] = slot;
            next[col] += 1;
        }

        let parent = etree(n, &c_ptr, &c_row);

        // column counts of L from the row patterns
        let mut col_count = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        let mut l_row_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_row, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                col_count[i] += 1;
            }
            l_row_rows[k].extend_from_slice(&stack[top..]);
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + col_count[k];
        }
        // row indices by column: diagonal first then increasing rows
        let mut l_row = vec![0usize; l_ptr[n]];
        let mut fill = l_ptr[..n].to_vec();
        for k in 0..n {
            for &i in &l_row_rows[k] {
                l_row[fill[i]] = k;
                fill[i] += 1;
            }
            l_row[fill[k]] = k;
            fill[k] += 1;
        }
        // the loop above appends row k to earlier columns before placing
        // column k's diagonal, so every column starts with its own index
        Self {
            n,
            perm,
            inv_perm,
            parent,
            c_ptr,
            c_row,
            c_src,
            l_ptr,
            l_row,
            source_nnz: matrix.nnz(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.l_row.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Numeric factorization of a matrix with the analysed pattern.
    pub fn factor(self: &Arc<Self>, matrix: &SparseSym) -> Result<CholeskyFactor> {
        assert_eq!(matrix.nnz(), self.source_nnz, "pattern mismatch");
        let n = self.n;
        let src = matrix.values();
        let mut lx = vec![0.0; self.l_row.len()];
        let mut x = vec![0.0; n];
        let mut fill: Vec<usize> = self.l_ptr[..n].to_vec();
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(
                k,
                &self.c_ptr,
                &self.c_row,
                &self.parent,
                &mut stack,
                &mut mark,
            );
            for p in self.c_ptr[k]..self.c_ptr[k + 1] {
                x[self.c_row[p]] += src[self.c_src[p]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[self.l_ptr[i]];
                x[i] = 0.0;
                for p in (self.l_ptr[i] + 1)..fill[i] {
                    x[self.l_row[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                lx[fill[i]] = lki;
                fill[i] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(self.perm[k]));
            }
            lx[fill[k]] = d.sqrt();
            fill[k] += 1;
        }
        Ok(CholeskyFactor {
            symbolic: Arc::clone(self),
            lx,
        })
    }
}

fn lead_ordering(matrix: &SparseSym, n_lead: usize) -> Vec<usize> {
    if n_lead == 0 {
        return Vec::new();
    }
    // AMD wants the column pattern; the upper triangle suffices since it
    // symmetrises internally
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n_lead];
    for (i, j, _) in matrix.triplets() {
        if i < n_lead && j < n_lead {
            cols[j].push(i);
        }
    }
    let mut a_p = Vec::with_capacity(n_lead + 1);
    let mut a_i = Vec::new();
    a_p.push(0usize);
    for mut c in cols {
        c.sort_unstable();
        a_i.extend(c);
        a_p.push(a_i.len());
    }
    match amd::order::<usize>(n_lead, &a_p, &a_i, &amd::Control::default()) {
        Ok((p, _, _)) => p,
        Err(_) => (0..n_lead).collect(),
    }
}

fn etree(n: usize, c_ptr: &[usize], c_row: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in c_ptr[k]..c_ptr[k + 1] {
            let mut i = c_row[p];
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of L (excluding the diagonal) in topological
/// order, returned as `stack[top..]`.
fn ereach(
    k: usize,
    c_ptr: &[usize],
    c_row: &[usize],
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for p in c_ptr[k]..c_ptr[k + 1] {
        let mut i = c_row[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Numeric factor `P A Pᵀ = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    lx: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// `log det A = 2 Σ log L_kk`
    pub fn log_det(&self) -> f64 {
        let s = &self.symbolic;
        2.0 * (0..s.n).map(|k| self.lx[s.l_ptr[k]].ln()).sum::<f64>()
    }

    fn lower_solve(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for k in 0..s.n {
            y[k] /= self.lx[s.l_ptr[k]];
            let yk = y[k];
            for p in (s.l_ptr[k] + 1)..s.l_ptr[k + 1] {
                y[s.l_row[p]] -= self.lx[p] * yk;
            }
        }
    }

    fn upper_solve(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for k in (0..s.n).rev() {
            let mut acc = y[k];
            for p in (s.l_ptr[k] + 1)..s.l_ptr[k + 1] {
                acc -= self.lx[p] * y[s.l_row[p]];
            }
            y[k] = acc / self.lx[s.l_ptr[k]];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y: Vec<f64> = s.perm.iter().map(|&old| b[old]).collect();
        self.lower_solve(&mut y);
        self.upper_solve(&mut y);
        let mut x = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// `Pᵀ L⁻ᵀ e`: maps a standard normal vector to a draw with covariance `A⁻¹`.
    pub fn sample_transform(&self, e: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y = e.to_vec();
        self.upper_solve(&mut y);
        let mut x = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Entries of `A⁻¹` on the pattern of L (Takahashi recursion).
    pub fn selected_inverse(&self) -> SelectedInverse {
        let s = &self.symbolic;
        let mut z = vec![0.0; self.lx.len()];
        let lookup = |z: &[f64], a: usize, b: usize| -> f64 {
            // entry (a, b) of the permuted inverse, both > current column
            let (col, row) = (a.min(b), a.max(b));
            let start = s.l_ptr[col];
            let end = s.l_ptr[col + 1];
            match s.l_row[start..end].binary_search(&row) {
                Ok(off) => z[start + off],
                Err(_) => unreachable!("entry outside the filled pattern"),
            }
        };
        for j in (0..s.n).rev() {
            let start = s.l_ptr[j];
            let end = s.l_ptr[j + 1];
            let ljj = self.lx[start];
            // off-diagonal entries of column j, from the bottom up
            for p in ((start + 1)..end).rev() {
                let i = s.l_row[p];
                let mut acc = 0.0;
                for q in (start + 1)..end {
                    let k = s.l_row[q];
                    acc += self.lx[q] * lookup(&z, k, i);
                }
                z[p] = -acc / ljj;
            }
            let mut acc = 0.0;
            for q in (start + 1)..end {
                acc += self.lx[q] * z[q];
            }
            z[start] = 1.0 / (ljj * ljj) - acc / ljj;
        }
        SelectedInverse {
            symbolic: Arc::clone(&self.symbolic),
            z,
        }
    }
}

/// Entries of a symmetric inverse restricted to the Cholesky pattern.
#[derive(Clone, Debug)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    z: Vec<f64>,
}

impl SelectedInverse {
    /// Entry (i, j) in original indexing, if it lies on the pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let s = &self.symbolic;
        let (a, b) = (s.inv_perm[i], s.inv_perm[j]);
        let (col, row) = (a.min(b), a.max(b));
        let start = s.l_ptr[col];
        s.l_row[start..s.l_ptr[col + 1]]
            .binary_search(&row)
            .ok()
            .map(|off| self.z[start + off])
    }

    /// Diagonal of the inverse in original indexing.
    pub fn diag(&self) -> Vec<f64> {
        let s = &self.symbolic;
        (0..s.n)
            .map(|old| self.z[s.l_ptr[s.inv_perm[old]]])
            .collect()
    }
}
