use serde::{Deserialize, Serialize};

use super::Graph;
use crate::dense::DenseMatrix;
use crate::error::{shape_err, GnnError, Result};

/// Adjacency variants.
///
/// | kind | operator |
/// |------|----------|
/// | `raw` | `A` |
/// | `self_loop` | `Ã = A + I` |
/// | `sym_norm` | `Â = D̃^{-1/2} Ã D̃^{-1/2}` |
/// | `rw_norm` | `Ā = D^{-1} A` |
/// | `self_loop_rw_norm` | `D̃^{-1} Ã` (neighborhood mean over `N(i) ∪ {i}`) |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Raw,
    SelfLoop,
    SymNorm,
    RwNorm,
    SelfLoopRwNorm,
}

impl NormKind {
    pub fn has_diagonal(self) -> bool {
        matches!(self, NormKind::SelfLoop | NormKind::SymNorm | NormKind::SelfLoopRwNorm)
    }
}

/// Weighted CSR operator. `kind` is `None` for computed operators
/// (identity, masked Gram products).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    kind: Option<NormKind>,
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Builds the requested adjacency variant of `g`.
pub fn normalize(g: &Graph, kind: NormKind) -> Result<SparseOperator> {
    let n = g.n();
    if kind == NormKind::RwNorm {
        if let Some(i) = (0..n).find(|&i| g.degree(i) == 0) {
            return Err(GnnError::ZeroDegree(i));
        }
    }
    let diag = kind.has_diagonal();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.nnz() + if diag { n } else { 0 });
    let mut values = Vec::with_capacity(col_indices.capacity());
    row_offsets.push(0);
    let dt = |i: usize| (g.degree(i) + 1) as f64;
    let weight = |i: usize, j: usize| -> f64 {
        match kind {
            NormKind::Raw | NormKind::SelfLoop => 1.0,
            NormKind::SymNorm => 1.0 / (dt(i) * dt(j)).sqrt(),
            NormKind::RwNorm => 1.0 / g.degree(i) as f64,
            NormKind::SelfLoopRwNorm => 1.0 / dt(i),
        }
    };
    for i in 0..n {
        let mut placed_diag = !diag;
        for &j in g.neighbors(i) {
            if !placed_diag && i < j {
                col_indices.push(i);
                values.push(weight(i, i));
                placed_diag = true;
            }
            col_indices.push(j);
            values.push(weight(i, j));
        }
        if !placed_diag {
            col_indices.push(i);
            values.push(weight(i, i));
        }
        row_offsets.push(col_indices.len());
    }
    Ok(SparseOperator {
        kind: Some(kind),
        n,
        row_offsets,
        col_indices,
        values,
    })
}

impl SparseOperator {
    /// Assembles an operator from CSR arrays; columns must be sorted and
    /// unique within each row.
    pub fn from_csr(n: usize, row_offsets: Vec<usize>, col_indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if row_offsets.len() != n + 1
            || row_offsets[0] != 0
            || row_offsets[n] != col_indices.len()
            || values.len() != col_indices.len()
        {
            return Err(shape_err("inconsistent CSR arrays"));
        }
        for i in 0..n {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(shape_err("row offsets decrease"));
            }
            let row = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if row.iter().any(|&j| j >= n) || row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(shape_err(format!("row {i} columns unsorted or out of range")));
            }
        }
        Ok(Self {
            kind: None,
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            kind: None,
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn kind(&self) -> Option<NormKind> {
        self.kind
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    /// Stored value at `(i, j)`, if present.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|p| vals[p])
    }

    /// Largest row fan-in.
    pub fn max_row_nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.row_offsets[i + 1] - self.row_offsets[i])
            .max()
            .unwrap_or(0)
    }

    /// Exact structural and numerical symmetry within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| self.get(j, i).is_some_and(|w| (v - w).abs() <= tol))
        })
    }

    /// Row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                cols[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        Self {
            kind: self.kind,
            n: self.n,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d.set(i, j, v);
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_csr, complete, path};

    #[test]
    fn k3_sym_norm_is_one_third() {
        let a = normalize(&complete(3), NormKind::SymNorm).unwrap();
        assert_eq!(a.nnz(), 9);
        for v in a.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_vertex_sym_norm() {
        let g = build_csr(&[], 1).unwrap();
        let a = normalize(&g, NormKind::SymNorm).unwrap();
        assert_eq!(a.to_dense().as_slice(), &[1.0]);
        assert_eq!(normalize(&g, NormKind::RwNorm), Err(GnnError::ZeroDegree(0)));
    }

    #[test]
    fn k3_rw_norm_half_no_diagonal() {
        let a = normalize(&complete(3), NormKind::RwNorm).unwrap();
        assert_eq!(a.nnz(), 6);
        assert!(a.values().iter().all(|&v| v == 0.5));
        assert!(a.get(0, 0).is_none());
    }

    #[test]
    fn diagonal_sorted_into_rows() {
        let a = normalize(&path(3), NormKind::SelfLoop).unwrap();
        assert_eq!(a.col_indices(), &[0, 1, 0, 1, 2, 1, 2]);
        assert!(a.is_symmetric(0.0));
        assert_eq!(a.transpose(), a);
    }

    #[test]
    fn rw_rows_sum_to_one() {
        let g = crate::graph::erdos_renyi(40, 5.0, 2).unwrap();
        let g = if (0..g.n()).any(|i| g.degree(i) == 0) {
            complete(6)
        } else {
            g
        };
        for s in normalize(&g, NormKind::RwNorm).unwrap().row_sums() {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sym_norm_regular_rows_sum_to_one() {
        for g in [complete(5), cycle(7)] {
            for s in normalize(&g, NormKind::SymNorm).unwrap().row_sums() {
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        build_csr(&edges, n).unwrap()
    }
}
