//! Degree-normalized bipartite adjacency in compressed sparse row layout.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (idx, vals) = self.row(r);
        match idx.binary_search(&(c as u32)) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                out.set(r, c as usize, v);
            }
        }
        out
    }

    /// Explicit transpose; values are copied, never recomputed.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        // Rows are scanned in ascending order, so each transposed row comes
        // out with strictly increasing column indices.
        for r in 0..self.rows {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                let slot = cursor[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                cursor[c as usize] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    /// `self · x`
    pub fn spmm(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rows() != self.cols {
            return Err(Error::Dimension {
                op: "spmm",
                left: (self.rows, self.cols),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let mut out = Tensor::zeros(self.rows, d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |r: usize, row: &mut [T]| {
            let (idx, vals) = self.row(r);
            for (&c, &v) in idx.iter().zip(vals) {
                for (o, &xv) in row.iter_mut().zip(x.row(c as usize)) {
                    *o += v * xv;
                }
            }
        };
        if self.nnz() * d >= PAR_THRESHOLD {
            out.data_mut()
                .par_chunks_mut(d)
                .enumerate()
                .for_each(|(r, row)| kernel(r, row));
        } else {
            out.data_mut()
                .chunks_mut(d)
                .enumerate()
                .for_each(|(r, row)| kernel(r, row));
        }
        Ok(out)
    }
}

/// A sparse operator paired with its stored transpose, so that both the
/// product and its adjoint are row-major scans.
#[derive(Clone, Debug)]
pub struct SparseOperator<T> {
    pub forward: Arc<CsrMatrix<T>>,
    pub adjoint: Arc<CsrMatrix<T>>,
}

#[derive(Clone, Debug)]
pub struct NormalizedBipartiteGraph<T> {
    num_users: usize,
    num_items: usize,
    user_to_item: Arc<CsrMatrix<T>>,
    item_to_user: Arc<CsrMatrix<T>>,
}

impl<T: Scalar> NormalizedBipartiteGraph<T> {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.user_to_item.nnz()
    }

    /// M×N, row `u` holds `1/√(d_u·d_i)` for each neighbor `i`.
    pub fn user_to_item(&self) -> &CsrMatrix<T> {
        &self.user_to_item
    }

    /// N×M transpose of [`Self::user_to_item`].
    pub fn item_to_user(&self) -> &CsrMatrix<T> {
        &self.item_to_user
    }

    /// Operator that gathers item embeddings into users.
    pub fn items_into_users(&self) -> SparseOperator<T> {
        SparseOperator {
            forward: Arc::clone(&self.user_to_item),
            adjoint: Arc::clone(&self.item_to_user),
        }
    }

    /// Operator that gathers user embeddings into items.
    pub fn users_into_items(&self) -> SparseOperator<T> {
        SparseOperator {
            forward: Arc::clone(&self.item_to_user),
            adjoint: Arc::clone(&self.user_to_item),
        }
    }
}

/// Builds the normalized adjacency of a deduplicated edge list.
pub fn build_graph<T: Scalar>(
    edges: &[(u32, u32)],
    num_users: usize,
    num_items: usize,
) -> Result<NormalizedBipartiteGraph<T>> {
    let mut user_deg = vec![0usize; num_users];
    let mut item_deg = vec![0usize; num_items];
    for &(u, i) in edges {
        let (u, i) = (u as usize, i as usize);
        if u >= num_users {
            return Err(Error::Index {
                what: "users",
                index: u,
                len: num_users,
            });
        }
        if i >= num_items {
            return Err(Error::Index {
                what: "items",
                index: i,
                len: num_items,
            });
        }
        user_deg[u] += 1;
        item_deg[i] += 1;
    }

    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Contract("duplicate edge in graph input".into()));
    }

    let mut indptr = vec![0usize; num_users + 1];
    for &(u, _) in &sorted {
        indptr[u as usize + 1] += 1;
    }
    for u in 0..num_users {
        indptr[u + 1] += indptr[u];
    }
    let indices: Vec<u32> = sorted.iter().map(|&(_, i)| i).collect();
    let values: Vec<T> = sorted
        .iter()
        .map(|&(u, i)| {
            let d = (user_deg[u as usize] * item_deg[i as usize]) as f64;
            T::of(1.0 / d.sqrt())
        })
        .collect();
    let user_to_item = CsrMatrix {
        rows: num_users,
        cols: num_items,
        indptr,
        indices,
        values,
    };
    let item_to_user = user_to_item.transpose();
    Ok(NormalizedBipartiteGraph {
        num_users,
        num_items,
        user_to_item: Arc::new(user_to_item),
        item_to_user: Arc::new(item_to_user),
    })
}

/// Normalized graph over the union of every behavior's training edges.
pub fn build_global_graph<T: Scalar>(
    ds: &InteractionDataset,
) -> Result<NormalizedBipartiteGraph<T>> {
    let mut union: Vec<(u32, u32)> = ds.train_edges.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    build_graph(&union, ds.num_users, ds.num_items)
}

/// One normalized graph per behavior, in cascade order.
pub fn build_behavior_graphs<T: Scalar>(
    ds: &InteractionDataset,
) -> Result<Vec<NormalizedBipartiteGraph<T>>> {
    ds.train_edges
        .iter()
        .map(|edges| build_graph(edges, ds.num_users, ds.num_items))
        .collect()
}
