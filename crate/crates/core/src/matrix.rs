//! Sparse matrices tied to a graph: compressed-row storage, the
//! graph-induced bandwidth, subdomain projections and residuals.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{BfsScratch, Graph, OverlapBlocks};

/// Square sparse matrix in compressed-row form with sorted columns and no
/// stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl StructuredMatrix {
    /// Assembles from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that end up exactly zero are dropped. The symmetric flag is set
    /// when the stored pattern and values are exactly symmetric.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite value at ({i}, {j})"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut raw = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            raw[fill[i]] = (j, v);
            fill[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for i in 0..n {
            let row = &mut raw[counts[i]..counts[i + 1]];
            row.sort_by_key(|e| e.0);
            let mut idx = 0;
            while idx < row.len() {
                let c = row[idx].0;
                let mut s = 0.0;
                while idx < row.len() && row[idx].0 == c {
                    s += row[idx].1;
                    idx += 1;
                }
                if s != 0.0 {
                    cols.push(c);
                    vals.push(s);
                }
            }
            row_ptr.push(cols.len());
        }
        let mut m = Self {
            n,
            row_ptr,
            cols,
            vals,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    /// Assembles a symmetric matrix from lower- or upper-triangle triplets;
    /// each off-diagonal entry is mirrored.
    pub fn from_triangle(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut all = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            all.push((i, j, v));
            if i != j {
                all.push((j, i, v));
            }
        }
        Self::from_triplets(n, &all)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), &t).expect("diagonal entries are in range")
    }

    /// Constant-coefficient tridiagonal matrix (`diag` on the diagonal,
    /// `off` on both off-diagonals).
    pub fn tridiagonal(n: usize, diag: f64, off: f64) -> Self {
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n {
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        Self::from_triplets(n, &t).expect("indices in range")
    }

    /// Weighted graph Laplacian `sum_e w (e_i - e_j)(e_i - e_j)^T`.
    pub fn laplacian(g: &Graph, w: f64) -> Self {
        let mut t = Vec::new();
        for (i, j) in g.edges() {
            t.push((i, i, w));
            t.push((j, j, w));
            t.push((i, j, -w));
            t.push((j, i, -w));
        }
        Self::from_triplets(g.n_vertices(), &t).expect("edges are in range")
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("matrix must be square".into()));
        }
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |p| v[p])
    }

    /// All stored entries as `(row, col, value)`, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn check_symmetric(&self) -> bool {
        self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// Row `i` of `A x`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (c, v) = self.row(i);
        c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.n, &t).expect("same dimension")
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let t: Vec<_> = self.iter().chain(other.iter()).collect();
        Self::from_triplets(self.n, &t)
    }

    pub fn scale(&self, s: f64) -> Self {
        let t: Vec<_> = self.iter().map(|(i, j, v)| (i, j, v * s)).collect();
        Self::from_triplets(self.n, &t).expect("same dimension")
    }

    /// Sparse product `self * other` (row-by-row accumulation).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        let mut acc = vec![0.0; self.n];
        let mut mark = vec![usize::MAX; self.n];
        let mut touched = Vec::new();
        let mut t = Vec::new();
        for i in 0..self.n {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            t.extend(touched.iter().map(|&j| (i, j, acc[j])));
        }
        Self::from_triplets(self.n, &t)
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Principal submatrix on `idx` (local numbering follows `idx` order).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.n];
        for (p, &i) in idx.iter().enumerate() {
            local[i] = p;
        }
        let mut t = Vec::new();
        for (p, &i) in idx.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                if local[j] != usize::MAX {
                    t.push((p, local[j], x));
                }
            }
        }
        Self::from_triplets(idx.len(), &t).expect("local indices in range")
    }

    /// Generalized bandwidth: the largest graph distance `d(i, j)` over
    /// stored nonzeros. Zero for diagonal matrices.
    pub fn bandwidth(&self, g: &Graph) -> Result<usize> {
        self.bandwidth_on(g, None)
    }

    /// Bandwidth of the matrix whose row/column `p` is graph vertex
    /// `global[p]` (used for local blocks carrying global distances).
    pub(crate) fn bandwidth_on(&self, g: &Graph, global: Option<&[usize]>) -> Result<usize> {
        let map = |p: usize| global.map_or(p, |gl| gl[p]);
        if self.n > 0 && global.is_none() && self.n > g.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimension {} exceeds graph size {}",
                self.n,
                g.n_vertices()
            )));
        }
        let mut bfs = BfsScratch::new(g.n_vertices());
        let mut best = 0;
        let mut targets = Vec::new();
        for p in 0..self.n {
            let i = map(p);
            targets.clear();
            targets.extend(self.row(p).0.iter().map(|&q| map(q)).filter(|&j| j != i));
            if targets.is_empty() {
                continue;
            }
            // cheap exit: all off-diagonal entries are graph neighbours
            if best >= 1 && targets.iter().all(|&j| g.has_edge(i, j)) {
                continue;
            }
            match bfs.distances_to(g, i, &targets) {
                Some(d) => best = best.max(d.into_iter().max().unwrap_or(0)),
                None => {
                    let (col, _) = targets
                        .iter()
                        .map(|&j| (j, g.distance(i, j).ok().flatten()))
                        .find(|(_, d)| d.is_none())
                        .expect("some target unreachable");
                    return Err(Error::InfiniteBandwidth { row: i, col });
                }
            }
        }
        Ok(best)
    }

    /// Ratio of bandwidth to graph diameter. Small values mean the matrix is
    /// graph-structured in the useful sense.
    pub fn bandwidth_ratio(&self, g: &Graph) -> Result<f64> {
        let b = self.bandwidth(g)? as f64;
        let d = g.diameter().max(1) as f64;
        Ok(b / d)
    }
}

/// Bandwidths of two matrices, their sum and their product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BandwidthAlgebraReport {
    pub bw_a: usize,
    pub bw_b: usize,
    pub bw_sum: usize,
    pub bw_product: usize,
    pub algebra_holds: bool,
}

/// Checks that bandwidth is sub-additive under products and does not grow
/// under sums.
pub fn check_bandwidth_algebra(
    a: &StructuredMatrix,
    b: &StructuredMatrix,
    g: &Graph,
) -> Result<BandwidthAlgebraReport> {
    let sum = a.add(b)?;
    let prod = a.mul(b)?;
    let bw_a = a.bandwidth(g)?;
    let bw_b = b.bandwidth(g)?;
    let bw_sum = sum.bandwidth(g)?;
    let bw_product = prod.bandwidth(g)?;
    Ok(BandwidthAlgebraReport {
        bw_a,
        bw_b,
        bw_sum,
        bw_product,
        algebra_holds: bw_sum <= bw_a.max(bw_b) && bw_product <= bw_a + bw_b,
    })
}

/// Coupling entry from an expanded block row to a vertex outside the block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossEntry {
    /// Row position inside the expanded block.
    pub local_row: usize,
    /// Global column (vertex outside the expanded block).
    pub global_col: usize,
    pub value: f64,
}

/// Projection of `Hx = f` onto one expanded block.
#[derive(Debug, Clone)]
pub struct SubdomainSystem {
    pub k: usize,
    /// Owned vertices `V_k`.
    pub interior: Vec<usize>,
    /// Expanded vertices `V_k^omega` (global ids, sorted).
    pub block: Vec<usize>,
    /// Principal submatrix on `block`, local numbering.
    pub h_block: StructuredMatrix,
    /// Entries of rows in `block` whose column lies outside it, sorted by row.
    pub h_cross: Vec<CrossEntry>,
    pub f_block: Vec<f64>,
    /// Positions of `interior` inside `block`.
    pub restrict_rows: Vec<usize>,
}

impl SubdomainSystem {
    pub fn size(&self) -> usize {
        self.block.len()
    }

    /// `f_k - H_{-k} x` evaluated on the exterior part of `x` (full length).
    pub fn boundary_rhs(&self, x: &[f64]) -> Vec<f64> {
        let mut rhs = self.f_block.clone();
        for e in &self.h_cross {
            rhs[e.local_row] -= e.value * x[e.global_col];
        }
        rhs
    }

    /// Total absolute coupling to the complement of the expanded block.
    pub fn coupling_sum(&self) -> f64 {
        self.h_cross.iter().map(|e| e.value.abs()).sum()
    }

    /// Largest graph distance spanned by a coupling entry (0 when there are
    /// none).
    pub fn cross_reach(&self, g: &Graph) -> Result<usize> {
        let mut bfs = BfsScratch::new(g.n_vertices());
        let mut reach = 0;
        let mut start = 0;
        while start < self.h_cross.len() {
            let row = self.h_cross[start].local_row;
            let mut end = start;
            while end < self.h_cross.len() && self.h_cross[end].local_row == row {
                end += 1;
            }
            let targets: Vec<usize> = self.h_cross[start..end]
                .iter()
                .map(|e| e.global_col)
                .collect();
            let i = self.block[row];
            match bfs.distances_to(g, i, &targets) {
                Some(d) => reach = reach.max(d.into_iter().max().unwrap_or(0)),
                None => {
                    return Err(Error::InfiniteBandwidth {
                        row: i,
                        col: targets[0],
                    })
                }
            }
            start = end;
        }
        Ok(reach)
    }

    /// Bandwidth of the block matrix measured with global graph distances.
    pub fn block_bandwidth(&self, g: &Graph) -> Result<usize> {
        self.h_block.bandwidth_on(g, Some(&self.block))
    }

    /// Scatters the owned part of a block solution into `x`.
    pub fn restrict_into(&self, y: &[f64], x: &mut [f64]) {
        for (&v, &p) in self.interior.iter().zip(&self.restrict_rows) {
            x[v] = y[p];
        }
    }

    /// Gathers the expanded-block part of a full vector.
    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.block.iter().map(|&v| x[v]).collect()
    }
}

/// Builds the projected system of block `k`.
pub fn project_subdomain(
    h: &StructuredMatrix,
    f: &[f64],
    blocks: &OverlapBlocks,
    k: usize,
) -> Result<SubdomainSystem> {
    if h.n() != blocks.n_vertices() || f.len() != h.n() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}, rhs {}, blocks over {} vertices",
            h.n(),
            f.len(),
            blocks.n_vertices()
        )));
    }
    if k >= blocks.k() {
        return Err(Error::InvalidInput(format!("block {k} does not exist")));
    }
    if !h.is_symmetric() {
        return Err(Error::InvalidInput(
            "subdomain projection needs a symmetric matrix".into(),
        ));
    }
    let block = blocks.blocks[k].clone();
    let mut local = vec![usize::MAX; h.n()];
    for (p, &v) in block.iter().enumerate() {
        local[v] = p;
    }
    let mut inner = Vec::new();
    let mut cross = Vec::new();
    for (p, &i) in block.iter().enumerate() {
        let (c, v) = h.row(i);
        for (&j, &x) in c.iter().zip(v) {
            if local[j] != usize::MAX {
                inner.push((p, local[j], x));
            } else {
                cross.push(CrossEntry {
                    local_row: p,
                    global_col: j,
                    value: x,
                });
            }
        }
    }
    let interior = blocks.interior[k].clone();
    let restrict_rows = interior.iter().map(|&v| local[v]).collect();
    Ok(SubdomainSystem {
        k,
        h_block: StructuredMatrix::from_triplets(block.len(), &inner)?,
        f_block: block.iter().map(|&v| f[v]).collect(),
        interior,
        block,
        h_cross: cross,
        restrict_rows,
    })
}

/// `||(Hx - f)|_rows||_inf`, over all rows when `rows` is `None`.
pub fn residual_inf(
    h: &StructuredMatrix,
    x: &[f64],
    f: &[f64],
    rows: Option<&[usize]>,
) -> Result<f64> {
    if x.len() != h.n() || f.len() != h.n() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {}, x {}, f {}",
            h.n(),
            x.len(),
            f.len()
        )));
    }
    let r = |i: usize| (h.row_dot(i, x) - f[i]).abs();
    Ok(match rows {
        Some(rows) => rows.iter().map(|&i| r(i)).fold(0.0, f64::max),
        None => (0..h.n()).map(r).fold(0.0, f64::max),
    })
}
