//! Neighborhood graph construction: squared distances, Gaussian kernel,
//! nearest-neighbor truncation, anisotropic (density) normalization and the
//! Markov normalization together with its symmetric conjugate.
//!
//! The kernel convention is `K_ij = exp(-||x_i - x_j||^2 / epsilon)` with the
//! bare `epsilon` in the denominator.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datasets::DataMatrix;
use crate::error::{Error, Result};

/// Largest `n` for which dense `n x n` storage is used.
pub const DENSE_LIMIT: usize = 10_000;

/// How many nearest neighbors (self included) keep their kernel weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Neighbors {
    #[default]
    All,
    Count(usize),
}

impl Neighbors {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            Neighbors::All => n,
            Neighbors::Count(k) => k,
        }
    }
}

impl fmt::Display for Neighbors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Neighbors::All => f.write_str("all"),
            Neighbors::Count(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for Neighbors {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Neighbors::All);
        }
        s.parse::<usize>()
            .map(Neighbors::Count)
            .map_err(|_| Error::param(format!("neighbor count must be an integer or `all`, got `{s}`")))
    }
}

impl Serialize for Neighbors {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Neighbors::All => s.serialize_str("all"),
            Neighbors::Count(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Neighbors {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(Neighbors::Count(k)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub epsilon: f64,
    #[serde(default)]
    pub n_neighbors: Neighbors,
    #[serde(default)]
    pub alpha: f64,
}

impl KernelParams {
    pub fn new(epsilon: f64, n_neighbors: Neighbors, alpha: f64) -> Self {
        Self {
            epsilon,
            n_neighbors,
            alpha,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        check_neighbors(self.n_neighbors.resolve(n), n)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
    }
    Ok(())
}

fn check_neighbors(k: usize, n: usize) -> Result<()> {
    if k < 1 || k > n {
        return Err(Error::param(format!("neighbor count must lie in 1..={n}, got {k}")));
    }
    Ok(())
}

/// Compressed sparse rows with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Rows of `(column, value)` pairs; each row is sorted here.
    pub fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] = f(i, self.cols[k], self.vals[k]);
            }
        }
        out
    }
}

/// Square matrix stored densely or in compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub enum SquareMatrix {
    Dense(DMatrix<f64>),
    Sparse(Csr),
}

impl SquareMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SquareMatrix::Dense(m) => m.nrows(),
            SquareMatrix::Sparse(c) => c.dim(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, SquareMatrix::Sparse(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            SquareMatrix::Dense(m) => m[(i, j)],
            SquareMatrix::Sparse(c) => c.get(i, j),
        }
    }

    /// Number of stored nonzero entries.
    pub fn nnz(&self) -> usize {
        match self {
            SquareMatrix::Dense(m) => m.iter().filter(|v| **v != 0.0).count(),
            SquareMatrix::Sparse(c) => c.vals.iter().filter(|v| **v != 0.0).count(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.dim();
        match self {
            SquareMatrix::Dense(m) => (0..n)
                .into_par_iter()
                .map(|i| m.row(i).iter().sum())
                .collect(),
            SquareMatrix::Sparse(c) => (0..n).map(|i| c.row(i).1.iter().sum()).collect(),
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n, "matvec: length mismatch");
        match self {
            SquareMatrix::Dense(m) => (0..n)
                .into_par_iter()
                .map(|i| m.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            SquareMatrix::Sparse(c) => (0..n)
                .into_par_iter()
                .map(|i| {
                    let (cols, vals) = c.row(i);
                    cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum()
                })
                .collect(),
        }
    }

    /// Row vector times matrix, `y^T = x^T A`.
    pub fn vecmat(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n, "vecmat: length mismatch");
        let mut y = vec![0.0; n];
        match self {
            SquareMatrix::Dense(m) => {
                for j in 0..n {
                    y[j] = m.column(j).iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            SquareMatrix::Sparse(c) => {
                for (i, &xi) in x.iter().enumerate() {
                    let (cols, vals) = c.row(i);
                    for (&j, v) in cols.iter().zip(vals) {
                        y[j] += xi * v;
                    }
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SquareMatrix::Dense(m) => m.clone(),
            SquareMatrix::Sparse(c) => {
                let mut m = DMatrix::zeros(c.n, c.n);
                for i in 0..c.n {
                    let (cols, vals) = c.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        m[(i, j)] = v;
                    }
                }
                m
            }
        }
    }

    /// Entry-wise `f(i, j, a_ij)` over the stored pattern.
    fn map(&self, f: impl Fn(usize, usize, f64) -> f64 + Sync) -> Self {
        match self {
            SquareMatrix::Dense(m) => {
                let n = m.nrows();
                let mut out = m.clone();
                out.as_mut_slice()
                    .par_chunks_mut(n)
                    .enumerate()
                    .for_each(|(j, col)| {
                        for (i, v) in col.iter_mut().enumerate() {
                            *v = f(i, j, *v);
                        }
                    });
                SquareMatrix::Dense(out)
            }
            SquareMatrix::Sparse(c) => SquareMatrix::Sparse(c.map_values(f)),
        }
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        match self {
            SquareMatrix::Dense(m) => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
                    }
                }
            }
            SquareMatrix::Sparse(c) => {
                for i in 0..n {
                    let (cols, vals) = c.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        worst = worst.max((v - c.get(j, i)).abs());
                    }
                }
            }
        }
        worst
    }

    /// Nonzero entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            match self {
                SquareMatrix::Dense(m) => {
                    for j in 0..n {
                        if m[(i, j)] != 0.0 {
                            out.push((i, j, m[(i, j)]));
                        }
                    }
                }
                SquareMatrix::Sparse(c) => {
                    let (cols, vals) = c.row(i);
                    out.extend(
                        cols.iter()
                            .zip(vals)
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(&j, &v)| (i, j, v)),
                    );
                }
            }
        }
        out
    }

    /// Unweighted adjacency lists of the nonzero off-diagonal pattern.
    fn neighbors_of(&self, i: usize) -> Vec<usize> {
        match self {
            SquareMatrix::Dense(m) => (0..m.ncols())
                .filter(|&j| j != i && m[(i, j)] != 0.0)
                .collect(),
            SquareMatrix::Sparse(c) => {
                let (cols, vals) = c.row(i);
                cols.iter()
                    .zip(vals)
                    .filter(|(&j, v)| j != i && **v != 0.0)
                    .map(|(&j, _)| j)
                    .collect()
            }
        }
    }
}

/// All squared Euclidean distances. The diagonal is exactly zero and the
/// result is exactly symmetric.
pub fn pairwise_sq_dists(x: &DataMatrix) -> DMatrix<f64> {
    let v = x.values();
    let n = v.nrows();
    // Row-major copy so each point is contiguous.
    let rows: Vec<Vec<f64>> = (0..n).map(|i| v.row(i).iter().copied().collect()).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| sq_dist(&rows[i], &rows[j])).collect())
        .collect();
    let mut d2 = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            d2[(i, j)] = d;
            d2[(j, i)] = d;
        }
    }
    d2
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gaussian_kernel(d2: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    check_epsilon(epsilon)?;
    let mut k = d2.map(|d| (-d / epsilon).exp());
    k.fill_diagonal(1.0);
    Ok(k)
}

/// Indices of the `k` nearest points to `i` (self first), ranked by squared
/// distance with ties broken by index.
fn nearest(i: usize, dists: &[f64], k: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..dists.len()).filter(|&j| j != i).collect();
    let key = |&a: &usize, &b: &usize| dists[a].total_cmp(&dists[b]).then(a.cmp(&b));
    let take = k - 1;
    if take > 0 && take < others.len() {
        others.select_nth_unstable_by(take - 1, key);
        others.truncate(take);
    } else {
        others.truncate(take);
    }
    let mut out = Vec::with_capacity(k);
    out.push(i);
    out.extend(others);
    out
}

/// Union neighbor pattern: row `i` lists `j` if either point has the other
/// among its `k` nearest.
fn union_pattern(n: usize, k: usize, dist_row: impl Fn(usize) -> Vec<f64> + Sync) -> Vec<Vec<usize>> {
    let lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| nearest(i, &dist_row(i), k))
        .collect();
    let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, list) in lists.iter().enumerate() {
        for &j in list {
            pattern[i].push(j);
            pattern[j].push(i);
        }
    }
    for row in pattern.iter_mut() {
        row.sort_unstable();
        row.dedup();
    }
    pattern
}

fn prefers_sparse(k: usize, n: usize) -> bool {
    k * 4 < n
}

/// Keep `K_ij` only where `j` is among the `k` nearest of `i` or vice versa.
/// The diagonal always survives. Stored sparse when `k < n / 4`.
pub fn knn_sparsify(kernel: &DMatrix<f64>, d2: &DMatrix<f64>, k: usize) -> Result<SquareMatrix> {
    let n = kernel.nrows();
    if kernel.ncols() != n || d2.shape() != kernel.shape() {
        return Err(Error::Dimension("kernel and distance matrices must be square and equal-sized".into()));
    }
    check_neighbors(k, n)?;
    if k == n {
        return Ok(SquareMatrix::Dense(kernel.clone()));
    }
    let pattern = union_pattern(n, k, |i| d2.row(i).iter().copied().collect());
    if prefers_sparse(k, n) {
        let rows = pattern
            .iter()
            .enumerate()
            .map(|(i, cols)| cols.iter().map(|&j| (j, kernel[(i, j)])).collect())
            .collect();
        Ok(SquareMatrix::Sparse(Csr::from_rows(rows)))
    } else {
        let mut out = DMatrix::zeros(n, n);
        for (i, cols) in pattern.iter().enumerate() {
            for &j in cols {
                out[(i, j)] = kernel[(i, j)];
            }
        }
        Ok(SquareMatrix::Dense(out))
    }
}

/// `L = D^-alpha K D^-alpha` with `D_ii = sum_j K_ij`.
pub fn anisotropic_normalize(kernel: &SquareMatrix, alpha: f64) -> Result<SquareMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let degree = positive_row_sums(kernel)?;
    if alpha == 0.0 {
        return Ok(kernel.clone());
    }
    let scale: Vec<f64> = degree.iter().map(|d| d.powf(-alpha)).collect();
    Ok(kernel.map(|i, j, v| v * (scale[i] * scale[j])))
}

fn positive_row_sums(m: &SquareMatrix) -> Result<Vec<f64>> {
    let sums = m.row_sums();
    let isolated: Vec<usize> = sums
        .iter()
        .enumerate()
        .filter(|(_, s)| !(**s > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !isolated.is_empty() {
        return Err(Error::IsolatedPoints { indices: isolated });
    }
    Ok(sums)
}

/// Row-stochastic transition matrix and its symmetric conjugate.
#[derive(Clone, Debug)]
pub struct MarkovMatrices {
    /// `M = D~^-1 L`.
    pub m: SquareMatrix,
    /// `Ms = D~^(1/2) M D~^(-1/2) = D~^(-1/2) L D~^(-1/2)`.
    pub ms: SquareMatrix,
    /// Row sums of `L`.
    pub d_tilde: Vec<f64>,
}

pub fn markov_normalize(l: &SquareMatrix) -> Result<MarkovMatrices> {
    let d_tilde = positive_row_sums(l)?;
    let inv: Vec<f64> = d_tilde.iter().map(|d| 1.0 / d).collect();
    let inv_sqrt: Vec<f64> = d_tilde.iter().map(|d| 1.0 / d.sqrt()).collect();
    let m = l.map(|i, _, v| v * inv[i]);
    let ms = l.map(|i, j, v| v * (inv_sqrt[i] * inv_sqrt[j]));
    Ok(MarkovMatrices { m, ms, d_tilde })
}

/// Connected-component label per node, over nonzero off-diagonal entries.
/// Labels are assigned in order of each component's smallest node.
pub fn component_labels(graph: &SquareMatrix) -> Vec<usize> {
    let n = graph.dim();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for j in graph.neighbors_of(i) {
                if label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    label
}

pub fn connectivity_check(graph: &SquareMatrix) -> usize {
    component_labels(graph).into_iter().max().map_or(0, |m| m + 1)
}

/// Every matrix of the graph construction for one dataset.
#[derive(Clone, Debug)]
pub struct GraphMatrices {
    pub k: SquareMatrix,
    pub l: SquareMatrix,
    pub m: SquareMatrix,
    pub ms: SquareMatrix,
    pub d_tilde: Vec<f64>,
    pub components: usize,
    pub params: KernelParams,
}

impl GraphMatrices {
    pub fn ensure_connected(&self) -> Result<()> {
        if self.components > 1 {
            return Err(Error::Disconnected {
                components: self.components,
            });
        }
        Ok(())
    }

    /// Stationary distribution of `M`, `d~ / sum(d~)`.
    pub fn stationary(&self) -> Vec<f64> {
        let total: f64 = self.d_tilde.iter().sum();
        self.d_tilde.iter().map(|d| d / total).collect()
    }
}

/// Run kernel construction through Markov normalization.
///
/// Dense when every point keeps all neighbors (or `k >= n / 4`); otherwise
/// the truncated kernel is assembled row by row without materializing the
/// full distance matrix.
pub fn build_graph(x: &DataMatrix, params: &KernelParams) -> Result<GraphMatrices> {
    let n = x.nrows();
    params.validate(n)?;
    let k_nn = params.n_neighbors.resolve(n);

    let kernel = if prefers_sparse(k_nn, n) {
        let v = x.values();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| v.row(i).iter().copied().collect()).collect();
        let dist_row = |i: usize| rows.iter().map(|r| sq_dist(&rows[i], r)).collect::<Vec<f64>>();
        let pattern = union_pattern(n, k_nn, dist_row);
        let eps = params.epsilon;
        let csr_rows = pattern
            .iter()
            .enumerate()
            .map(|(i, cols)| {
                cols.iter()
                    .map(|&j| {
                        let w = if i == j { 1.0 } else { (-sq_dist(&rows[i], &rows[j]) / eps).exp() };
                        (j, w)
                    })
                    .collect()
            })
            .collect();
        SquareMatrix::Sparse(Csr::from_rows(csr_rows))
    } else {
        if n > DENSE_LIMIT {
            return Err(Error::param(format!(
                "n = {n} exceeds the dense limit {DENSE_LIMIT}; use fewer than n/4 neighbors"
            )));
        }
        let d2 = pairwise_sq_dists(x);
        let full = gaussian_kernel(&d2, params.epsilon)?;
        knn_sparsify(&full, &d2, k_nn)?
    };

    let components = connectivity_check(&kernel);
    let l = anisotropic_normalize(&kernel, params.alpha)?;
    let MarkovMatrices { m, ms, d_tilde } = markov_normalize(&l)?;
    Ok(GraphMatrices {
        k: kernel,
        l,
        m,
        ms,
        d_tilde,
        components,
        params: *params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = seed::rng(seed);
        DataMatrix::from_matrix(DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() * 2.0 - 1.0)).unwrap()
    }

    #[test]
    fn three_four_five() {
        let x = DataMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0])).unwrap();
        let d2 = pairwise_sq_dists(&x);
        assert_eq!(d2[(0, 1)], 25.0);
        assert_eq!(d2[(1, 0)], 25.0);
        assert_eq!(d2[(0, 0)], 0.0);
    }

    #[test]
    fn kernel_values() {
        let eps = 0.7;
        let d2 = DMatrix::from_row_slice(2, 2, &[0.0, eps, eps, 0.0]);
        let k = gaussian_kernel(&d2, eps).unwrap();
        assert!((k[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(k[(0, 0)], 1.0);
        let ones = gaussian_kernel(&DMatrix::zeros(4, 4), 1.0).unwrap();
        assert!(ones.iter().all(|&v| v == 1.0));
        assert!(gaussian_kernel(&d2, 0.0).is_err());
        assert!(gaussian_kernel(&d2, -1.0).is_err());
    }

    #[test]
    fn knn_full_and_self_only() {
        let x = random_data(30, 2, 3);
        let d2 = pairwise_sq_dists(&x);
        let k = gaussian_kernel(&d2, 0.5).unwrap();
        assert_eq!(knn_sparsify(&k, &d2, 30).unwrap().to_dense(), k);
        let diag = knn_sparsify(&k, &d2, 1).unwrap();
        assert_eq!(diag.to_dense(), DMatrix::identity(30, 30));
        assert_eq!(connectivity_check(&diag), 30);
        assert!(knn_sparsify(&k, &d2, 0).is_err());
        assert!(knn_sparsify(&k, &d2, 31).is_err());
    }

    #[test]
    fn knn_union_is_symmetric_with_enough_entries() {
        let x = random_data(80, 3, 4);
        let d2 = pairwise_sq_dists(&x);
        let k = gaussian_kernel(&d2, 0.3).unwrap();
        for nn in [2, 5, 19, 25] {
            let s = knn_sparsify(&k, &d2, nn).unwrap();
            assert_eq!(s.is_sparse(), nn * 4 < 80);
            let dense = s.to_dense();
            assert_eq!(dense, dense.transpose());
            for i in 0..80 {
                let nz = dense.row(i).iter().filter(|v| **v != 0.0).count();
                assert!(nz >= nn);
                assert_eq!(dense[(i, i)], 1.0);
            }
        }
    }

    #[test]
    fn row_wise_builder_matches_dense_route() {
        let x = random_data(60, 3, 8);
        let params = KernelParams::new(0.4, Neighbors::Count(6), 0.5);
        let g = build_graph(&x, &params).unwrap();
        assert!(g.k.is_sparse());
        let d2 = pairwise_sq_dists(&x);
        let k = gaussian_kernel(&d2, 0.4).unwrap();
        let expect = knn_sparsify(&k, &d2, 6).unwrap();
        assert_eq!(g.k, expect);
    }

    #[test]
    fn alpha_zero_is_identity() {
        let x = random_data(20, 2, 5);
        let k = SquareMatrix::Dense(gaussian_kernel(&pairwise_sq_dists(&x), 0.5).unwrap());
        assert_eq!(anisotropic_normalize(&k, 0.0).unwrap(), k);
        assert!(anisotropic_normalize(&k, 1.5).is_err());
    }

    #[test]
    fn uniform_kernel_stays_uniform() {
        let k = SquareMatrix::Dense(DMatrix::from_element(6, 6, 1.0));
        for alpha in [0.25, 0.5, 1.0] {
            let l = anisotropic_normalize(&k, alpha).unwrap().to_dense();
            let first = l[(0, 0)];
            assert!((first - 6f64.powf(-2.0 * alpha)).abs() < 1e-15);
            assert!(l.iter().all(|v| (v - first).abs() < 1e-15));
        }
    }

    #[test]
    fn isolated_point_is_reported() {
        let mut m = DMatrix::from_element(3, 3, 0.5);
        m.row_mut(1).fill(0.0);
        m.column_mut(1).fill(0.0);
        match anisotropic_normalize(&SquareMatrix::Dense(m.clone()), 0.5) {
            Err(Error::IsolatedPoints { indices }) => assert_eq!(indices, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(markov_normalize(&SquareMatrix::Dense(m)).is_err());
    }

    #[test]
    fn markov_rows_and_conjugation() {
        let x = random_data(40, 3, 6);
        let g = build_graph(&x, &KernelParams::new(0.5, Neighbors::All, 0.5)).unwrap();
        for s in g.m.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let ones = vec![1.0; 40];
        for v in g.m.matvec(&ones) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let m = g.m.to_dense();
        let ms = g.ms.to_dense();
        for i in 0..40 {
            for j in 0..40 {
                let via_m = g.d_tilde[i].sqrt() * m[(i, j)] / g.d_tilde[j].sqrt();
                assert!((via_m - ms[(i, j)]).abs() < 1e-10);
            }
        }
        assert_eq!(g.ms.max_asymmetry(), 0.0);
        assert_eq!(g.components, 1);
    }

    #[test]
    fn component_counts() {
        let full = SquareMatrix::Dense(DMatrix::from_element(5, 5, 0.3));
        assert_eq!(connectivity_check(&full), 1);
        let mut block = DMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                if (i < 2) == (j < 2) {
                    block[(i, j)] = 1.0;
                }
            }
        }
        let block = SquareMatrix::Dense(block);
        assert_eq!(connectivity_check(&block), 2);
        assert_eq!(component_labels(&block), vec![0, 0, 1, 1, 1]);
    }

    #[test]
    fn neighbors_parse_and_serialize() {
        assert_eq!("all".parse::<Neighbors>().unwrap(), Neighbors::All);
        assert_eq!("12".parse::<Neighbors>().unwrap(), Neighbors::Count(12));
        assert!("x".parse::<Neighbors>().is_err());
        let p: KernelParams = serde_json::from_str(r#"{"epsilon":1.0,"n_neighbors":10}"#).unwrap();
        assert_eq!(p.n_neighbors, Neighbors::Count(10));
        assert_eq!(p.alpha, 0.0);
        let s = serde_json::to_string(&KernelParams::new(2.0, Neighbors::All, 1.0)).unwrap();
        assert!(s.contains(r#""n_neighbors":"all""#));
    }
}
