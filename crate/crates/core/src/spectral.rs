//! Spectral decomposition of the Markov operator and the diffusion map
//! embedding built from it.
//!
//! The symmetric conjugate `Ms` is decomposed, never `M` itself. Right and
//! left eigenvectors of `M` are recovered as
//! `psi_i = sqrt(tr D~) v_i / sqrt(d~)` and `phi_i = v_i sqrt(d~) / sqrt(tr D~)`,
//! which makes `psi_0` the constant vector of ones and `phi_0` the
//! stationary distribution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datasets::DataMatrix;
use crate::eigen::{self, EigenPairs, LanczosOptions};
use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphMatrices, KernelParams, SquareMatrix};

/// Largest `n` decomposed with the full dense solver under [`Solver::Auto`].
pub const FULL_DECOMPOSITION_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Dense for small dense operators, Lanczos otherwise.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverOptions {
    pub solver: Solver,
    pub lanczos: LanczosOptions,
}

/// Eigenvalues and eigenvectors of the Markov matrix.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    /// Sorted by descending `|lambda|`; `eigenvalues[0]` is the trivial 1.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors of `Ms`, one per column.
    pub v: DMatrix<f64>,
    /// Right eigenvectors of `M`.
    pub psi: DMatrix<f64>,
    /// Left eigenvectors of `M`.
    pub phi: DMatrix<f64>,
    pub d_tilde: Vec<f64>,
    pub params: Option<KernelParams>,
    /// `||Ms v_i - lambda_i v_i||` reported by the solver.
    pub residuals: Vec<f64>,
}

impl DiffusionModel {
    /// Number of nontrivial components available, i.e. `k_max`.
    pub fn k_max(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    /// Indices of retained components with a negative eigenvalue.
    pub fn negative_eigenvalues(&self) -> Vec<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| **l < 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// `||M psi_i - lambda_i psi_i|| / ||psi_i||` for every retained pair.
    pub fn right_residuals(&self, m: &SquareMatrix) -> Vec<f64> {
        (0..self.eigenvalues.len())
            .map(|i| {
                let psi: Vec<f64> = self.psi.column(i).iter().copied().collect();
                let mpsi = m.matvec(&psi);
                let lam = self.eigenvalues[i];
                let r: f64 = mpsi.iter().zip(&psi).map(|(a, b)| (a - lam * b).powi(2)).sum();
                let nrm: f64 = psi.iter().map(|v| v * v).sum();
                (r / nrm).sqrt()
            })
            .collect()
    }
}

/// Top `k_max + 1` eigenpairs of `Ms`, transformed to eigenvectors of `M`.
pub fn decompose(ms: &SquareMatrix, d_tilde: &[f64], k_max: usize) -> Result<DiffusionModel> {
    decompose_with(ms, d_tilde, k_max, &SolverOptions::default())
}

pub fn decompose_with(
    ms: &SquareMatrix,
    d_tilde: &[f64],
    k_max: usize,
    opts: &SolverOptions,
) -> Result<DiffusionModel> {
    let n = ms.dim();
    if d_tilde.len() != n {
        return Err(Error::Dimension(format!("{} degrees for a {n}x{n} matrix", d_tilde.len())));
    }
    if d_tilde.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::param("degrees must be strictly positive"));
    }
    if k_max + 1 > n {
        return Err(Error::param(format!(
            "k_max = {k_max} needs {} eigenpairs but the graph has only {n} nodes",
            k_max + 1
        )));
    }
    let nev = k_max + 1;
    let use_dense = match opts.solver {
        Solver::Dense => true,
        Solver::Lanczos => false,
        Solver::Auto => !ms.is_sparse() && n <= FULL_DECOMPOSITION_LIMIT,
    };
    let pairs: EigenPairs = if use_dense {
        eigen::dense_symmetric(&ms.to_dense(), nev)?
    } else {
        eigen::lanczos(|x| ms.matvec(x), n, nev, &opts.lanczos)?
    };

    let trace: f64 = d_tilde.iter().sum();
    let sqrt_trace = trace.sqrt();
    let sqrt_d: Vec<f64> = d_tilde.iter().map(|d| d.sqrt()).collect();

    let mut v = pairs.vectors;
    let mut psi = DMatrix::zeros(n, nev);
    let mut phi = DMatrix::zeros(n, nev);
    for c in 0..nev {
        for r in 0..n {
            psi[(r, c)] = sqrt_trace * v[(r, c)] / sqrt_d[r];
        }
        // Largest-magnitude entry of psi made positive; first index wins ties.
        let mut best = 0;
        for r in 1..n {
            if psi[(r, c)].abs() > psi[(best, c)].abs() {
                best = r;
            }
        }
        if psi[(best, c)] < 0.0 {
            psi.column_mut(c).neg_mut();
            v.column_mut(c).neg_mut();
        }
        for r in 0..n {
            phi[(r, c)] = v[(r, c)] * sqrt_d[r] / sqrt_trace;
        }
    }

    Ok(DiffusionModel {
        eigenvalues: pairs.values,
        v,
        psi,
        phi,
        d_tilde: d_tilde.to_vec(),
        params: None,
        residuals: pairs.residuals,
    })
}

/// Graph construction and decomposition in one call. Disconnected graphs
/// are rejected.
pub fn diffusion_map(
    x: &DataMatrix,
    params: &KernelParams,
    k_max: usize,
    opts: &SolverOptions,
) -> Result<(GraphMatrices, DiffusionModel)> {
    let graph = build_graph(x, params)?;
    graph.ensure_connected()?;
    let mut model = decompose_with(&graph.ms, &graph.d_tilde, k_max, opts)?;
    model.params = Some(*params);
    Ok((graph, model))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Diffusion,
    Pca,
}

impl EmbeddingSource {
    pub fn column_prefix(self) -> &'static str {
        match self {
            EmbeddingSource::Diffusion => "psi",
            EmbeddingSource::Pca => "pc",
        }
    }
}

/// Selected components of an embedding, one column per component.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub coords: DMatrix<f64>,
    pub component_indices: Vec<usize>,
    pub t: u32,
    pub source: EmbeddingSource,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn column_of(&self, component: usize) -> Option<Vec<f64>> {
        let pos = self.component_indices.iter().position(|&c| c == component)?;
        Some(self.coords.column(pos).iter().copied().collect())
    }

    /// Columns for the requested component indices, in the requested order.
    pub fn select(&self, components: &[usize]) -> Result<DMatrix<f64>> {
        let mut cols = Vec::with_capacity(components.len());
        for &c in components {
            let pos = self
                .component_indices
                .iter()
                .position(|&k| k == c)
                .ok_or_else(|| Error::param(format!("component {c} is not part of this embedding")))?;
            cols.push(pos);
        }
        Ok(self.coords.select_columns(&cols))
    }

    pub fn column_names(&self) -> Vec<String> {
        let prefix = self.source.column_prefix();
        self.component_indices.iter().map(|c| format!("{prefix}_{c}")).collect()
    }
}

/// Diffusion coordinates `lambda_c^t psi_c` for the requested components.
pub fn embed(model: &DiffusionModel, t: u32, components: &[usize]) -> Result<Embedding> {
    let k_max = model.k_max();
    for &c in components {
        if c == 0 {
            return Err(Error::param(
                "component 0 is the constant eigenvector psi_0 and carries no information",
            ));
        }
        if c > k_max {
            return Err(Error::param(format!("component {c} exceeds k_max = {k_max}")));
        }
    }
    let n = model.n();
    let mut coords = DMatrix::zeros(n, components.len());
    for (j, &c) in components.iter().enumerate() {
        let scale = model.eigenvalues[c].powi(t as i32);
        for r in 0..n {
            coords[(r, j)] = scale * model.psi[(r, c)];
        }
    }
    Ok(Embedding {
        coords,
        component_indices: components.to_vec(),
        t,
        source: EmbeddingSource::Diffusion,
    })
}

/// Every retained component, `1..=k_max`.
pub fn embed_all(model: &DiffusionModel, t: u32) -> Result<Embedding> {
    let comps: Vec<usize> = (1..=model.k_max()).collect();
    embed(model, t, &comps)
}

/// `D_t^2(x_i, x_j) = sum_y (p_t(y|i) - p_t(y|j))^2 / phi_0(y)` with the
/// transition probabilities taken from explicit powers of `M`.
pub fn diffusion_distance(m: &SquareMatrix, t: u32, i: usize, j: usize, phi0: &[f64]) -> Result<f64> {
    let n = m.dim();
    if t < 1 {
        return Err(Error::param("diffusion time must be >= 1"));
    }
    if i >= n || j >= n || phi0.len() != n {
        return Err(Error::Dimension(format!("indices ({i}, {j}) or weights do not fit n = {n}")));
    }
    if i == j {
        return Ok(0.0);
    }
    let propagate = |start: usize| {
        let mut p = vec![0.0; n];
        p[start] = 1.0;
        for _ in 0..t {
            p = m.vecmat(&p);
        }
        p
    };
    let (pi, pj) = (propagate(i), propagate(j));
    Ok(pi
        .iter()
        .zip(&pj)
        .zip(phi0)
        .map(|((a, b), w)| (a - b).powi(2) / w)
        .sum())
}

/// `s(delta, t) = max { l : |lambda_l|^t > delta |lambda_1|^t }` over the
/// retained components.
pub fn spectrum_threshold(model: &DiffusionModel, delta: f64, t: u32) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    if model.k_max() == 0 {
        return Ok(0);
    }
    let reference = delta * model.eigenvalues[1].abs().powi(t as i32);
    Ok((1..=model.k_max())
        .filter(|&l| model.eigenvalues[l].abs().powi(t as i32) > reference)
        .max()
        .unwrap_or(0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub index: usize,
    pub lambda: f64,
    /// `lambda^t` for each requested `t`.
    pub powers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub t_list: Vec<u32>,
    pub rows: Vec<SpectrumRow>,
}

pub fn export_spectrum(model: &DiffusionModel, t_list: &[u32]) -> SpectrumTable {
    let rows = model
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(index, &lambda)| SpectrumRow {
            index,
            lambda,
            powers: t_list.iter().map(|&t| lambda.powi(t as i32)).collect(),
        })
        .collect();
    SpectrumTable {
        t_list: t_list.to_vec(),
        rows,
    }
}
