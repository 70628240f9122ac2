//! Symmetric eigensolvers: a full dense decomposition and a thick-restart
//! Lanczos iteration for a few eigenpairs of largest magnitude.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

/// Eigenpairs sorted by descending `|value|`, ties by descending signed
/// value and then by the solver's original index.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    /// One unit-norm eigenvector per column.
    pub vectors: DMatrix<f64>,
    /// `||A v - lambda v||` per pair.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LanczosOptions {
    /// Convergence threshold on residual norms, relative to the largest Ritz value.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    /// Basis size; `None` picks one from the number of wanted pairs.
    pub krylov_dim: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_restarts: 2000,
            seed: 0x5eed,
            krylov_dim: None,
        }
    }
}

pub(crate) fn magnitude_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(values[b].total_cmp(&values[a]))
            .then(a.cmp(&b))
    });
    idx
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Full decomposition of a dense symmetric matrix, keeping the `nev` pairs
/// of largest magnitude.
pub fn dense_symmetric(a: &DMatrix<f64>, nev: usize) -> Result<EigenPairs> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension("eigensolver needs a square matrix".into()));
    }
    if nev > n {
        return Err(Error::param(format!("requested {nev} eigenpairs of a {n}x{n} matrix")));
    }
    let eig = SymmetricEigen::new(a.clone());
    let order = magnitude_order(eig.eigenvalues.as_slice());
    let values: Vec<f64> = order[..nev].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, nev, |r, c| eig.eigenvectors[(r, order[c])]);
    let residuals = (0..nev)
        .map(|c| (a * vectors.column(c) - vectors.column(c) * values[c]).norm())
        .collect();
    Ok(EigenPairs {
        values,
        vectors,
        residuals,
    })
}

/// Thick-restart Lanczos for the `nev` eigenpairs of largest magnitude of a
/// symmetric operator given by its matrix-vector product.
///
/// The basis is fully reorthogonalized. At each restart the wanted Ritz
/// vectors plus a buffer are kept and the Krylov space is continued from the
/// residual direction of the last basis vector.
pub fn lanczos<F>(apply: F, n: usize, nev: usize, opts: &LanczosOptions) -> Result<EigenPairs>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if nev == 0 || nev > n {
        return Err(Error::param(format!("requested {nev} eigenpairs of a {n}x{n} operator")));
    }
    let m = opts
        .krylov_dim
        .unwrap_or_else(|| (2 * nev + 20).max(nev + 40))
        .clamp(nev + 1, n.max(nev + 1))
        .min(n);
    let keep = if m == n { nev } else { (nev + (m - nev) / 2).min(m - 1) };

    let mut rng = seed::rng(opts.seed);
    let mut random_unit = |basis: &[Vec<f64>]| -> Vec<f64> {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            for _ in 0..2 {
                for b in basis {
                    let c = dot(b, &v);
                    axpy(-c, b, &mut v);
                }
            }
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return v;
            }
        }
    };

    let mut basis: Vec<Vec<f64>> = vec![random_unit(&[])];
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut last_residuals = Vec::new();

    for _restart in 0..opts.max_restarts {
        // Extend the basis to m vectors; `next` ends up orthogonal to all of them.
        let mut next: Option<Vec<f64>> = None;
        let mut j = images.len();
        while j < m {
            let w = apply(&basis[j]);
            let mut f = w.clone();
            for _ in 0..2 {
                for b in basis.iter() {
                    let c = dot(b, &f);
                    axpy(-c, b, &mut f);
                }
            }
            images.push(w);
            let nf = norm(&f);
            let scale = norm(&images[j]).max(1e-300);
            let v_next = if nf > 1e-12 * scale {
                f.iter().map(|x| x / nf).collect()
            } else if basis.len() < n {
                random_unit(&basis)
            } else {
                Vec::new()
            };
            if j + 1 < m {
                basis.push(v_next);
            } else if !v_next.is_empty() {
                next = Some(v_next);
            }
            j += 1;
        }

        let h = DMatrix::from_fn(m, m, |r, c| dot(&basis[r], &images[c]));
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let order = magnitude_order(eig.eigenvalues.as_slice());
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);

        let combine = |vecs: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (k, v) in vecs.iter().enumerate() {
                axpy(eig.eigenvectors[(k, col)], v, &mut out);
            }
            out
        };

        let mut ritz = Vec::with_capacity(nev);
        let mut residuals = Vec::with_capacity(nev);
        for &c in &order[..nev] {
            let x = combine(&basis, c);
            let ax = combine(&images, c);
            let theta = eig.eigenvalues[c];
            let r: f64 = ax.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
            residuals.push(r);
            ritz.push((theta, x));
        }
        if residuals.iter().all(|r| *r <= opts.tol * scale) || m == n {
            let values: Vec<f64> = ritz.iter().map(|(t, _)| *t).collect();
            let mut vectors = DMatrix::zeros(n, nev);
            for (c, (_, x)) in ritz.into_iter().enumerate() {
                let nx = norm(&x);
                for (r, v) in x.into_iter().enumerate() {
                    vectors[(r, c)] = v / nx;
                }
            }
            let local = magnitude_order(&values);
            let values_sorted: Vec<f64> = local.iter().map(|&i| values[i]).collect();
            let vectors_sorted = DMatrix::from_fn(n, nev, |r, c| vectors[(r, local[c])]);
            let residuals_sorted = local.iter().map(|&i| residuals[i]).collect();
            return Ok(EigenPairs {
                values: values_sorted,
                vectors: vectors_sorted,
                residuals: residuals_sorted,
            });
        }
        last_residuals = residuals;

        let mut new_basis: Vec<Vec<f64>> = order[..keep].iter().map(|&c| combine(&basis, c)).collect();
        let new_images: Vec<Vec<f64>> = order[..keep].iter().map(|&c| combine(&images, c)).collect();
        let mut cont = next.unwrap_or_else(|| random_unit(&new_basis));
        for _ in 0..2 {
            for b in &new_basis {
                let c = dot(b, &cont);
                axpy(-c, b, &mut cont);
            }
        }
        let nc = norm(&cont);
        if nc > 1e-8 {
            cont.iter_mut().for_each(|x| *x /= nc);
        } else {
            cont = random_unit(&new_basis);
        }
        new_basis.push(cont);
        basis = new_basis;
        images = new_images;
    }

    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        residuals: last_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seed::rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn ordering_by_magnitude() {
        assert_eq!(magnitude_order(&[0.5, -0.9, 0.9, 0.1]), vec![2, 1, 0, 3]);
        assert_eq!(magnitude_order(&[-1.0, 1.0]), vec![1, 0]);
    }

    #[test]
    fn dense_pairs_have_small_residuals() {
        let a = random_symmetric(30, 1);
        let e = dense_symmetric(&a, 5).unwrap();
        assert!(e.residuals.iter().all(|r| *r < 1e-12));
        for w in e.values.windows(2) {
            assert!(w[0].abs() >= w[1].abs());
        }
    }

    #[test]
    fn lanczos_matches_dense() {
        let a = random_symmetric(200, 2);
        let dense = dense_symmetric(&a, 6).unwrap();
        let apply = |x: &[f64]| (&a * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec();
        let opts = LanczosOptions::default();
        let lz = lanczos(apply, 200, 6, &opts).unwrap();
        for (x, y) in lz.values.iter().zip(&dense.values) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
        for c in 0..6 {
            let overlap = lz.vectors.column(c).dot(&dense.vectors.column(c)).abs();
            assert!((overlap - 1.0).abs() < 1e-8);
        }
        assert!(lz.residuals.iter().all(|r| *r < 1e-9));
    }

    #[test]
    fn lanczos_on_tiny_operator_uses_whole_space() {
        let a = random_symmetric(8, 3);
        let apply = |x: &[f64]| (&a * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec();
        let lz = lanczos(apply, 8, 3, &LanczosOptions::default()).unwrap();
        let dense = dense_symmetric(&a, 3).unwrap();
        for (x, y) in lz.values.iter().zip(&dense.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
