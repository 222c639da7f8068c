//! Thick-restart block Lanczos with full reorthogonalization for the
//! smallest eigenpairs of a symmetric operator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

const BLOCK: usize = 8;
const PAR_THRESHOLD: usize = 1 << 15;
const CHUNK: usize = 1 << 13;

/// Deterministic dot product: fixed chunking, ordered reduction.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < PAR_THRESHOLD {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    parts.iter().sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if y.len() < PAR_THRESHOLD {
        y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    } else {
        y.par_iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
    }
}

/// Two passes of classical Gram–Schmidt against `basis`.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) {
    for _ in 0..2 {
        let h: Vec<f64> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, hv) in basis.iter().zip(h) {
            axpy(-hv, v, w);
        }
    }
}

/// Linear combinations Σ_j cols[j]·coef[j, c] for each requested c.
fn combine(cols: &[Vec<f64>], coef: &DMatrix<f64>, which: usize) -> Vec<Vec<f64>> {
    let n = cols[0].len();
    (0..which)
        .map(|c| {
            let mut out = vec![0.0; n];
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
                let off = ci * CHUNK;
                let len = chunk.len();
                for (j, col) in cols.iter().enumerate() {
                    let a = coef[(j, c)];
                    if a != 0.0 {
                        for (o, x) in chunk.iter_mut().zip(&col[off..off + len]) {
                            *o += a * x;
                        }
                    }
                }
            });
            out
        })
        .collect()
}

pub(crate) struct LanczosOutput {
    pub values: Vec<f64>,
    /// Euclidean-unit eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub restarts: usize,
}

/// Smallest `k` eigenpairs of the symmetric operator `apply` on R^n.
pub(crate) fn smallest(
    n: usize,
    k: usize,
    tol: f64,
    seed: u64,
    max_restarts: usize,
    apply: impl Fn(&[f64], &mut [f64]),
) -> Result<LanczosOutput> {
    let p = n.min((2 * k + 10).max(k + 20));
    let keep = (k + (p - k) / 2).clamp(k, p - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_vec = |basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..3 {
            let mut w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let before = dot(&w, &w).sqrt();
            orthogonalize(basis, &mut w);
            let len = dot(&w, &w).sqrt();
            if len > 1e-8 * before {
                w.iter_mut().for_each(|v| *v /= len);
                return Some(w);
            }
        }
        None
    };

    let mut v: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut av: Vec<Vec<f64>> = Vec::with_capacity(p);
    let push = |v: &mut Vec<Vec<f64>>, av: &mut Vec<Vec<f64>>, w: Vec<f64>| {
        let mut aw = vec![0.0; n];
        apply(&w, &mut aw);
        v.push(w);
        av.push(aw);
    };
    for _ in 0..BLOCK.min(p) {
        match random_vec(&v) {
            Some(w) => push(&mut v, &mut av, w),
            None => break,
        }
    }
    // index of the next column whose image seeds an expansion
    let mut source = 0;
    let mut last_residuals = Vec::new();

    for restart in 0..=max_restarts {
        while v.len() < p {
            let mut w = av[source].clone();
            source += 1;
            let before = dot(&w, &w).sqrt();
            orthogonalize(&v, &mut w);
            let len = dot(&w, &w).sqrt();
            let next = if len > 1e-10 * before.max(f64::MIN_POSITIVE) && len > 0.0 {
                w.iter_mut().for_each(|x| *x /= len);
                Some(w)
            } else {
                random_vec(&v)
            };
            match next {
                Some(w) => push(&mut v, &mut av, w),
                None => break,
            }
        }

        let dim = v.len();
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let entries: Vec<(usize, usize, f64)> = (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, j)| (i, j, 0.5 * (dot(&v[i], &av[j]) + dot(&v[j], &av[i]))))
            .collect();
        for (i, j, x) in entries {
            h[(i, j)] = x;
            h[(j, i)] = x;
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let s = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);

        let take = keep.min(dim);
        let y = combine(&v, &s, take);
        let ay = combine(&av, &s, take);
        let residual_vecs: Vec<Vec<f64>> = (0..k.min(take))
            .map(|i| {
                let mut r = ay[i].clone();
                axpy(-theta[i], &y[i], &mut r);
                r
            })
            .collect();
        let residuals: Vec<f64> = residual_vecs.iter().map(|r| dot(r, r).sqrt()).collect();
        let ok = |i: usize| residuals[i] <= tol * (1.0 + theta[i].abs());
        let converged = residuals.len() == k && (0..k).all(ok);
        let exhausted = dim == n;
        if converged || exhausted {
            let mut vectors = y;
            vectors.truncate(k);
            let mut residuals = residuals;
            // an exhausted space is exact up to rounding; report measured residuals
            if exhausted && !converged {
                let bad = residuals
                    .iter()
                    .zip(&theta)
                    .any(|(r, t)| *r > 1e-6 * (1.0 + t.abs()));
                if bad {
                    return Err(Error::NotConverged {
                        restarts: restart,
                        worst: residuals.iter().cloned().fold(0.0, f64::max),
                        residuals,
                    });
                }
            }
            residuals.truncate(k);
            return Ok(LanczosOutput {
                values: theta[..k].to_vec(),
                vectors,
                residuals,
                restarts: restart,
            });
        }
        v = y;
        av = ay;
        source = v.len();
        // expand from the residuals of the lowest unconverged pairs
        let mut pending: Vec<usize> = (0..residuals.len()).filter(|&i| !ok(i)).collect();
        pending.truncate(BLOCK);
        for i in pending {
            if v.len() >= p {
                break;
            }
            let mut w = residual_vecs[i].clone();
            let before = dot(&w, &w).sqrt();
            orthogonalize(&v, &mut w);
            let len = dot(&w, &w).sqrt();
            if len > 1e-10 * before.max(f64::MIN_POSITIVE) && len > 0.0 {
                w.iter_mut().for_each(|x| *x /= len);
                push(&mut v, &mut av, w);
            }
        }
        if v.len() == source && v.len() < p {
            if let Some(w) = random_vec(&v) {
                push(&mut v, &mut av, w);
            }
        }
        last_residuals = residuals;
    }
    Err(Error::NotConverged {
        restarts: max_restarts,
        worst: last_residuals.iter().cloned().fold(0.0, f64::max),
        residuals: last_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut s = 0.0;
                if i > 0 {
                    s += x[i] - x[i - 1];
                }
                if i + 1 < n {
                    s += x[i] - x[i + 1];
                }
                y[i] = s;
            }
        }
    }

    #[test]
    fn path_graph_spectrum() {
        let n = 100;
        let out = smallest(n, 6, 1e-10, 1, 2000, path_laplacian(n)).unwrap();
        for (i, lam) in out.values.iter().enumerate() {
            let want = 2.0 - 2.0 * (std::f64::consts::PI * i as f64 / n as f64).cos();
            assert!((lam - want).abs() < 1e-9, "{i}: {lam} vs {want}");
        }
    }

    #[test]
    fn exact_multiplicity_is_found() {
        // complete graph on 6 vertices: eigenvalues 0, 6 (×5)
        let n = 6;
        let apply = move |x: &[f64], y: &mut [f64]| {
            let s: f64 = x.iter().sum();
            for i in 0..n {
                y[i] = n as f64 * x[i] - s;
            }
        };
        let out = smallest(n, 4, 1e-10, 3, 100, apply).unwrap();
        assert!(out.values[0].abs() < 1e-10);
        for v in &out.values[1..] {
            assert!((v - 6.0).abs() < 1e-9);
        }
    }
}
