//! Low-lying eigenpairs of graph Laplacians and their comparison with the
//! analytic continuum spectrum.
//!
//! Discrete eigenvectors are scaled to unit norm in L²(μ_N), the empirical
//! measure on the cloud, so that the constant eigenvector is ±1 on both the
//! discrete and the continuum side. Comparison inside eigenvalue multiplets
//! goes through an orthogonal Procrustes alignment, never raw index matching.

mod lanczos;

pub(crate) use lanczos::dot;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cluster_ranges, ContinuumSpectrum, PointCloud};
use crate::graph::SparseLaplacian;
use crate::spatial::CellGrid;

pub const NORMALIZATION: &str = "L2(mu_N)";
pub const DEFAULT_MAX_RESTARTS: usize = 1000;

/// k eigenpairs stored column-major, each vector of length N.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    n: usize,
    eigenvalues: Vec<f64>,
    vectors: Vec<f64>,
    residuals: Vec<f64>,
    restarts: usize,
}

impl EigenSystem {
    /// Builds a system from explicit eigenpairs (vectors column-major and
    /// already in the L²(μ_N) convention).
    pub fn from_parts(n: usize, eigenvalues: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != n * eigenvalues.len() {
            return Err(Error::Dimension {
                expected: n * eigenvalues.len(),
                got: vectors.len(),
            });
        }
        let residuals = vec![0.0; eigenvalues.len()];
        Ok(EigenSystem {
            n,
            eigenvalues,
            vectors,
            residuals,
            restarts: 0,
        })
    }

    /// Analytic eigenvalues with eigenfunctions evaluated on the cloud.
    /// Useful to inject the continuum objects in place of the graph ones.
    pub fn from_continuum(spectrum: &ContinuumSpectrum, cloud: &PointCloud, k: usize) -> Result<Self> {
        if k > spectrum.len() {
            return Err(Error::Config(format!(
                "requested {k} continuum modes but only {} are tabulated",
                spectrum.len()
            )));
        }
        let n = cloud.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; k];
                spectrum.eval_all(cloud.point(i), &mut row);
                row
            })
            .collect();
        let mut vectors = vec![0.0; n * k];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                vectors[j * n + i] = *v;
            }
        }
        Self::from_parts(n, spectrum.eigenvalues()[..k].to_vec(), vectors)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.n..(i + 1) * self.n]
    }

    /// Column-major N×k storage.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// ‖Δψ − λψ‖₂ / ‖ψ‖₂ for each returned pair.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Solver restarts used (0 for explicitly supplied pairs).
    pub fn restarts(&self) -> usize {
        self.restarts
    }

    /// Keeps the first `k` pairs.
    pub fn truncated(&self, k: usize) -> EigenSystem {
        let k = k.min(self.k());
        EigenSystem {
            n: self.n,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            vectors: self.vectors[..k * self.n].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            restarts: self.restarts,
        }
    }
}

/// The `k` smallest eigenpairs of Δ_N.
pub fn smallest_eigenpairs(lap: &SparseLaplacian, k: usize, tol: f64, seed: u64) -> Result<EigenSystem> {
    smallest_eigenpairs_with(lap, k, tol, seed, DEFAULT_MAX_RESTARTS)
}

pub fn smallest_eigenpairs_with(
    lap: &SparseLaplacian,
    k: usize,
    tol: f64,
    seed: u64,
    max_restarts: usize,
) -> Result<EigenSystem> {
    let n = lap.len();
    if k == 0 || k >= n {
        return Err(Error::Config(format!("need 1 <= k < N, got k={k}, N={n}")));
    }
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::Config(format!("solver tolerance must lie in (0, 1e-4], got {tol}")));
    }
    if !lap.is_connected() {
        return Err(Error::Disconnected {
            components: lap.components(),
        });
    }
    // The kernel of a connected graph Laplacian is exactly the constants, so
    // that pair is set analytically. The solver sees Δ + σ·1·meanᵀ, which
    // moves the constant above the spectrum (σ exceeds the Gershgorin bound).
    let ones = vec![1.0; n];
    let mut l1 = vec![0.0; n];
    lap.matvec(&ones, &mut l1);
    let mut eigenvalues = vec![0.0];
    let mut residuals = vec![dot(&l1, &l1).sqrt() / (n as f64).sqrt()];
    let mut vectors = ones;
    let mut restarts = 0;
    if k > 1 {
        let shift = 2.0 * lap.degrees().iter().cloned().fold(0.0, f64::max) + 1.0;
        let out = lanczos::smallest(n, k - 1, tol, seed, max_restarts, |x, y| {
            lap.matvec(x, y);
            let mean = x.iter().sum::<f64>() / n as f64;
            y.iter_mut().for_each(|v| *v += shift * mean);
        })?;
        let scale = (n as f64).sqrt();
        for mut v in out.vectors {
            fix_sign(&mut v);
            vectors.extend(v.iter().map(|x| x * scale));
        }
        eigenvalues.extend(out.values);
        residuals.extend(out.residuals);
        restarts = out.restarts;
    }
    Ok(EigenSystem {
        n,
        eigenvalues,
        vectors,
        residuals,
        restarts,
    })
}

/// Positive sum, or positive largest-magnitude entry when the sum is ~0.
fn fix_sign(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    let flip = if sum.abs() > 1e-8 * l1 {
        sum < 0.0
    } else {
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = i;
            }
        }
        v[best] < 0.0
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Nearest-neighbour proxy for a transport map onto the cloud.
#[derive(Debug, Clone)]
pub struct Transport {
    pub indices: Vec<usize>,
    /// Geodesic distance from each query to its assigned cloud point.
    pub distances: Vec<f64>,
    /// max of `distances`.
    pub rho_hat: f64,
}

/// Maps each query (row-major ambient coordinates) to its geodesically
/// nearest cloud point; ties go to the smaller index.
pub fn nn_transport(cloud: &PointCloud, queries: &[f64]) -> Result<Transport> {
    if cloud.is_empty() {
        return Err(Error::Precondition("transport onto an empty cloud".into()));
    }
    let manifold = *cloud.manifold();
    let d = manifold.ambient_dim();
    if queries.len() % d != 0 {
        return Err(Error::Dimension {
            expected: d * (queries.len() / d + 1),
            got: queries.len(),
        });
    }
    let m = manifold.intrinsic_dim() as f64;
    let cell = (2.0 / cloud.len() as f64).powf(1.0 / m);
    let grid = CellGrid::new(manifold, cloud.coords(), cell);
    let (indices, distances): (Vec<usize>, Vec<f64>) = queries
        .par_chunks_exact(d)
        .map(|q| {
            let (j, kd) = grid.nearest(q).expect("nonempty cloud");
            (j, manifold.kernel_to_geodesic(kd))
        })
        .unzip();
    let rho_hat = distances.iter().cloned().fold(0.0, f64::max);
    Ok(Transport {
        indices,
        distances,
        rho_hat,
    })
}

/// Multiplet grouping threshold: |a − b| ≤ rel·max(|a|,|b|) + abs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterTol {
    pub rel: f64,
    pub abs: f64,
}

impl Default for ClusterTol {
    fn default() -> Self {
        ClusterTol { rel: 1e-6, abs: 1e-9 }
    }
}

impl ClusterTol {
    fn same(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.rel * a.abs().max(b.abs()) + self.abs
    }
}

/// One continuum multiplet matched against a block of discrete indices.
#[derive(Debug, Clone)]
pub struct AlignedCluster {
    /// Discrete indices in this block.
    pub discrete: std::ops::Range<usize>,
    /// Continuum indices spanning the multiplet.
    pub continuum: std::ops::Range<usize>,
    /// p×p orthogonal matrix over the continuum multiplet. The first q
    /// columns (q = discrete block size) are the Procrustes match; the rest
    /// complete the basis.
    pub rotation: DMatrix<f64>,
    /// Frobenius distance between the L²(μ_N) projectors onto the discrete
    /// block and the (orthonormalized) continuum block.
    pub subspace_distance: f64,
}

/// Continuum eigenfunctions rotated inside each multiplet to best match the
/// discrete eigenvectors.
#[derive(Debug, Clone)]
pub struct AlignedBasis {
    spectrum: ContinuumSpectrum,
    discrete_eigenvalues: Vec<f64>,
    count: usize,
    n: usize,
    clusters: Vec<AlignedCluster>,
    /// Column-major N×count values of the aligned continuum functions.
    values: Vec<f64>,
    warnings: Vec<String>,
}

impl AlignedBasis {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> &[AlignedCluster] {
        &self.clusters
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn spectrum(&self) -> &ContinuumSpectrum {
        &self.spectrum
    }

    /// Eigenvalues of the discrete system this basis was aligned to.
    pub fn discrete_eigenvalues(&self) -> &[f64] {
        &self.discrete_eigenvalues
    }

    /// Number of rotated continuum functions available at arbitrary points
    /// (all multiplets touched by the alignment, in full).
    pub fn rotated_len(&self) -> usize {
        self.clusters.last().map(|c| c.continuum.end).unwrap_or(0)
    }

    /// Continuum eigenvalue paired with aligned index i.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.spectrum.eigenvalues()[i]
    }

    /// Aligned continuum function i at the cloud points.
    pub fn values(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// The first `out.len()` continuum functions at an arbitrary point, with
    /// the multiplet rotations applied. Indices past [`Self::rotated_len`]
    /// are unrotated analytic eigenfunctions.
    pub fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        let mut raw = vec![0.0; out.len().max(self.rotated_len())];
        self.spectrum.eval_all(x, &mut raw);
        let k = out.len();
        out.copy_from_slice(&raw[..k]);
        for c in &self.clusters {
            let start = c.continuum.start;
            for col in 0..c.continuum.len() {
                if start + col >= k {
                    return;
                }
                out[start + col] = c
                    .continuum
                    .clone()
                    .enumerate()
                    .map(|(row, a)| c.rotation[(row, col)] * raw[a])
                    .sum();
            }
        }
    }
}

pub fn align_spectra(
    discrete: &EigenSystem,
    continuum: &ContinuumSpectrum,
    cloud: &PointCloud,
    cluster_tol: ClusterTol,
) -> Result<AlignedBasis> {
    let n = cloud.len();
    if discrete.n() != n {
        return Err(Error::Dimension {
            expected: n,
            got: discrete.n(),
        });
    }
    let count = discrete.k().min(continuum.len());
    let mut warnings = Vec::new();
    let ranges = cluster_ranges(continuum.eigenvalues(), |a, b| cluster_tol.same(a, b));
    let relevant: Vec<std::ops::Range<usize>> =
        ranges.into_iter().filter(|r| r.start < count).collect();
    let k_raw = relevant.last().map(|r| r.end).unwrap_or(0);
    if k_raw == continuum.len() && !continuum.last_cluster_complete() {
        warnings.push(format!(
            "continuum multiplet at index {} is truncated by the mode table",
            relevant.last().unwrap().start
        ));
    }

    let raw_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; k_raw];
            continuum.eval_all(cloud.point(i), &mut row);
            row
        })
        .collect();
    let raw_col = |a: usize| -> Vec<f64> { raw_rows.iter().map(|r| r[a]).collect() };

    let mut clusters = Vec::with_capacity(relevant.len());
    let mut values = vec![0.0; n * count];
    for r in relevant {
        let disc = r.start..r.end.min(count);
        let (p, q) = (r.len(), disc.len());
        if p != q {
            warnings.push(format!(
                "multiplet {:?} has {p} continuum and {q} discrete members; aligning on the overlap",
                r
            ));
        }
        let cont_cols: Vec<Vec<f64>> = r.clone().map(raw_col).collect();
        let mut cross = DMatrix::<f64>::zeros(p, q);
        for (a, ca) in cont_cols.iter().enumerate() {
            for (b, j) in disc.clone().enumerate() {
                cross[(a, b)] = dot(ca, discrete.vector(j)) / n as f64;
            }
        }
        let rotation = complete_orthogonal(&procrustes(&cross));
        for (b, j) in disc.clone().enumerate() {
            let out = &mut values[j * n..(j + 1) * n];
            for (a, ca) in cont_cols.iter().enumerate() {
                let w = rotation[(a, b)];
                out.iter_mut().zip(ca).for_each(|(o, x)| *o += w * x);
            }
        }
        let disc_cols: Vec<&[f64]> = disc.clone().map(|j| discrete.vector(j)).collect();
        let subspace_distance = projector_distance(&cont_cols, &disc_cols, n);
        clusters.push(AlignedCluster {
            discrete: disc,
            continuum: r,
            rotation,
            subspace_distance,
        });
    }
    Ok(AlignedBasis {
        spectrum: continuum.clone(),
        discrete_eigenvalues: discrete.eigenvalues().to_vec(),
        count,
        n,
        clusters,
        values,
        warnings,
    })
}

/// Orthogonal Procrustes: the p×q matrix Q with orthonormal columns
/// maximizing tr(QᵀM).
fn procrustes(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, q) = m.shape();
    if q == 0 {
        return DMatrix::zeros(p, 0);
    }
    let svd = m.clone().svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// Extends p×q orthonormal columns to a p×p orthogonal matrix.
fn complete_orthogonal(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, cols) = q.shape();
    let mut basis: Vec<Vec<f64>> = (0..cols).map(|j| q.column(j).iter().copied().collect()).collect();
    for e in 0..p {
        if basis.len() == p {
            break;
        }
        let mut w = vec![0.0; p];
        w[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let h: f64 = b.iter().zip(&w).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= h * y);
            }
        }
        let len = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-6 {
            basis.push(w.into_iter().map(|x| x / len).collect());
        }
    }
    DMatrix::from_fn(p, p, |r, c| basis[c][r])
}

/// ‖P_a − P_b‖_F for projectors onto span(a) and span(b) in L²(μ_N), via
/// principal angles. Both sets are orthonormalized first.
fn projector_distance(a: &[Vec<f64>], b: &[&[f64]], n: usize) -> f64 {
    let qa = orthonormal_basis(a.iter().map(|v| v.as_slice()), n);
    let qb = orthonormal_basis(b.iter().copied(), n);
    let mut cross = DMatrix::<f64>::zeros(qa.len(), qb.len());
    for (i, x) in qa.iter().enumerate() {
        for (j, y) in qb.iter().enumerate() {
            cross[(i, j)] = dot(x, y);
        }
    }
    let s2: f64 = if cross.is_empty() {
        0.0
    } else {
        cross.singular_values().iter().map(|s| s.min(1.0).powi(2)).sum()
    };
    let val = qa.len() as f64 + qb.len() as f64 - 2.0 * s2;
    val.max(0.0).sqrt()
}

/// Euclidean orthonormal basis (modified Gram–Schmidt, twice).
fn orthonormal_basis<'a>(cols: impl Iterator<Item = &'a [f64]>, n: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut w = c.to_vec();
        for _ in 0..2 {
            for q in &out {
                let h = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= h * y);
            }
        }
        let len = dot(&w, &w).sqrt();
        if len > 1e-12 * (n as f64).sqrt() {
            w.iter_mut().for_each(|x| *x /= len);
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub index: usize,
    pub lambda_discrete: f64,
    pub lambda_continuum: f64,
    pub abs_error: f64,
    /// Relative to λ; equals the absolute error when λ = 0.
    pub rel_error: f64,
    pub function_l2_error: f64,
    pub function_sup_error: f64,
    /// sup over the cloud of the discrete eigenvector.
    pub sup_norm: f64,
    /// λ(ρ̂/ζ + ζ√λ).
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub rows: Vec<SpectralRow>,
    pub zeta: f64,
    pub rho_hat: f64,
    pub warnings: Vec<String>,
}

impl SpectralReport {
    /// Mean relative eigenvalue error over 0-based indices `range`.
    pub fn mean_rel_error(&self, range: std::ops::Range<usize>) -> f64 {
        let sel: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| range.contains(&r.index))
            .map(|r| r.rel_error)
            .collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }
}

pub fn spectral_report(
    discrete: &EigenSystem,
    aligned: &AlignedBasis,
    zeta: f64,
    rho_hat: f64,
) -> SpectralReport {
    let n = aligned.n() as f64;
    let rows = (0..aligned.count())
        .map(|i| {
            let ld = discrete.eigenvalues()[i];
            let lc = aligned.eigenvalue(i);
            let abs_error = (ld - lc).abs();
            let rel_error = if lc == 0.0 { abs_error } else { abs_error / lc.abs() };
            let (mut ss, mut sup, mut vmax) = (0.0, 0.0f64, 0.0f64);
            for (d, c) in discrete.vector(i).iter().zip(aligned.values(i)) {
                ss += (d - c) * (d - c);
                sup = sup.max((d - c).abs());
                vmax = vmax.max(d.abs());
            }
            SpectralRow {
                index: i,
                lambda_discrete: ld,
                lambda_continuum: lc,
                abs_error,
                rel_error,
                function_l2_error: (ss / n).sqrt(),
                function_sup_error: sup,
                sup_norm: vmax,
                envelope: lc * (rho_hat / zeta + zeta * lc.sqrt()),
            }
        })
        .collect();
    SpectralReport {
        rows,
        zeta,
        rho_hat,
        warnings: aligned.warnings().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{analytic_spectrum, sample_uniform, Manifold};
    use crate::graph::{build_similarity, laplacian};

    #[test]
    fn three_point_path_spectrum() {
        let cloud = PointCloud::from_coords_unchecked(
            Manifold::sphere(),
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0],
            0,
        )
        .unwrap();
        let lap = laplacian(build_similarity(&cloud, 1.5).unwrap());
        let c = lap.graph().kernel_constant();
        let e = smallest_eigenpairs(&lap, 2, 1e-10, 1).unwrap();
        assert!(e.eigenvalues()[0].abs() < 1e-12);
        assert!((e.eigenvalues()[1] - c).abs() < 1e-12);
        // the full spectrum {0, c, 3c} is not reachable with k < N; check
        // the trace instead
        let trace: f64 = lap.degrees().iter().sum();
        assert!((trace - 4.0 * c).abs() < 1e-14);
    }

    #[test]
    fn preconditions() {
        let cloud = sample_uniform(&Manifold::torus(2).unwrap(), 100, 1).unwrap();
        let lap = laplacian(build_similarity(&cloud, 0.3).unwrap());
        assert!(smallest_eigenpairs(&lap, 100, 1e-8, 1).is_err());
        assert!(smallest_eigenpairs(&lap, 5, 1e-3, 1).is_err());
        assert!(smallest_eigenpairs(&lap, 5, 0.0, 1).is_err());
        let sparse = laplacian(build_similarity(&cloud, 0.01).unwrap());
        assert!(matches!(
            smallest_eigenpairs(&sparse, 5, 1e-8, 1),
            Err(Error::Disconnected { .. })
        ));
    }

    #[test]
    fn constant_eigenvector_and_normalization() {
        let cloud = sample_uniform(&Manifold::sphere(), 800, 5).unwrap();
        let lap = laplacian(build_similarity(&cloud, 0.25).unwrap());
        let e = smallest_eigenpairs(&lap, 6, 1e-10, 2).unwrap();
        assert!(e.eigenvalues()[0].abs() < 1e-8 * e.eigenvalues()[1]);
        assert!(e.vector(0).iter().all(|v| (v - 1.0).abs() < 1e-8));
        for i in 0..6 {
            for j in 0..6 {
                let ip = dot(e.vector(i), e.vector(j)) / 800.0;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn transport_examples() {
        let t = Manifold::torus(2).unwrap();
        let cloud = PointCloud::from_coords(t, vec![0.0, 0.0, 0.5, 0.0], 0).unwrap();
        let tr = nn_transport(&cloud, &[0.2, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!(tr.indices, vec![0, 1]);
        assert!((tr.distances[0] - 0.2).abs() < 1e-15);
        assert_eq!(tr.distances[1], 0.0);

        let s = sample_uniform(&Manifold::sphere(), 300, 8).unwrap();
        let tr = nn_transport(&s, s.coords()).unwrap();
        assert_eq!(tr.indices, (0..300).collect::<Vec<_>>());
        assert_eq!(tr.rho_hat, 0.0);
    }

    #[test]
    fn constant_mode_aligns_exactly() {
        let m = Manifold::torus(2).unwrap();
        let cloud = sample_uniform(&m, 1500, 2).unwrap();
        let lap = laplacian(build_similarity(&cloud, 0.12).unwrap());
        let e = smallest_eigenpairs(&lap, 5, 1e-10, 4).unwrap();
        let spec = analytic_spectrum(&m, 5).unwrap();
        let al = align_spectra(&e, &spec, &cloud, ClusterTol::default()).unwrap();
        assert!(al.warnings().is_empty());
        let rep = spectral_report(&e, &al, 0.12, 0.05);
        assert!(rep.rows[0].abs_error < 1e-8);
        assert!(rep.rows[0].function_l2_error < 1e-8);
        for r in &rep.rows {
            assert!(r.abs_error >= 0.0 && r.function_sup_error.is_finite());
        }
        let mut x = vec![0.0; 5];
        al.eval_all(cloud.point(17), &mut x);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - al.values(i)[17]).abs() < 1e-12);
        }
    }
}
