//! ε-neighbourhood similarity graphs and their unnormalized Laplacians.
//!
//! H_ij = c·1{|X_i − X_j| < ζ} for i ≠ j with c = 2(m+2)/(N ν_m ζ^{m+2}),
//! so that (Δ_N f)(X_i) = Σ_j H_ij (f(X_i) − f(X_j)) approximates −Δf.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, PointCloud, TruthFunction};
use crate::spatial::CellGrid;

/// Default cap on stored off-diagonal entries (about 400 MB of indices).
pub const DEFAULT_MAX_NNZ: usize = 100_000_000;

/// c = 2(m+2) / (N ν_m ζ^{m+2}).
pub fn kernel_constant(n: usize, m: usize, zeta: f64) -> f64 {
    2.0 * (m as f64 + 2.0) / (n as f64 * unit_ball_volume(m) * zeta.powi(m as i32 + 2))
}

/// Sparse symmetric H with a single nonzero value c, stored as sorted
/// adjacency lists.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    n: usize,
    m: usize,
    zeta: f64,
    kernel_constant: f64,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl SimilarityGraph {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.m
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn kernel_constant(&self) -> f64 {
        self.kernel_constant
    }

    /// Number of stored off-diagonal entries (each edge counted twice).
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.neighbors(i).binary_search(&(j as u32)).is_ok() {
            self.kernel_constant
        } else {
            0.0
        }
    }

    /// Nonzero entries (i, j, H_ij) in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(move |&j| (i, j as usize, self.kernel_constant))
        })
    }
}

pub fn build_similarity(cloud: &PointCloud, zeta: f64) -> Result<SimilarityGraph> {
    build_similarity_with_budget(cloud, zeta, DEFAULT_MAX_NNZ)
}

pub fn build_similarity_with_budget(
    cloud: &PointCloud,
    zeta: f64,
    max_nnz: usize,
) -> Result<SimilarityGraph> {
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::Config(format!("connectivity radius must be positive, got {zeta}")));
    }
    let n = cloud.len();
    let m = cloud.manifold().intrinsic_dim();
    let grid = CellGrid::new(*cloud.manifold(), cloud.coords(), zeta);
    let used = AtomicUsize::new(0);
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if used.load(Ordering::Relaxed) > max_nnz {
                return Err(());
            }
            let row = grid.neighbors_within(i, zeta);
            if used.fetch_add(row.len(), Ordering::Relaxed) + row.len() > max_nnz {
                return Err(());
            }
            Ok(row)
        })
        .collect::<std::result::Result<_, ()>>()
        .map_err(|_| {
            Error::Resource(format!(
                "similarity graph with N={n}, zeta={zeta} exceeds the budget of {max_nnz} entries"
            ))
        })?;
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(rows.iter().map(Vec::len).sum());
    for r in rows {
        col_idx.extend_from_slice(&r);
        row_ptr.push(col_idx.len());
    }
    Ok(SimilarityGraph {
        n,
        m,
        zeta,
        kernel_constant: kernel_constant(n, m, zeta),
        row_ptr,
        col_idx,
    })
}

/// Δ_N = D − H.
#[derive(Debug, Clone)]
pub struct SparseLaplacian {
    graph: SimilarityGraph,
    degrees: Vec<f64>,
    component_labels: Vec<u32>,
    components: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    #[serde(rename = "N")]
    pub n: usize,
    pub zeta: f64,
    pub m: usize,
    pub c: f64,
    pub nnz: usize,
    pub components: usize,
}

pub fn laplacian(graph: SimilarityGraph) -> SparseLaplacian {
    let n = graph.n;
    let degrees: Vec<f64> = (0..n)
        .map(|i| graph.neighbors(i).len() as f64 * graph.kernel_constant)
        .collect();
    let mut labels = vec![u32::MAX; n];
    let mut components = 0u32;
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != u32::MAX {
            continue;
        }
        labels[start] = components;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for &j in graph.neighbors(i) {
                if labels[j as usize] == u32::MAX {
                    labels[j as usize] = components;
                    stack.push(j as usize);
                }
            }
        }
        components += 1;
    }
    SparseLaplacian {
        graph,
        degrees,
        component_labels: labels,
        components: components as usize,
    }
}

impl SparseLaplacian {
    pub fn len(&self) -> usize {
        self.graph.n
    }

    pub fn is_empty(&self) -> bool {
        self.graph.n == 0
    }

    pub fn graph(&self) -> &SimilarityGraph {
        &self.graph
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn component_labels(&self) -> &[u32] {
        &self.component_labels
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }

    pub fn header(&self) -> GraphHeader {
        GraphHeader {
            n: self.graph.n,
            zeta: self.graph.zeta,
            m: self.graph.m,
            c: self.graph.kernel_constant,
            nnz: self.graph.nnz(),
            components: self.components,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.degrees[i]
        } else {
            -self.graph.weight(i, j)
        }
    }

    /// Nonzero entries of Δ (diagonal included) in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let c = self.graph.kernel_constant;
        (0..self.graph.n).flat_map(move |i| {
            let row = self.graph.neighbors(i);
            let split = row.partition_point(|&j| (j as usize) < i);
            let below = row[..split].iter().map(move |&j| (i, j as usize, -c));
            let diag = (self.degrees[i] != 0.0).then_some((i, i, self.degrees[i]));
            let above = row[split..].iter().map(move |&j| (i, j as usize, -c));
            below.chain(diag).chain(above)
        })
    }

    /// y = Δx.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let c = self.graph.kernel_constant;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let s: f64 = self.graph.neighbors(i).iter().map(|&j| x[j as usize]).sum();
            *yi = self.degrees[i] * x[i] - c * s;
        });
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        Ok(y)
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.graph.n {
            return Err(Error::Dimension {
                expected: self.graph.n,
                got,
            });
        }
        Ok(())
    }
}

/// vᵀΔv, evaluated as ½ Σ_ij H_ij (v_i − v_j)² so the result is never
/// negative.
pub fn dirichlet_energy(lap: &SparseLaplacian, v: &[f64]) -> Result<f64> {
    lap.check_len(v.len())?;
    let g = lap.graph();
    let s: f64 = (0..g.n)
        .into_par_iter()
        .map(|i| {
            g.neighbors(i)
                .iter()
                .map(|&j| (v[i] - v[j as usize]).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(0.5 * g.kernel_constant * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseError {
    pub sup_error: f64,
    pub mean_error: f64,
}

/// Compares Δ_N f with the analytic (−Δ)f at every cloud point.
pub fn pointwise_laplacian_error(
    lap: &SparseLaplacian,
    cloud: &PointCloud,
    f: impl Fn(&[f64]) -> f64 + Sync,
    neg_laplace_f: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<PointwiseError> {
    lap.check_len(cloud.len())?;
    let fv: Vec<f64> = (0..cloud.len()).into_par_iter().map(|i| f(cloud.point(i))).collect();
    let mut lf = vec![0.0; fv.len()];
    lap.matvec(&fv, &mut lf);
    let errs: Vec<f64> = (0..cloud.len())
        .into_par_iter()
        .map(|i| (lf[i] - neg_laplace_f(cloud.point(i))).abs())
        .collect();
    Ok(PointwiseError {
        sup_error: errs.iter().cloned().fold(0.0, f64::max),
        mean_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
    })
}

/// [`pointwise_laplacian_error`] for a truth with an analytic Laplacian.
pub fn truth_laplacian_error(
    lap: &SparseLaplacian,
    cloud: &PointCloud,
    truth: &TruthFunction,
) -> Result<PointwiseError> {
    if truth.neg_laplacian(cloud.point(0)).is_none() {
        return Err(Error::Precondition(format!(
            "truth '{}' has no analytic Laplacian",
            truth.description()
        )));
    }
    pointwise_laplacian_error(
        lap,
        cloud,
        |x| truth.eval(x),
        |x| truth.neg_laplacian(x).unwrap_or(f64::NAN),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_uniform, Manifold};
    use std::f64::consts::PI;

    fn three_points() -> PointCloud {
        PointCloud::from_coords_unchecked(
            Manifold::sphere(),
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0],
            0,
        )
        .unwrap()
    }

    #[test]
    fn three_point_graph() {
        let g = build_similarity(&three_points(), 1.5).unwrap();
        let c = 8.0 / (3.0 * PI * 1.5f64.powi(4));
        assert!((g.kernel_constant() - c).abs() < 1e-15 * c);
        assert!((c - 0.167667).abs() < 1e-5);
        assert_eq!(g.weight(0, 1), c);
        assert_eq!(g.weight(1, 2), c);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.weight(1, 0), g.weight(0, 1));
        assert_eq!(g.weight(0, 0), 0.0);

        let lap = laplacian(g);
        assert_eq!(lap.degrees(), &[c, 2.0 * c, c]);
        assert_eq!(lap.apply(&[1.0, 1.0, 1.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(lap.entry(0, 0), c);
        assert!((dirichlet_energy(&lap, &[1.0, 0.0, 0.0]).unwrap() - c).abs() < 1e-15);
        assert_eq!(dirichlet_energy(&lap, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(dirichlet_energy(&lap, &[1.0]).is_err());
        assert_eq!(lap.components(), 1);
    }

    #[test]
    fn tiny_radius_gives_empty_graph() {
        let cloud = sample_uniform(&Manifold::torus(2).unwrap(), 50, 1).unwrap();
        let lap = laplacian(build_similarity(&cloud, 1e-6).unwrap());
        assert_eq!(lap.graph().nnz(), 0);
        assert!(lap.degrees().iter().all(|&d| d == 0.0));
        assert_eq!(lap.components(), 50);
        assert_eq!(lap.triplets().count(), 0);
    }

    #[test]
    fn duplicate_points_connect() {
        let t = Manifold::torus(2).unwrap();
        let cloud = PointCloud::from_coords(t, vec![0.3, 0.3, 0.3, 0.3], 0).unwrap();
        let g = build_similarity(&cloud, 0.1).unwrap();
        let want = 2.0 * 4.0 / (2.0 * PI * 0.1f64.powi(4));
        assert!((g.weight(0, 1) - want).abs() < 1e-12 * want);
        assert_eq!(g.weight(0, 1), g.weight(1, 0));
    }

    #[test]
    fn bad_radius_and_budget() {
        let cloud = sample_uniform(&Manifold::torus(2).unwrap(), 200, 1).unwrap();
        assert!(matches!(build_similarity(&cloud, 0.0), Err(Error::Config(_))));
        assert!(matches!(build_similarity(&cloud, -1.0), Err(Error::Config(_))));
        assert!(matches!(
            build_similarity_with_budget(&cloud, 0.9, 1000),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn ties_at_radius_are_excluded() {
        let t = Manifold::torus(2).unwrap();
        let cloud = PointCloud::from_coords(t, vec![0.0, 0.0, 0.5, 0.0], 0).unwrap();
        assert_eq!(build_similarity(&cloud, 0.5).unwrap().nnz(), 0);
        assert_eq!(build_similarity(&cloud, 0.5000001).unwrap().nnz(), 2);
    }

    #[test]
    fn triplets_are_row_major_and_complete() {
        let cloud = sample_uniform(&Manifold::torus(2).unwrap(), 80, 4).unwrap();
        let lap = laplacian(build_similarity(&cloud, 0.2).unwrap());
        let t: Vec<_> = lap.triplets().collect();
        assert!(t.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        let row_sums = t.iter().fold(vec![0.0; 80], |mut acc, &(i, _, v)| {
            acc[i] += v;
            acc
        });
        let scale = lap.degrees().iter().cloned().fold(0.0, f64::max);
        assert!(row_sums.iter().all(|s| s.abs() <= 1e-12 * scale));
    }

    #[test]
    fn constant_has_zero_pointwise_error() {
        let cloud = sample_uniform(&Manifold::sphere(), 300, 4).unwrap();
        let lap = laplacian(build_similarity(&cloud, 0.2).unwrap());
        let e = pointwise_laplacian_error(&lap, &cloud, |_| 1.0, |_| 0.0).unwrap();
        assert_eq!(e.sup_error, 0.0);
        assert_eq!(e.mean_error, 0.0);
    }
}
