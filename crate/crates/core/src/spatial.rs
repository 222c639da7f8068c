//! Uniform cell lists for fixed-radius and nearest-neighbour queries.

use crate::geometry::Manifold;

/// Points bucketed into an axis-aligned grid of cells. On the torus the grid
/// tiles [0,1)^m periodically; otherwise it covers the bounding box.
pub(crate) struct CellGrid<'a> {
    manifold: Manifold,
    points: &'a [f64],
    dim: usize,
    periodic: bool,
    lo: Vec<f64>,
    width: Vec<f64>,
    dims: Vec<usize>,
    cell_start: Vec<usize>,
    order: Vec<u32>,
}

impl<'a> CellGrid<'a> {
    /// Builds a grid whose cells are at least `cell` wide in every axis.
    pub(crate) fn new(manifold: Manifold, points: &'a [f64], cell: f64) -> Self {
        let dim = manifold.ambient_dim();
        let n = points.len() / dim;
        let periodic = manifold.is_periodic();
        let (lo, extent): (Vec<f64>, Vec<f64>) = if periodic {
            (vec![0.0; dim], vec![1.0; dim])
        } else {
            (0..dim)
                .map(|a| {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for p in points.chunks_exact(dim) {
                        lo = lo.min(p[a]);
                        hi = hi.max(p[a]);
                    }
                    if n == 0 {
                        (0.0, 0.0)
                    } else {
                        (lo, hi - lo)
                    }
                })
                .unzip()
        };
        let mut dims: Vec<usize> = extent
            .iter()
            .map(|&e| {
                if cell > 0.0 && e > 0.0 {
                    ((e / cell).floor() as usize).clamp(1, 1 << 20)
                } else {
                    1
                }
            })
            .collect();
        let cap = (2 * n).max(64);
        while dims.iter().map(|&d| d as f64).product::<f64>() > cap as f64 {
            let (a, _) = dims.iter().enumerate().max_by_key(|(_, &d)| d).unwrap();
            dims[a] = (dims[a] / 2).max(1);
        }
        let width: Vec<f64> = extent
            .iter()
            .zip(&dims)
            .map(|(&e, &d)| if e > 0.0 { e / d as f64 } else { cell.max(1.0) })
            .collect();
        let mut grid = CellGrid {
            manifold,
            points,
            dim,
            periodic,
            lo,
            width,
            dims,
            cell_start: Vec::new(),
            order: Vec::new(),
        };
        let ncell: usize = grid.dims.iter().product();
        let ids: Vec<usize> = points
            .chunks_exact(dim)
            .map(|p| grid.flat(&grid.coord_of(p)))
            .collect();
        let mut counts = vec![0usize; ncell + 1];
        for &c in &ids {
            counts[c + 1] += 1;
        }
        for c in 0..ncell {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; n];
        for (i, &c) in ids.iter().enumerate() {
            order[fill[c]] = i as u32;
            fill[c] += 1;
        }
        grid.cell_start = counts;
        grid.order = order;
        grid
    }

    fn coord_of(&self, p: &[f64]) -> Vec<isize> {
        (0..self.dim)
            .map(|a| {
                let x = if self.periodic {
                    p[a].rem_euclid(1.0)
                } else {
                    p[a] - self.lo[a]
                };
                ((x / self.width[a]).floor() as isize).clamp(0, self.dims[a] as isize - 1)
            })
            .collect()
    }

    fn flat(&self, c: &[isize]) -> usize {
        c.iter()
            .zip(&self.dims)
            .rev()
            .fold(0usize, |acc, (&v, &d)| acc * d + v as usize)
    }

    fn cell_points(&self, flat: usize) -> &[u32] {
        &self.order[self.cell_start[flat]..self.cell_start[flat + 1]]
    }

    /// Per-axis candidate cell coordinates within `reach` cells of `c`,
    /// wrapped and deduplicated on periodic axes.
    fn axis_candidates(&self, c: &[isize], reach: isize) -> Vec<Vec<isize>> {
        (0..self.dim)
            .map(|a| {
                let d = self.dims[a] as isize;
                let mut v: Vec<isize> = (c[a] - reach..=c[a] + reach)
                    .filter_map(|x| {
                        if self.periodic {
                            Some(x.rem_euclid(d))
                        } else if (0..d).contains(&x) {
                            Some(x)
                        } else {
                            None
                        }
                    })
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }

    fn for_each_cell(&self, axes: &[Vec<isize>], mut f: impl FnMut(usize)) {
        if axes.iter().any(|a| a.is_empty()) {
            return;
        }
        let mut idx = vec![0usize; self.dim];
        let mut coord: Vec<isize> = axes.iter().map(|a| a[0]).collect();
        loop {
            f(self.flat(&coord));
            let mut a = 0;
            loop {
                if a == self.dim {
                    return;
                }
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    coord[a] = axes[a][idx[a]];
                    break;
                }
                idx[a] = 0;
                coord[a] = axes[a][0];
                a += 1;
            }
        }
    }

    /// Indices j ≠ i with kernel distance |x_i − x_j| < radius, sorted.
    /// Requires the grid to have been built with cell ≥ radius.
    pub(crate) fn neighbors_within(&self, i: usize, radius: f64) -> Vec<u32> {
        let d = self.dim;
        let p = &self.points[i * d..(i + 1) * d];
        let r2 = radius * radius;
        let axes = self.axis_candidates(&self.coord_of(p), 1);
        let mut out = Vec::new();
        self.for_each_cell(&axes, |cell| {
            for &j in self.cell_points(cell) {
                let j = j as usize;
                if j != i && self.manifold.kernel_dist2(p, &self.points[j * d..(j + 1) * d]) < r2 {
                    out.push(j as u32);
                }
            }
        });
        out.sort_unstable();
        out
    }

    /// Nearest point to `q` by kernel distance; ties go to the smaller index.
    pub(crate) fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.order.is_empty() {
            return None;
        }
        let c = self.coord_of(q);
        let min_width = self.width.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_dim = *self.dims.iter().max().unwrap() as isize;
        let mut best: Option<(usize, f64)> = None;
        let d = self.dim;
        for ring in 0..=max_dim {
            let axes = self.axis_candidates(&c, ring);
            self.for_each_cell(&axes, |cell| {
                // visit only the shell at Chebyshev distance `ring`; inner
                // cells were handled by earlier rings
                if ring > 0 && !self.on_shell(cell, &c, ring) {
                    return;
                }
                for &j in self.cell_points(cell) {
                    let j = j as usize;
                    let d2 = self.manifold.kernel_dist2(q, &self.points[j * d..(j + 1) * d]);
                    let better = match best {
                        None => true,
                        Some((bj, bd)) => d2 < bd || (d2 == bd && j < bj),
                    };
                    if better {
                        best = Some((j, d2));
                    }
                }
            });
            if let Some((_, bd)) = best {
                let reach = ring as f64 * min_width;
                if bd.sqrt() < reach {
                    break;
                }
            }
        }
        best.map(|(j, d2)| (j, d2.sqrt()))
    }

    fn on_shell(&self, cell: usize, c: &[isize], ring: isize) -> bool {
        let mut rem = cell;
        let mut cheb = 0isize;
        for a in 0..self.dim {
            let d = self.dims[a] as isize;
            let v = (rem % self.dims[a]) as isize;
            rem /= self.dims[a];
            let mut diff = (v - c[a]).abs();
            if self.periodic {
                diff = diff.min(d - diff);
            }
            cheb = cheb.max(diff);
        }
        cheb == ring
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform;

    fn brute_neighbors(m: &Manifold, pts: &[f64], i: usize, r: f64) -> Vec<u32> {
        let d = m.ambient_dim();
        let p = &pts[i * d..(i + 1) * d];
        (0..pts.len() / d)
            .filter(|&j| j != i && m.kernel_dist2(p, &pts[j * d..(j + 1) * d]) < r * r)
            .map(|j| j as u32)
            .collect()
    }

    #[test]
    fn radius_queries_match_brute_force() {
        for (m, r) in [
            (Manifold::sphere(), 0.05),
            (Manifold::torus(2).unwrap(), 0.07),
            (Manifold::torus(3).unwrap(), 0.2),
            (Manifold::torus(5).unwrap(), 0.45),
            (Manifold::torus(2).unwrap(), 0.9),
        ] {
            let c = sample_uniform(&m, 600, 9).unwrap();
            let g = CellGrid::new(m, c.coords(), r);
            for i in 0..c.len() {
                assert_eq!(g.neighbors_within(i, r), brute_neighbors(&m, c.coords(), i, r));
            }
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        for m in [Manifold::sphere(), Manifold::torus(2).unwrap(), Manifold::torus(4).unwrap()] {
            let c = sample_uniform(&m, 500, 2).unwrap();
            let q = sample_uniform(&m, 300, 3).unwrap();
            let cell = (2.0 / 500.0f64).powf(1.0 / m.intrinsic_dim() as f64);
            let g = CellGrid::new(m, c.coords(), cell);
            for x in q.points() {
                let (j, d) = g.nearest(x).unwrap();
                let best = c
                    .points()
                    .map(|p| m.kernel_dist2(x, p))
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert_eq!(j, best.0);
                assert!((d - best.1.sqrt()).abs() < 1e-15);
            }
        }
    }
}
