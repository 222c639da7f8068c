//! Synthetic manifolds with closed-form spectra.
//!
//! Two homogeneous, unit-volume manifolds are supported: the round sphere
//! S² (rescaled so its area is 1) and the flat torus T^m = [0,1)^m for
//! m in 2..=5. For both, the Laplace–Beltrami eigenpairs are known in closed
//! form, which is what makes every discrete quantity in this crate testable
//! against an exact continuum reference.
//!
//! Eigenfunctions are normalized in L²(μ) where μ is the uniform probability
//! measure, so the constant mode is identically 1.

use std::cmp::Reverse;
use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of analytic modes that [`analytic_spectrum`] will tabulate.
pub const MAX_MODES: usize = 200_000;

/// Points farther than this (relative to the sphere radius) from the
/// manifold are rejected by distance routines.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Sphere,
    #[serde(alias = "torus")]
    FlatTorus,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::FlatTorus => "flat_torus",
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(ManifoldKind::Sphere),
            "torus" | "flat_torus" => Ok(ManifoldKind::FlatTorus),
            other => Err(Error::Config(format!("unknown manifold kind '{other}'"))),
        }
    }
}

/// A unit-volume manifold: kind plus intrinsic dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldRepr", into = "ManifoldRepr")]
pub struct Manifold {
    kind: ManifoldKind,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifoldRepr {
    kind: ManifoldKind,
    m: usize,
}

impl TryFrom<ManifoldRepr> for Manifold {
    type Error = Error;

    fn try_from(r: ManifoldRepr) -> Result<Self> {
        Manifold::new(r.kind, r.m)
    }
}

impl From<Manifold> for ManifoldRepr {
    fn from(m: Manifold) -> Self {
        ManifoldRepr {
            kind: m.kind,
            m: m.dim,
        }
    }
}

impl Manifold {
    pub fn new(kind: ManifoldKind, m: usize) -> Result<Self> {
        let ok = match kind {
            ManifoldKind::Sphere => m == 2,
            ManifoldKind::FlatTorus => (2..=5).contains(&m),
        };
        if !ok {
            return Err(Error::Config(format!(
                "unsupported manifold: {} with intrinsic dimension {m}",
                kind.name()
            )));
        }
        Ok(Manifold { kind, dim: m })
    }

    /// The unit-area 2-sphere.
    pub fn sphere() -> Self {
        Manifold {
            kind: ManifoldKind::Sphere,
            dim: 2,
        }
    }

    pub fn torus(m: usize) -> Result<Self> {
        Manifold::new(ManifoldKind::FlatTorus, m)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere => self.dim + 1,
            ManifoldKind::FlatTorus => self.dim,
        }
    }

    /// Sphere radius r with 4πr² = 1; `None` for tori.
    pub fn radius(&self) -> Option<f64> {
        match self.kind {
            ManifoldKind::Sphere => Some(sphere_radius()),
            ManifoldKind::FlatTorus => None,
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == ManifoldKind::FlatTorus
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.ambient_dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.kind {
            ManifoldKind::Sphere => {
                let r = sphere_radius();
                (norm(x) - r).abs() <= MEMBERSHIP_TOL * r
            }
            ManifoldKind::FlatTorus => x
                .iter()
                .all(|&v| (-MEMBERSHIP_TOL..1.0 + MEMBERSHIP_TOL).contains(&v)),
        }
    }

    /// Squared distance used by the similarity kernel: chordal (ambient
    /// Euclidean) on the sphere, minimum-image Euclidean on the torus.
    #[inline]
    pub fn kernel_dist2(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            ManifoldKind::FlatTorus => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = wrap_delta(a - b);
                    d * d
                })
                .sum(),
        }
    }

    /// Converts a kernel distance into a geodesic distance.
    #[inline]
    pub(crate) fn kernel_to_geodesic(&self, kernel_dist: f64) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => {
                let r = sphere_radius();
                2.0 * r * (kernel_dist / (2.0 * r)).min(1.0).asin()
            }
            ManifoldKind::FlatTorus => kernel_dist,
        }
    }

    pub fn geodesic_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        for p in [x, y] {
            if !self.contains(p) {
                return Err(Error::Domain(format!(
                    "point {p:?} is not on the {}",
                    self.kind.name()
                )));
            }
        }
        Ok(self.geodesic_unchecked(x, y))
    }

    pub(crate) fn geodesic_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Sphere => {
                let r = sphere_radius();
                let cross = [
                    x[1] * y[2] - x[2] * y[1],
                    x[2] * y[0] - x[0] * y[2],
                    x[0] * y[1] - x[1] * y[0],
                ];
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                r * norm(&cross).atan2(dot)
            }
            ManifoldKind::FlatTorus => self.kernel_dist2(x, y).sqrt(),
        }
    }
}

impl std::fmt::Display for Manifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            ManifoldKind::Sphere => write!(f, "S^{}", self.dim),
            ManifoldKind::FlatTorus => write!(f, "T^{}", self.dim),
        }
    }
}

pub fn sphere_radius() -> f64 {
    (4.0 * PI).sqrt().recip()
}

/// Volume of the m-dimensional unit ball, π^{m/2} / Γ(m/2 + 1).
pub fn unit_ball_volume(m: usize) -> f64 {
    let h = m as f64 / 2.0;
    PI.powf(h) / statrs::function::gamma::gamma(h + 1.0)
}

#[inline]
fn wrap_delta(d: f64) -> f64 {
    (d - d.round()).abs()
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// N points on a manifold, stored row-major in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    manifold: Manifold,
    coords: Vec<f64>,
    seed: u64,
}

impl PointCloud {
    /// Wraps externally supplied coordinates, checking manifold membership.
    pub fn from_coords(manifold: Manifold, coords: Vec<f64>, seed: u64) -> Result<Self> {
        let d = manifold.ambient_dim();
        if coords.len() % d != 0 {
            return Err(Error::Dimension {
                expected: d * (coords.len() / d + 1),
                got: coords.len(),
            });
        }
        if let Some(bad) = coords.chunks_exact(d).find(|p| !manifold.contains(p)) {
            return Err(Error::Domain(format!("point {bad:?} is not on {manifold}")));
        }
        Ok(PointCloud {
            manifold,
            coords,
            seed,
        })
    }

    /// Wraps coordinates without the membership check. Kernel distances are
    /// still well defined (chordal on the sphere, minimum-image on the
    /// torus), which is all graph construction needs.
    pub fn from_coords_unchecked(manifold: Manifold, coords: Vec<f64>, seed: u64) -> Result<Self> {
        let d = manifold.ambient_dim();
        if coords.len() % d != 0 || coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "expected finite coordinates in rows of {d}, got {} values",
                coords.len()
            )));
        }
        Ok(PointCloud {
            manifold,
            coords,
            seed,
        })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.manifold.ambient_dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.ambient_dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.ambient_dim())
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Draws `n` i.i.d. uniform points. Deterministic in `seed`.
pub fn sample_uniform(manifold: &Manifold, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Config("point count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = manifold.ambient_dim();
    let mut coords = Vec::with_capacity(n * d);
    match manifold.kind() {
        ManifoldKind::Sphere => {
            let r = sphere_radius();
            let mut g = vec![0.0; d];
            for _ in 0..n {
                let len = loop {
                    g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    let len = norm(&g);
                    if len > 1e-300 {
                        break len;
                    }
                };
                coords.extend(g.iter().map(|v| v * (r / len)));
            }
        }
        ManifoldKind::FlatTorus => {
            coords.extend((0..n * d).map(|_| rng.random::<f64>()));
        }
    }
    Ok(PointCloud {
        manifold: *manifold,
        coords,
        seed,
    })
}

/// Deterministic quasi-uniform points: a cell-centred lattice on the torus
/// (⌊size^{1/m}⌉ points per axis), a Fibonacci lattice on the sphere.
pub fn reference_grid(manifold: &Manifold, size: usize) -> Vec<f64> {
    let size = size.max(1);
    match manifold.kind() {
        ManifoldKind::FlatTorus => {
            let m = manifold.intrinsic_dim();
            let per_axis = ((size as f64).powf(1.0 / m as f64).round() as usize).max(1);
            let total = per_axis.pow(m as u32);
            let mut out = Vec::with_capacity(total * m);
            for flat in 0..total {
                let mut rem = flat;
                for _ in 0..m {
                    out.push(((rem % per_axis) as f64 + 0.5) / per_axis as f64);
                    rem /= per_axis;
                }
            }
            out
        }
        ManifoldKind::Sphere => {
            let r = sphere_radius();
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut out = Vec::with_capacity(size * 3);
            for i in 0..size {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / size as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                let (x, y) = (rho * phi.cos(), rho * phi.sin());
                let len = (x * x + y * y + z * z).sqrt();
                out.extend([x * r / len, y * r / len, z * r / len]);
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

/// One analytic Laplace–Beltrami eigenfunction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Constant,
    /// √2·cos(2π k·x) or √2·sin(2π k·x) on the torus.
    Fourier { freq: Vec<i32>, trig: Trig },
    /// Real spherical harmonic of degree l and order m (sin for m < 0).
    Harmonic { degree: u32, order: i32 },
}

/// First K analytic eigenpairs of −Δ, sorted ascending, with a canonical
/// basis inside each multiplet.
#[derive(Debug, Clone)]
pub struct ContinuumSpectrum {
    manifold: Manifold,
    eigenvalues: Vec<f64>,
    modes: Vec<Mode>,
    clusters: Vec<Range<usize>>,
    complete: bool,
    max_degree: u32,
}

impl ContinuumSpectrum {
    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Index ranges of equal eigenvalues. The last range may be a partial
    /// multiplet if K cuts through one; see [`Self::last_cluster_complete`].
    pub fn clusters(&self) -> &[Range<usize>] {
        &self.clusters
    }

    pub fn last_cluster_complete(&self) -> bool {
        self.complete
    }

    /// Upper bound on sup|ψ_i| over the manifold.
    pub fn sup_norm(&self, i: usize) -> f64 {
        match &self.modes[i] {
            Mode::Constant => 1.0,
            Mode::Fourier { .. } => std::f64::consts::SQRT_2,
            Mode::Harmonic { degree, .. } => (2.0 * *degree as f64 + 1.0).sqrt(),
        }
    }

    pub fn eval(&self, i: usize, x: &[f64]) -> f64 {
        match &self.modes[i] {
            Mode::Constant => 1.0,
            Mode::Fourier { freq, trig } => fourier(freq, *trig, x),
            Mode::Harmonic { degree, order } => {
                let (ct, st, phi) = sphere_angles(x);
                let p = legendre_table(*degree, ct, st);
                harmonic_from_table(&p, *degree, *order, phi)
            }
        }
    }

    /// Evaluates the first `out.len()` eigenfunctions at `x`.
    pub fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        assert!(out.len() <= self.len());
        match self.manifold.kind() {
            ManifoldKind::FlatTorus => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.eval(i, x);
                }
            }
            ManifoldKind::Sphere => {
                let (ct, st, phi) = sphere_angles(x);
                let p = legendre_table(self.max_degree, ct, st);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = match &self.modes[i] {
                        Mode::Harmonic { degree, order } => {
                            harmonic_from_table(&p, *degree, *order, phi)
                        }
                        _ => 1.0,
                    };
                }
            }
        }
    }
}

fn fourier(freq: &[i32], trig: Trig, x: &[f64]) -> f64 {
    let phase: f64 = freq.iter().zip(x).map(|(&k, &v)| k as f64 * v).sum();
    let t = 2.0 * PI * phase;
    std::f64::consts::SQRT_2
        * match trig {
            Trig::Cos => t.cos(),
            Trig::Sin => t.sin(),
        }
}

fn sphere_angles(x: &[f64]) -> (f64, f64, f64) {
    let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let r = (rho * rho + x[2] * x[2]).sqrt();
    (x[2] / r, rho / r, x[1].atan2(x[0]))
}

/// 4π-normalized associated Legendre functions P̄_l^m(cos θ), 0 ≤ m ≤ l ≤ L,
/// stored at index l(l+1)/2 + m. With this normalization P̄_l^m(cos θ)·cos(mφ)
/// and P̄_l^m(cos θ)·sin(mφ) have unit mean square over the sphere.
fn legendre_table(max_degree: u32, ct: f64, st: f64) -> Vec<f64> {
    let lmax = max_degree as usize;
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut p = vec![0.0; idx(lmax, lmax) + 1];
    p[0] = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            let f = if m == 1 {
                3f64.sqrt()
            } else {
                ((2 * m + 1) as f64 / (2 * m) as f64).sqrt()
            };
            p[idx(m, m)] = f * st * p[idx(m - 1, m - 1)];
        }
        if m < lmax {
            p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * p[idx(m, m)];
        }
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((2.0 * lf - 1.0) * (2.0 * lf + 1.0) / ((lf - mf) * (lf + mf))).sqrt();
            let b = ((2.0 * lf + 1.0) * (lf + mf - 1.0) * (lf - mf - 1.0)
                / ((lf - mf) * (lf + mf) * (2.0 * lf - 3.0)))
                .sqrt();
            p[idx(l, m)] = a * ct * p[idx(l - 1, m)] - b * p[idx(l - 2, m)];
        }
    }
    p
}

fn harmonic_from_table(p: &[f64], degree: u32, order: i32, phi: f64) -> f64 {
    let l = degree as usize;
    let m = order.unsigned_abs() as usize;
    let base = p[l * (l + 1) / 2 + m];
    match order.cmp(&0) {
        std::cmp::Ordering::Equal => base,
        std::cmp::Ordering::Greater => base * (m as f64 * phi).cos(),
        std::cmp::Ordering::Less => base * (m as f64 * phi).sin(),
    }
}

fn torus_eigenvalue(k2: i64) -> f64 {
    4.0 * PI * PI * k2 as f64
}

fn sphere_eigenvalue(l: u32) -> f64 {
    let l = l as f64;
    l * (l + 1.0) / (sphere_radius() * sphere_radius())
}

/// Canonical torus frequencies (first nonzero coordinate positive) with
/// |k|² ≤ radius2.
fn torus_frequencies(m: usize, radius2: i64) -> Vec<Vec<i32>> {
    fn rec(m: usize, left: i64, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if cur.len() == m {
            let canonical = cur.iter().find(|&&v| v != 0).is_none_or(|&v| v > 0);
            if canonical {
                out.push(cur.clone());
            }
            return;
        }
        let bound = (left as f64).sqrt().floor() as i32;
        for v in -bound..=bound {
            cur.push(v);
            rec(m, left - (v as i64) * (v as i64), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, radius2, &mut Vec::with_capacity(m), &mut out);
    out
}

/// First `k` eigenpairs of −Δ in nondecreasing order.
///
/// Torus modes are sorted by |k|², then by frequency vector in descending
/// lexicographic order, cos before sin. Sphere modes are sorted by degree l,
/// then order m = −l..l.
pub fn analytic_spectrum(manifold: &Manifold, k: usize) -> Result<ContinuumSpectrum> {
    if k == 0 {
        return Err(Error::Config("spectrum size must be at least 1".into()));
    }
    if k > MAX_MODES {
        return Err(Error::Config(format!(
            "requested {k} modes exceeds the mode table limit {MAX_MODES}"
        )));
    }
    // one extra mode tells whether the last multiplet is complete
    let k_inner = k;
    let k = k + 1;
    let (mut eigenvalues, mut modes, max_degree) = match manifold.kind() {
        ManifoldKind::FlatTorus => {
            let m = manifold.intrinsic_dim();
            let mut radius2 = 1i64;
            let freqs = loop {
                let f = torus_frequencies(m, radius2);
                // each nonzero canonical frequency contributes a cos and a sin
                if 2 * f.len() - 1 >= k {
                    break f;
                }
                radius2 *= 2;
            };
            let mut freqs = freqs;
            freqs.sort_by_key(|f| {
                let k2: i64 = f.iter().map(|&v| (v as i64) * (v as i64)).sum();
                (k2, Reverse(f.clone()))
            });
            let mut eig = Vec::with_capacity(k);
            let mut modes = Vec::with_capacity(k);
            for f in freqs {
                let k2: i64 = f.iter().map(|&v| (v as i64) * (v as i64)).sum();
                if k2 == 0 {
                    eig.push(0.0);
                    modes.push(Mode::Constant);
                } else {
                    for trig in [Trig::Cos, Trig::Sin] {
                        eig.push(torus_eigenvalue(k2));
                        modes.push(Mode::Fourier {
                            freq: f.clone(),
                            trig,
                        });
                    }
                }
                if modes.len() >= k {
                    break;
                }
            }
            eig.truncate(k);
            modes.truncate(k);
            (eig, modes, 0)
        }
        ManifoldKind::Sphere => {
            let mut eig = Vec::with_capacity(k);
            let mut modes = Vec::with_capacity(k);
            let mut l = 0u32;
            'outer: loop {
                for order in -(l as i32)..=(l as i32) {
                    eig.push(sphere_eigenvalue(l));
                    modes.push(if l == 0 {
                        Mode::Constant
                    } else {
                        Mode::Harmonic { degree: l, order }
                    });
                    if modes.len() == k {
                        break 'outer;
                    }
                }
                l += 1;
            }
            (eig, modes, l)
        }
    };
    let complete = eigenvalues[k_inner] != eigenvalues[k_inner - 1];
    eigenvalues.truncate(k_inner);
    modes.truncate(k_inner);
    let clusters = cluster_ranges(&eigenvalues, |a, b| a == b);
    Ok(ContinuumSpectrum {
        manifold: *manifold,
        eigenvalues,
        modes,
        clusters,
        complete,
        max_degree,
    })
}

pub(crate) fn cluster_ranges(values: &[f64], same: impl Fn(f64, f64) -> bool) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || !same(values[i - 1], values[i]) {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Recipes for ground-truth functions w₀ = Φ⁻¹(f₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case")]
pub enum TruthRecipe {
    /// Fixed combination of the first ≤ 9 analytic eigenfunctions.
    SmoothLowFrequency { coefficients: Vec<f64> },
    /// Σ_j 2^{−βj} cos(2π 2^j x₁) on the torus, Hölder regularity β.
    Lacunary { beta: f64 },
}

impl TruthRecipe {
    pub fn smooth_default() -> Self {
        TruthRecipe::SmoothLowFrequency {
            coefficients: vec![0.0, 1.0, 0.5, -0.5, 0.25],
        }
    }
}

#[derive(Debug, Clone)]
enum TruthKind {
    Expansion {
        spectrum: ContinuumSpectrum,
        coefficients: Vec<f64>,
    },
    Lacunary {
        beta: f64,
        terms: usize,
    },
}

/// A deterministic, bounded function on the manifold with declared
/// regularity (∞ for finite eigenfunction expansions).
#[derive(Debug, Clone)]
pub struct TruthFunction {
    kind: TruthKind,
    regularity: f64,
    description: String,
}

impl TruthFunction {
    pub fn regularity(&self) -> f64 {
        self.regularity
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            TruthKind::Expansion {
                spectrum,
                coefficients,
            } => {
                let mut vals = vec![0.0; coefficients.len()];
                spectrum.eval_all(x, &mut vals);
                vals.iter().zip(coefficients).map(|(v, c)| v * c).sum()
            }
            TruthKind::Lacunary { beta, terms } => (0..=*terms)
                .map(|j| {
                    let freq = (1u64 << j) as f64;
                    2f64.powf(-beta * j as f64) * (2.0 * PI * freq * x[0]).cos()
                })
                .sum(),
        }
    }

    /// Analytic (−Δ)w₀ when available (finite expansions only).
    pub fn neg_laplacian(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            TruthKind::Expansion {
                spectrum,
                coefficients,
            } => {
                let mut vals = vec![0.0; coefficients.len()];
                spectrum.eval_all(x, &mut vals);
                Some(
                    vals.iter()
                        .zip(coefficients)
                        .zip(spectrum.eigenvalues())
                        .map(|((v, c), l)| v * c * l)
                        .sum(),
                )
            }
            TruthKind::Lacunary { .. } => None,
        }
    }

    pub fn eval_cloud(&self, cloud: &PointCloud) -> Vec<f64> {
        cloud.points().map(|p| self.eval(p)).collect()
    }
}

pub fn make_truth(manifold: &Manifold, recipe: &TruthRecipe) -> Result<TruthFunction> {
    match recipe {
        TruthRecipe::SmoothLowFrequency { coefficients } => {
            if coefficients.is_empty() || coefficients.len() > 9 {
                return Err(Error::Config(format!(
                    "smooth truth takes 1..=9 coefficients, got {}",
                    coefficients.len()
                )));
            }
            let spectrum = analytic_spectrum(manifold, coefficients.len())?;
            Ok(TruthFunction {
                kind: TruthKind::Expansion {
                    spectrum,
                    coefficients: coefficients.clone(),
                },
                regularity: f64::INFINITY,
                description: format!("smooth_low_frequency{coefficients:?}"),
            })
        }
        TruthRecipe::Lacunary { beta } => {
            if manifold.kind() != ManifoldKind::FlatTorus {
                return Err(Error::Unsupported(
                    "lacunary truth is only defined on the torus".into(),
                ));
            }
            if !(*beta > 0.0 && beta.is_finite()) {
                return Err(Error::Config(format!("lacunary beta must be positive, got {beta}")));
            }
            // smallest J with 2^{-βJ} < 1e-8
            let terms = (1e8f64.log2() / beta).floor() as usize + 1;
            Ok(TruthFunction {
                kind: TruthKind::Lacunary { beta: *beta, terms },
                regularity: *beta,
                description: format!("lacunary(beta={beta}, J={terms})"),
            })
        }
    }
}
