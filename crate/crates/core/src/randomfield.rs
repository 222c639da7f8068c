//! Truncated Karhunen–Loève priors on graphs, Matérn-type fields on the
//! continuum, the parameter schedules linking them, and their coupled
//! discrepancy.
//!
//! The discrete prior is W_n = Σ_{i≤k} (1+λ_i^{(N)})^{−s/2} ξ_i ψ_i^{(N)} and
//! its continuum counterpart W^M = Σ_{i≤K} (1+λ_i)^{−s/2} ξ_i ψ_i, with
//! ξ_i i.i.d. standard normal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{analytic_spectrum, ContinuumSpectrum, Manifold, ManifoldKind, PointCloud, MAX_MODES};
use crate::spectral::{nn_transport, AlignedBasis, EigenSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Requires s > 3m/2 − 1/2.
    #[default]
    Paper,
    /// Flat tori only: requires s > m, reuses the standard schedule.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub s: f64,
    pub k: usize,
    pub zeta: f64,
    pub m: usize,
    pub mode: PriorMode,
}

impl PriorParams {
    pub fn validate(&self) -> Result<()> {
        check_smoothness(self.m, self.s, self.mode)?;
        if self.k == 0 {
            return Err(Error::Config("truncation k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Prior standard deviation (1+λ)^{−s/2} of a KL coefficient.
#[inline]
pub fn prior_std(lambda: f64, s: f64) -> f64 {
    (1.0 + lambda).powf(-0.5 * s)
}

fn check_smoothness(m: usize, s: f64, mode: PriorMode) -> Result<()> {
    let mf = m as f64;
    match mode {
        PriorMode::Paper => {
            if !(s > 1.5 * mf - 0.5) {
                return Err(Error::Range(format!(
                    "s = {s} must exceed 3m/2 - 1/2 = {} in paper mode",
                    1.5 * mf - 0.5
                )));
            }
        }
        PriorMode::Flat => {
            if !(s > mf) {
                return Err(Error::Range(format!("s = {s} must exceed m = {m} in flat mode")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleCase {
    /// m ≤ 4, s ≤ 9m/2 + 5/2.
    LowDimModerate,
    /// m ≤ 4, s > 9m/2 + 5/2.
    LowDimSmooth,
    /// m ≥ 5, s ≤ 9m/2 + 5/2.
    HighDimModerate,
    /// m ≥ 5, s > 9m/2 + 5/2.
    HighDimSmooth,
}

/// Multiplicative constants in front of each ≍ scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConstants {
    pub zeta: f64,
    pub k: f64,
    pub n_points: f64,
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        ScheduleConstants {
            zeta: 1.0,
            k: 1.0,
            n_points: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleTarget {
    /// Number of cloud points N; yields ζ_N and k_N.
    GivenPoints(usize),
    /// Number of labels n; yields N_n.
    GivenLabels(usize),
}

/// Power-law-times-log exponents: quantity ∝ x^{power} (log x)^{log}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub power: f64,
    pub log: f64,
}

impl Scaling {
    pub fn eval(&self, x: f64) -> f64 {
        x.powf(self.power) * x.ln().powf(self.log)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub m: usize,
    pub s: f64,
    pub delta: f64,
    pub alpha_s: f64,
    pub p_m: f64,
    pub case: ScheduleCase,
    pub mode: PriorMode,
    pub zeta_scaling: Scaling,
    pub k_scaling: Scaling,
    pub n_points_scaling: Scaling,
    pub zeta: Option<f64>,
    /// k before rounding.
    pub k_real: Option<f64>,
    /// max(1, round(k_real)).
    pub k: Option<usize>,
    /// N_n as a real number; it can be astronomically large.
    pub n_points: Option<f64>,
}

pub fn p_m(m: usize) -> f64 {
    if m == 2 {
        0.75
    } else {
        1.0 / m as f64
    }
}

pub fn alpha_s(m: usize, s: f64) -> f64 {
    let mf = m as f64;
    if s <= 4.5 * mf + 2.5 {
        (6.0 * mf + 6.0) / (2.0 * s - 3.0 * mf + 1.0)
    } else {
        1.0
    }
}

/// Exponents of ζ_N, k_N (in N) and N_n (in n).
pub fn schedule_scalings(m: usize, s: f64, delta: f64, mode: PriorMode) -> Result<(ScheduleCase, [Scaling; 3])> {
    if !(2..=5).contains(&m) {
        return Err(Error::Config(format!("schedule defined for m in 2..=5, got {m}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Range(format!("delta must be positive, got {delta}")));
    }
    check_smoothness(m, s, mode)?;
    let mf = m as f64;
    let gap = 2.0 * s - 3.0 * mf + 1.0;
    if gap <= 0.0 {
        return Err(Error::Range(format!(
            "the schedule needs 2s - 3m + 1 > 0, got s = {s}, m = {m}"
        )));
    }
    let a = alpha_s(m, s);
    let p = p_m(m);
    let smooth = s > 4.5 * mf + 2.5;
    let (case, scalings) = if m <= 4 {
        let e = mf + 4.0 + delta;
        (
            if smooth { ScheduleCase::LowDimSmooth } else { ScheduleCase::LowDimModerate },
            [
                Scaling { power: -1.0 / e, log: p / 2.0 },
                Scaling {
                    power: mf / (e * gap * a),
                    log: -mf * p / ((4.0 * s - 6.0 * mf + 2.0) * a),
                },
                Scaling { power: e * a, log: e * p / 2.0 },
            ],
        )
    } else {
        (
            if smooth { ScheduleCase::HighDimSmooth } else { ScheduleCase::HighDimModerate },
            [
                Scaling { power: -1.0 / (2.0 * mf), log: p / 2.0 },
                Scaling {
                    power: 1.0 / ((4.0 * s - 6.0 * mf + 2.0) * a),
                    log: -mf * p / ((4.0 * s - 6.0 * mf + 2.0) * a),
                },
                Scaling { power: 2.0 * mf * a, log: mf * p },
            ],
        )
    };
    Ok((case, scalings))
}

pub fn schedule(
    m: usize,
    s: f64,
    delta: f64,
    mode: PriorMode,
    target: ScheduleTarget,
    constants: ScheduleConstants,
) -> Result<ScheduleResult> {
    let (case, [zs, ks, ns]) = schedule_scalings(m, s, delta, mode)?;
    let mut out = ScheduleResult {
        m,
        s,
        delta,
        alpha_s: alpha_s(m, s),
        p_m: p_m(m),
        case,
        mode,
        zeta_scaling: zs,
        k_scaling: ks,
        n_points_scaling: ns,
        zeta: None,
        k_real: None,
        k: None,
        n_points: None,
    };
    match target {
        ScheduleTarget::GivenPoints(n) => {
            if n < 2 {
                return Err(Error::Config(format!("schedule needs N >= 2, got {n}")));
            }
            let x = n as f64;
            out.zeta = Some(constants.zeta * zs.eval(x));
            let k_real = constants.k * ks.eval(x);
            out.k_real = Some(k_real);
            out.k = Some((k_real.round() as usize).max(1));
        }
        ScheduleTarget::GivenLabels(n) => {
            if n < 2 {
                return Err(Error::Config(format!("schedule needs n >= 2, got {n}")));
            }
            let x = n as f64;
            // evaluate in log space; the value routinely overflows
            let ln = constants.n_points.ln() + ns.power * x.ln() + ns.log * x.ln().ln();
            out.n_points = Some(ln.exp());
        }
    }
    Ok(out)
}

/// Reference envelope for E‖W_n − W^M‖²_{L∞} under the schedule.
pub fn discrepancy_envelope(m: usize, s: f64, delta: f64, n_points: f64) -> f64 {
    let mf = m as f64;
    let p = p_m(m);
    let ln = n_points.ln();
    if s > 4.5 * mf + 2.5 {
        let e = if m <= 4 { mf + 4.0 + delta } else { 2.0 * mf };
        n_points.powf(-1.0 / e) * ln.powf(p / 2.0)
    } else {
        let g = 2.0 * s - 3.0 * mf + 1.0;
        let denom = if m <= 4 {
            (mf + 4.0 + delta) * (6.0 * mf + 6.0)
        } else {
            mf * (12.0 * mf + 12.0)
        };
        n_points.powf(-g / denom) * ln.powf(p * g / (12.0 * mf + 12.0))
    }
}

/// Source of the standard normal coefficients ξ.
#[derive(Debug, Clone, Copy)]
pub enum Coefficients<'a> {
    Given(&'a [f64]),
    Seeded(u64),
}

/// Generator for replica `stream` of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn resolve_xi(xi: Coefficients<'_>, len: usize) -> Result<Vec<f64>> {
    match xi {
        Coefficients::Given(v) => {
            if v.len() < len {
                return Err(Error::Dimension {
                    expected: len,
                    got: v.len(),
                });
            }
            Ok(v[..len].to_vec())
        }
        Coefficients::Seeded(seed) => Ok(standard_normals(&mut ChaCha8Rng::seed_from_u64(seed), len)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub xi: Vec<f64>,
    pub s: f64,
    /// Number of expansion terms (k or K).
    pub terms: usize,
}

/// W_n on the cloud.
pub fn sample_discrete_field(eig: &EigenSystem, params: &PriorParams, xi: Coefficients<'_>) -> Result<FieldSample> {
    let k = params.k;
    if k > eig.k() {
        return Err(Error::Dimension {
            expected: k,
            got: eig.k(),
        });
    }
    let xi = resolve_xi(xi, k)?;
    let coef: Vec<f64> = (0..k)
        .map(|i| prior_std(eig.eigenvalues()[i], params.s) * xi[i])
        .collect();
    Ok(FieldSample {
        values: synthesize(eig, &coef),
        xi,
        s: params.s,
        terms: k,
    })
}

/// Σ_i coef_i ψ_i on the cloud.
pub(crate) fn synthesize(eig: &EigenSystem, coef: &[f64]) -> Vec<f64> {
    let n = eig.n();
    let mut out = vec![0.0; n];
    out.par_chunks_mut(4096).enumerate().for_each(|(ci, chunk)| {
        let off = ci * 4096;
        for (i, &a) in coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let v = &eig.vector(i)[off..off + chunk.len()];
            chunk.iter_mut().zip(v).for_each(|(o, x)| *o += a * x);
        }
    });
    out
}

/// W^M at row-major query points.
pub fn sample_continuum_field(
    spectrum: &ContinuumSpectrum,
    s: f64,
    big_k: usize,
    xi: Coefficients<'_>,
    queries: &[f64],
) -> Result<FieldSample> {
    if big_k == 0 || big_k > spectrum.len() {
        return Err(Error::Config(format!(
            "continuum truncation K = {big_k} outside the tabulated 1..={}",
            spectrum.len()
        )));
    }
    let xi = resolve_xi(xi, big_k)?;
    let coef: Vec<f64> = (0..big_k)
        .map(|i| prior_std(spectrum.eigenvalues()[i], s) * xi[i])
        .collect();
    let d = spectrum.manifold().ambient_dim();
    let values = queries
        .par_chunks_exact(d)
        .map(|x| {
            let mut row = vec![0.0; big_k];
            spectrum.eval_all(x, &mut row);
            row.iter().zip(&coef).map(|(p, c)| p * c).sum()
        })
        .collect();
    Ok(FieldSample {
        values,
        xi,
        s,
        terms: big_k,
    })
}

/// Smallest K, ending on a complete multiplet, whose tail
/// Σ_{i≥K} (1+λ_i)^{−s/2} sup|ψ_i| is below `tol`. The tail past the
/// tabulated modes is extrapolated from the power-law decay of the terms.
pub fn default_truncation(manifold: &Manifold, s: f64, tol: f64) -> Result<usize> {
    let table = match manifold.kind() {
        ManifoldKind::Sphere => 10_000,
        ManifoldKind::FlatTorus => 20_000,
    }
    .min(MAX_MODES);
    let spec = analytic_spectrum(manifold, table)?;
    let terms: Vec<f64> = (0..spec.len())
        .map(|i| prior_std(spec.eigenvalues()[i], s) * spec.sup_norm(i))
        .collect();
    // decay exponent from the tabulated terms: term_i ≈ C i^{−q}
    let (i1, i2) = (spec.len() / 4, spec.len() - 1);
    let q = (terms[i1] / terms[i2]).ln() / ((i2 as f64) / (i1 as f64)).ln();
    if q <= 1.0 {
        return Err(Error::Config(format!(
            "continuum tail does not converge for s = {s} on {manifold}"
        )));
    }
    let beyond = terms[i2] * i2 as f64 / (q - 1.0);
    let mut suffix = vec![beyond; terms.len() + 1];
    for i in (0..terms.len()).rev() {
        suffix[i] = suffix[i + 1] + terms[i];
    }
    spec.clusters()
        .iter()
        .map(|c| c.end)
        .filter(|&end| end < spec.len())
        .find(|&end| suffix[end] < tol)
        .ok_or_else(|| {
            Error::Config(format!(
                "continuum truncation for s = {s} needs more than {table} modes"
            ))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// sup_x |W_n(T(x)) − W^M(x)|² per replica.
    pub samples: Vec<f64>,
    pub rho_hat: f64,
}

/// Monte-Carlo estimate of E_ξ ‖W_n∘T − W^M‖²_{L∞(μ)} with shared ξ.
///
/// The sup is a max over `grid` (row-major points), and W_n is carried to
/// the grid by the nearest-neighbour transport. Discrete mode i is coupled to
/// aligned continuum mode i; modes beyond min(k, K) draw further entries of
/// the same ξ stream.
#[allow(clippy::too_many_arguments)]
pub fn coupled_discrepancy(
    eig: &EigenSystem,
    aligned: &AlignedBasis,
    cloud: &PointCloud,
    params: &PriorParams,
    big_k: usize,
    n_mc: usize,
    seed: u64,
    grid: &[f64],
) -> Result<DiscrepancyEstimate> {
    let k = params.k;
    if eig.n() != cloud.len() || aligned.n() != cloud.len() {
        return Err(Error::Precondition(format!(
            "eigensystem (N={}), alignment (N={}) and cloud (N={}) disagree",
            eig.n(),
            aligned.n(),
            cloud.len()
        )));
    }
    if aligned.discrete_eigenvalues() != eig.eigenvalues() {
        return Err(Error::Precondition(
            "alignment was computed for a different eigensystem".into(),
        ));
    }
    if k > eig.k() {
        return Err(Error::Dimension {
            expected: k,
            got: eig.k(),
        });
    }
    if big_k == 0 || big_k > aligned.spectrum().len() {
        return Err(Error::Config(format!(
            "continuum truncation K = {big_k} outside the tabulated 1..={}",
            aligned.spectrum().len()
        )));
    }
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be at least 1".into()));
    }
    let d = cloud.ambient_dim();
    let g = grid.len() / d;
    let transport = nn_transport(cloud, grid)?;
    let basis: Vec<f64> = grid
        .par_chunks_exact(d)
        .flat_map_iter(|x| {
            let mut row = vec![0.0; big_k];
            aligned.eval_all(x, &mut row);
            row
        })
        .collect();
    let cont_std: Vec<f64> = (0..big_k)
        .map(|i| prior_std(aligned.eigenvalue(i), params.s))
        .collect();
    let disc_std: Vec<f64> = (0..k)
        .map(|i| prior_std(eig.eigenvalues()[i], params.s))
        .collect();
    let len = k.max(big_k);
    let samples: Vec<f64> = (0..n_mc)
        .map(|r| {
            let xi = standard_normals(&mut stream_rng(seed, r as u64), len);
            let coef: Vec<f64> = (0..k).map(|i| disc_std[i] * xi[i]).collect();
            let wn = synthesize(eig, &coef);
            let cc: Vec<f64> = (0..big_k).map(|i| cont_std[i] * xi[i]).collect();
            (0..g)
                .into_par_iter()
                .map(|j| {
                    let row = &basis[j * big_k..(j + 1) * big_k];
                    let wm: f64 = row.iter().zip(&cc).map(|(p, c)| p * c).sum();
                    (wn[transport.indices[j]] - wm).powi(2)
                })
                .reduce(|| 0.0, f64::max)
        })
        .collect();
    Ok(DiscrepancyEstimate {
        mean: crate::stats::mean(&samples),
        stderr: crate::stats::stderr(&samples),
        samples,
        rho_hat: transport.rho_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn schedule_exponents_low_dim() {
        let r = schedule(2, 3.5, 0.5, PriorMode::Paper, ScheduleTarget::GivenPoints(4000), Default::default())
            .unwrap();
        assert_eq!(r.alpha_s, 9.0);
        assert_eq!(r.p_m, 0.75);
        assert_eq!(r.case, ScheduleCase::LowDimModerate);
        assert!((r.n_points_scaling.power - 58.5).abs() < 1e-12);
        assert!((r.zeta_scaling.power + 1.0 / 6.5).abs() < 1e-15);
        assert!((r.k_scaling.power - 1.0 / 58.5).abs() < 1e-15);
        let z = 4000f64.powf(-1.0 / 6.5) * 4000f64.ln().powf(0.375);
        assert!((r.zeta.unwrap() - z).abs() < 1e-14);
        assert_eq!(r.k, Some(1));
    }

    #[test]
    fn schedule_smooth_cases() {
        assert_eq!(alpha_s(2, 12.0), 1.0);
        let r = schedule(5, 26.0, 0.5, PriorMode::Paper, ScheduleTarget::GivenLabels(10), Default::default())
            .unwrap();
        assert_eq!(r.case, ScheduleCase::HighDimSmooth);
        assert!((r.zeta_scaling.power + 0.1).abs() < 1e-15);
        assert!((r.zeta_scaling.log - 0.1).abs() < 1e-15);
        assert!((r.k_scaling.power - 1.0 / 76.0).abs() < 1e-15);
        assert!((r.n_points_scaling.power - 10.0).abs() < 1e-15);
        assert!((r.n_points_scaling.log - 1.0).abs() < 1e-15);
        let want = 10f64.powi(10) * 10f64.ln();
        assert!((r.n_points.unwrap() - want).abs() < 1e-6 * want);
    }

    #[test]
    fn schedule_refusals() {
        let t = ScheduleTarget::GivenPoints(100);
        assert!(matches!(
            schedule(2, 2.5, 0.5, PriorMode::Paper, t, Default::default()),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            schedule(3, 3.5, 0.5, PriorMode::Flat, t, Default::default()),
            Err(Error::Range(_))
        ));
        assert!(schedule(2, 3.5, 0.0, PriorMode::Paper, t, Default::default()).is_err());
        let huge = schedule(2, 3.5, 0.5, PriorMode::Paper, ScheduleTarget::GivenLabels(100), Default::default())
            .unwrap();
        assert!(huge.n_points.unwrap() > 1e100);
    }

    #[test]
    fn schedule_constraints_hold_on_exponents() {
        for m in 2..=5 {
            for &delta in &[0.1, 0.5, 0.9] {
                for i in 1..=40 {
                    let s = 1.5 * m as f64 - 0.5 + 0.37 * i as f64;
                    let (_, [z, k, _]) = schedule_scalings(m, s, delta, PriorMode::Paper).unwrap();
                    let mf = m as f64;
                    assert!(z.power >= -1.0 / (mf + 4.0 + delta) - 1e-15, "m={m} s={s} δ={delta}");
                    assert!(k.power <= (1.0 - delta) / mf + 1e-15);
                    let prod = z.power + 2.0 / mf * k.power;
                    assert!(prod < 0.0 || (prod == 0.0 && z.log + 2.0 / mf * k.log <= 0.0));
                }
            }
        }
    }

    #[test]
    fn continuum_field_examples() {
        let t = Manifold::torus(2).unwrap();
        let spec = analytic_spectrum(&t, 5).unwrap();
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0];
        let f = sample_continuum_field(&spec, 4.0, 5, Coefficients::Given(&e1), &[0.3, 0.1, 0.7, 0.9]).unwrap();
        assert_eq!(f.values, vec![1.0, 1.0]);
        let e2 = [0.0, 1.0, 0.0, 0.0, 0.0];
        let f = sample_continuum_field(&spec, 4.0, 5, Coefficients::Given(&e2), &[0.0, 0.0]).unwrap();
        let want = std::f64::consts::SQRT_2 / (1.0 + 4.0 * PI * PI).powi(2);
        assert!((f.values[0] - want).abs() < 1e-17);
        assert!((f.values[0] - 0.00086312).abs() < 1e-8);
        let a = sample_continuum_field(&spec, 4.0, 5, Coefficients::Seeded(9), &[0.2, 0.4]).unwrap();
        let b = sample_continuum_field(&spec, 4.0, 5, Coefficients::Given(&a.xi), &[0.2, 0.4]).unwrap();
        assert_eq!(a.values, b.values);
        assert!(sample_continuum_field(&spec, 4.0, 6, Coefficients::Seeded(1), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn default_truncation_is_reasonable() {
        let t = Manifold::torus(2).unwrap();
        let k = default_truncation(&t, 4.0, 1e-3).unwrap();
        let spec = analytic_spectrum(&t, k + 200).unwrap();
        assert!(spec.clusters().iter().any(|c| c.end == k));
        let tail: f64 = (k..spec.len())
            .map(|i| prior_std(spec.eigenvalues()[i], 4.0) * spec.sup_norm(i))
            .sum();
        assert!(tail < 1e-3);
        assert!(default_truncation(&Manifold::sphere(), 4.0, 1e-3).is_ok());
    }

    #[test]
    fn envelope_decreases() {
        let a = discrepancy_envelope(2, 4.0, 0.5, 500.0);
        let b = discrepancy_envelope(2, 4.0, 0.5, 4000.0);
        assert!(b < a && b > 0.0);
    }
}
