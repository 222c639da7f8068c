//! Bayesian inference with the truncated graph prior.
//!
//! The unknown is the coefficient vector a of w = Σ_i a_i ψ_i^{(N)} with
//! independent priors a_i ~ N(0, (1+λ_i)^{−s}). Regression (Y = w(X) + η) has
//! a closed-form Gaussian posterior; binary classification
//! (P(Y=1|X) = Φ(w(X))) is sampled with preconditioned Crank–Nicolson.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomfield::{prior_std, standard_normals, synthesize, PriorParams};
use crate::spectral::EigenSystem;

/// Number of exact-posterior draws used for tail-mass estimates.
pub const EXACT_DRAWS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Regression { sigma2: f64 },
    Classification,
}

/// Labels attached to a subset of the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledData {
    indices: Vec<usize>,
    y: Vec<f64>,
    task: Task,
}

impl LabeledData {
    pub fn new(indices: Vec<usize>, y: Vec<f64>, task: Task, n_points: usize) -> Result<Self> {
        if indices.len() != y.len() {
            return Err(Error::Dimension {
                expected: indices.len(),
                got: y.len(),
            });
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("labeled indices must be distinct".into()));
        }
        if let Some(&bad) = seen.last().filter(|&&i| i >= n_points) {
            return Err(Error::Domain(format!("labeled index {bad} out of range for N = {n_points}")));
        }
        match task {
            Task::Regression { sigma2 } => {
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain("regression labels must be finite".into()));
                }
            }
            Task::Classification => {
                if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Domain("classification labels must be 0 or 1".into()));
                }
            }
        }
        Ok(LabeledData { indices, y, task })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Link Φ: R → (0,1) for classification.
///
/// Only links with Φ′/(Φ(1−Φ)) bounded are offered, which rules out probit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Logistic,
    Cauchit,
}

impl std::str::FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Link::Logistic),
            "cauchit" => Ok(Link::Cauchit),
            other => Err(Error::Config(format!(
                "unknown link '{other}' (expected logistic or cauchit)"
            ))),
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Logistic => "logistic",
            Link::Cauchit => "cauchit",
        }
    }

    pub fn forward(self, t: f64) -> f64 {
        match self {
            Link::Logistic => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
            Link::Cauchit => {
                if t < 0.0 {
                    (-1.0 / t).atan() / std::f64::consts::PI
                } else {
                    0.5 + t.atan() / std::f64::consts::PI
                }
            }
        }
    }

    pub fn inverse(self, p: f64) -> f64 {
        match self {
            Link::Logistic => (p / (1.0 - p)).ln(),
            Link::Cauchit => (std::f64::consts::PI * (p - 0.5)).tan(),
        }
    }

    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Link::Logistic => {
                let f = self.forward(t);
                f * (1.0 - f)
            }
            Link::Cauchit => 1.0 / (std::f64::consts::PI * (1.0 + t * t)),
        }
    }

    /// log Φ(t), accurate in the lower tail.
    pub fn log_forward(self, t: f64) -> f64 {
        match self {
            Link::Logistic => -softplus(-t),
            Link::Cauchit => self.forward(t).ln(),
        }
    }

    /// log(1 − Φ(t)).
    pub fn log_complement(self, t: f64) -> f64 {
        match self {
            Link::Logistic => -softplus(t),
            Link::Cauchit => self.forward(-t).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorKind {
    ExactGaussian,
    McmcChain,
}

/// Thinned pCN samples of the coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Row-major (samples × k).
    pub samples: Vec<f64>,
    pub k: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Step size after burn-in adaptation.
    pub beta_pcn: f64,
    pub acceptance_rate: f64,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.k..(i + 1) * self.k]
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorResult {
    pub kind: PosteriorKind,
    pub task: Task,
    pub link: Option<Link>,
    pub coef_mean: Vec<f64>,
    /// Exact case only.
    pub coef_cov: Option<DMatrix<f64>>,
    pub chain: Option<Chain>,
    /// Posterior mean field on the cloud (probability scale for
    /// classification).
    pub f_hat: Vec<f64>,
    pub warnings: Vec<String>,
    basis: EigenSystem,
    /// Exact case: prior std devs d and the Cholesky factor of
    /// I + d BᵀB d / σ², so that cov = d A^{-1} d.
    factor: Option<(Vec<f64>, Cholesky<f64, Dyn>)>,
}

impl PosteriorResult {
    pub fn k(&self) -> usize {
        self.coef_mean.len()
    }

    pub fn basis(&self) -> &EigenSystem {
        &self.basis
    }

    /// Field values (probability scale for classification) of `count`
    /// posterior samples: exact draws or the thinned chain.
    pub fn sample_fields(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let coefs: Vec<Vec<f64>> = match (&self.factor, &self.chain) {
            (Some((d, chol)), _) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = d.len();
                (0..count)
                    .map(|_| {
                        let z = DVector::from_vec(standard_normals(&mut rng, k));
                        // L^T u = z gives cov(u) = A^{-1}
                        let u = chol
                            .l()
                            .transpose()
                            .solve_upper_triangular(&z)
                            .expect("nonsingular Cholesky factor");
                        (0..k).map(|i| self.coef_mean[i] + d[i] * u[i]).collect()
                    })
                    .collect()
            }
            (None, Some(chain)) => (0..chain.len()).map(|i| chain.sample(i).to_vec()).collect(),
            (None, None) => Vec::new(),
        };
        coefs
            .iter()
            .map(|a| {
                let w = synthesize(&self.basis, a);
                match self.link {
                    Some(link) => w.into_iter().map(|t| link.forward(t)).collect(),
                    None => w,
                }
            })
            .collect()
    }
}

fn design(eig: &EigenSystem, k: usize, indices: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(indices.len(), k, |r, c| eig.vector(c)[indices[r]])
}

fn check_k(eig: &EigenSystem, params: &PriorParams) -> Result<usize> {
    if params.k == 0 || params.k > eig.k() {
        return Err(Error::Dimension {
            expected: params.k.max(1),
            got: eig.k(),
        });
    }
    Ok(params.k)
}

/// Closed-form Gaussian posterior for regression.
pub fn regression_posterior_exact(
    eig: &EigenSystem,
    params: &PriorParams,
    data: &LabeledData,
) -> Result<PosteriorResult> {
    let sigma2 = match data.task() {
        Task::Regression { sigma2 } => sigma2,
        Task::Classification => {
            return Err(Error::TaskMismatch(
                "exact posterior requires a regression task".into(),
            ))
        }
    };
    let k = check_k(eig, params)?;
    let d: Vec<f64> = (0..k).map(|i| prior_std(eig.eigenvalues()[i], params.s)).collect();
    let b = design(eig, k, data.indices());
    let dm = DMatrix::from_diagonal(&DVector::from_vec(d.clone()));
    let bd = &b * &dm;
    let a = DMatrix::identity(k, k) + bd.transpose() * &bd / sigma2;
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Numerical("posterior precision is not positive definite".into())
    })?;
    let y = DVector::from_column_slice(data.y());
    let rhs = bd.transpose() * y / sigma2;
    let u = chol.solve(&rhs);
    let mean: Vec<f64> = (0..k).map(|i| d[i] * u[i]).collect();
    let inv = chol.inverse();
    let cov = &dm * inv * &dm;
    let cov = (&cov + cov.transpose()) * 0.5;
    let basis = eig.truncated(k);
    let f_hat = synthesize(&basis, &mean);
    Ok(PosteriorResult {
        kind: PosteriorKind::ExactGaussian,
        task: data.task(),
        link: None,
        coef_mean: mean,
        coef_cov: Some(cov),
        chain: None,
        f_hat,
        warnings: Vec::new(),
        basis,
        factor: Some((d, chol)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcnOptions {
    /// Post-burn-in iterations.
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial step size in (0, 1].
    pub beta: f64,
    /// Robbins–Monro adaptation of β during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for PcnOptions {
    fn default() -> Self {
        PcnOptions {
            n_iter: 10_000,
            burn_in: 2_000,
            thin: 10,
            beta: 0.2,
            adapt: true,
            target_acceptance: 0.25,
            seed: 0,
        }
    }
}

/// min(1, exp(ℓ′ − ℓ)).
pub fn pcn_accept_probability(current: f64, proposed: f64) -> f64 {
    let diff = proposed - current;
    if diff >= 0.0 {
        1.0
    } else {
        diff.exp()
    }
}

fn log_likelihood(task: Task, link: Option<Link>, u: &[f64], y: &[f64]) -> f64 {
    match task {
        Task::Regression { sigma2 } => {
            -u.iter().zip(y).map(|(f, y)| (y - f) * (y - f)).sum::<f64>() / (2.0 * sigma2)
        }
        Task::Classification => {
            let link = link.unwrap_or_default();
            u.iter()
                .zip(y)
                .map(|(&t, &y)| {
                    if y == 1.0 {
                        link.log_forward(t)
                    } else {
                        link.log_complement(t)
                    }
                })
                .sum()
        }
    }
}

/// pCN sampling of the coefficient posterior.
pub fn pcn_sample(
    eig: &EigenSystem,
    params: &PriorParams,
    data: &LabeledData,
    link: Option<Link>,
    opts: &PcnOptions,
) -> Result<PosteriorResult> {
    if !(opts.beta > 0.0 && opts.beta <= 1.0) {
        return Err(Error::Config(format!("pCN step must lie in (0, 1], got {}", opts.beta)));
    }
    if opts.thin == 0 || opts.n_iter == 0 {
        return Err(Error::Config("n_iter and thin must be at least 1".into()));
    }
    let link = match data.task() {
        Task::Classification => Some(link.unwrap_or_default()),
        Task::Regression { .. } => None,
    };
    let k = check_k(eig, params)?;
    let d: Vec<f64> = (0..k).map(|i| prior_std(eig.eigenvalues()[i], params.s)).collect();
    let b = design(eig, k, data.indices());
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let apply = |a: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend((0..n).map(|r| (0..k).map(|c| b[(r, c)] * a[c]).sum::<f64>()));
    };

    let mut a: Vec<f64> = standard_normals(&mut rng, k).iter().zip(&d).map(|(z, s)| z * s).collect();
    let mut u = Vec::with_capacity(n);
    apply(&a, &mut u);
    let mut ll = log_likelihood(data.task(), link, &u, data.y());
    if !ll.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood at iteration 0".into()));
    }
    let mut beta = opts.beta;
    let mut proposal = vec![0.0; k];
    let mut u_prop = Vec::with_capacity(n);
    let mut accepted_post = 0usize;
    let mut coef_sum = vec![0.0; k];
    let mut samples = Vec::new();
    let total = opts.burn_in + opts.n_iter;
    for it in 0..total {
        let root = (1.0 - beta * beta).sqrt();
        let xi = standard_normals(&mut rng, k);
        for i in 0..k {
            proposal[i] = root * a[i] + beta * d[i] * xi[i];
        }
        apply(&proposal, &mut u_prop);
        let ll_prop = log_likelihood(data.task(), link, &u_prop, data.y());
        if !ll_prop.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite log-likelihood at iteration {it}"
            )));
        }
        let prob = pcn_accept_probability(ll, ll_prop);
        let accept = prob >= 1.0 || rng.random::<f64>() < prob;
        if accept {
            std::mem::swap(&mut a, &mut proposal);
            std::mem::swap(&mut u, &mut u_prop);
            ll = ll_prop;
        }
        if it < opts.burn_in {
            if opts.adapt {
                let gain = 1.0 / ((it + 1) as f64).powf(0.6);
                beta = (beta.ln() + gain * (prob - opts.target_acceptance))
                    .exp()
                    .clamp(1e-5, 1.0);
            }
            continue;
        }
        if accept {
            accepted_post += 1;
        }
        coef_sum.iter_mut().zip(&a).for_each(|(s, x)| *s += x);
        if (it - opts.burn_in) % opts.thin == 0 {
            samples.extend_from_slice(&a);
        }
    }
    let acceptance_rate = accepted_post as f64 / opts.n_iter as f64;
    let mut warnings = Vec::new();
    if !(0.05..=0.6).contains(&acceptance_rate) && n > 0 {
        warnings.push(format!(
            "pCN acceptance rate {acceptance_rate:.3} outside [0.05, 0.6] (beta = {beta:.3e})"
        ));
    }
    let coef_mean: Vec<f64> = coef_sum.iter().map(|s| s / opts.n_iter as f64).collect();
    let basis = eig.truncated(k);
    let chain = Chain {
        samples,
        k,
        n_iter: opts.n_iter,
        burn_in: opts.burn_in,
        thin: opts.thin,
        beta_pcn: beta,
        acceptance_rate,
        seed: opts.seed,
    };
    let f_hat = match link {
        None => synthesize(&basis, &coef_mean),
        Some(link) => {
            let mut acc = vec![0.0; basis.n()];
            for i in 0..chain.len() {
                let w = synthesize(&basis, chain.sample(i));
                acc.iter_mut().zip(w).for_each(|(s, t)| *s += link.forward(t));
            }
            acc.iter().map(|s| s / chain.len() as f64).collect()
        }
    };
    Ok(PosteriorResult {
        kind: PosteriorKind::McmcChain,
        task: data.task(),
        link,
        coef_mean,
        coef_cov: None,
        chain: Some(chain),
        f_hat,
        warnings,
        basis,
        factor: None,
    })
}

fn check_pair(f: &[f64], g: &[f64], indices: &[usize]) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::Dimension {
            expected: f.len(),
            got: g.len(),
        });
    }
    if indices.is_empty() {
        return Err(Error::Domain("empty labeled index set".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= f.len()) {
        return Err(Error::Domain(format!("index {bad} out of range for length {}", f.len())));
    }
    Ok(())
}

/// ‖f − g‖_n = √((1/n) Σ_{i∈indices} (f_i − g_i)²).
pub fn empirical_norm(f: &[f64], g: &[f64], indices: &[usize]) -> Result<f64> {
    check_pair(f, g, indices)?;
    let ss: f64 = indices.iter().map(|&i| (f[i] - g[i]).powi(2)).sum();
    Ok((ss / indices.len() as f64).sqrt())
}

/// ‖f − f₀‖_n for each posterior sample (exact draws or chain states).
pub fn posterior_distances(result: &PosteriorResult, f0: &[f64], indices: &[usize], seed: u64) -> Result<Vec<f64>> {
    result
        .sample_fields(EXACT_DRAWS, seed)
        .iter()
        .map(|f| empirical_norm(f, f0, indices))
        .collect()
}

/// Fraction of posterior samples with ‖f − f₀‖_n ≥ radius.
pub fn contraction_mass(distances: &[f64], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    if distances.is_empty() {
        return Err(Error::Domain("no posterior samples".into()));
    }
    Ok(distances.iter().filter(|&&d| d >= radius).count() as f64 / distances.len() as f64)
}

/// Root average squared Hellinger distance between Bernoulli(f_i) and
/// Bernoulli(g_i) over the labeled points.
pub fn hellinger_rash(f: &[f64], g: &[f64], indices: &[usize]) -> Result<f64> {
    check_pair(f, g, indices)?;
    let mut s = 0.0;
    for &i in indices {
        let (p, q) = (f[i], g[i]);
        if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!(
                "probabilities must lie strictly inside (0,1), got {p} and {q} at index {i}"
            )));
        }
        s += (p.sqrt() - q.sqrt()).powi(2) + ((1.0 - p).sqrt() - (1.0 - q).sqrt()).powi(2);
    }
    Ok((s / indices.len() as f64).sqrt())
}
