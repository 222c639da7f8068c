use graphssl::geometry::{sample_uniform, Manifold};
use graphssl::graph::{build_similarity, laplacian};
use graphssl::posterior::{
    contraction_mass, empirical_norm, hellinger_rash, pcn_sample, posterior_distances, regression_posterior_exact,
    LabeledData, Link, PcnOptions, Task,
};
use graphssl::randomfield::{prior_std, sample_discrete_field, Coefficients, PriorMode, PriorParams};
use graphssl::spectral::{smallest_eigenpairs, EigenSystem};
use graphssl::stats::{anderson_darling_std_normal, median};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(n: usize, k: usize, seed: u64) -> EigenSystem {
    let cloud = sample_uniform(&Manifold::torus(2).unwrap(), n, seed).unwrap();
    let lap = laplacian(build_similarity(&cloud, 0.3).unwrap());
    smallest_eigenpairs(&lap, k, 1e-10, seed).unwrap()
}

fn params(k: usize, s: f64) -> PriorParams {
    PriorParams {
        s,
        k,
        zeta: 0.3,
        m: 2,
        mode: PriorMode::Paper,
    }
}

/// Coefficients of a field in the L²(μ_N)-orthonormal eigenbasis.
fn project(eig: &EigenSystem, w: &[f64], i: usize) -> f64 {
    eig.vector(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / eig.n() as f64
}

#[test]
fn prior_coefficients_have_the_prescribed_law() {
    let eig = system(400, 8, 1);
    let p = params(8, 2.0);
    let draws = 2000;
    let mut coef = vec![Vec::with_capacity(draws); 8];
    for r in 0..draws {
        let w = sample_discrete_field(&eig, &p, Coefficients::Seeded(r as u64)).unwrap();
        for (i, c) in coef.iter_mut().enumerate() {
            c.push(project(&eig, &w.values, i));
        }
    }
    for (i, c) in coef.iter().enumerate() {
        let sd = prior_std(eig.eigenvalues()[i], 2.0);
        let z: Vec<f64> = c.iter().map(|a| a / sd).collect();
        let var = z.iter().map(|v| v * v).sum::<f64>() / draws as f64;
        let se = (z.iter().map(|v| (v * v - var).powi(2)).sum::<f64>() / (draws - 1) as f64 / draws as f64).sqrt();
        assert!((var - 1.0).abs() < 5.0 * se, "mode {i}: standardized variance {var} (se {se})");
        assert!(anderson_darling_std_normal(&z).p_value > 1e-3, "mode {i} is not Gaussian");
    }
}

#[test]
fn unit_first_coefficient_gives_the_constant_field() {
    let eig = system(300, 6, 2);
    let mut xi = vec![0.0; 6];
    xi[0] = 1.0;
    let w = sample_discrete_field(&eig, &params(6, 3.5), Coefficients::Given(&xi)).unwrap();
    assert!(w.values.iter().all(|&v| v == 1.0));
}

#[test]
fn exact_posterior_matches_dense_joint_gaussian() {
    for (n_points, n_labels, k, seed) in [(120, 30, 10, 3), (200, 80, 25, 4), (150, 150, 12, 5)] {
        let eig = system(n_points, k, seed);
        let s = 2.5;
        let sigma2 = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = (0..n_labels).map(|i| (i * 7) % n_points).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let y: Vec<f64> = idx.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = LabeledData::new(idx.clone(), y.clone(), Task::Regression { sigma2 }, n_points).unwrap();
        let post = regression_posterior_exact(&eig, &params(k, s), &data).unwrap();

        // joint Gaussian of (a, y): condition a on y by the textbook formulas
        let d2 = DMatrix::from_diagonal(&DVector::from_iterator(
            k,
            (0..k).map(|i| prior_std(eig.eigenvalues()[i], s).powi(2)),
        ));
        let b = DMatrix::from_fn(idx.len(), k, |r, c| eig.vector(c)[idx[r]]);
        let syy = &b * &d2 * b.transpose() + DMatrix::identity(idx.len(), idx.len()) * sigma2;
        let sy_inv = syy.try_inverse().unwrap();
        let say = &d2 * b.transpose();
        let mean = &say * &sy_inv * DVector::from_vec(y);
        let cov = &d2 - &say * &sy_inv * say.transpose();
        let cov_hat = post.coef_cov.as_ref().unwrap();
        let scale_m = mean.amax().max(1e-300);
        let scale_c = cov.amax();
        for i in 0..k {
            assert!((post.coef_mean[i] - mean[i]).abs() <= 1e-8 * scale_m);
            for j in 0..k {
                assert!((cov_hat[(i, j)] - cov[(i, j)]).abs() <= 1e-8 * scale_c);
            }
            // shrinkage: conditioning never increases marginal variance
            assert!(cov_hat[(i, i)] <= d2[(i, i)] * (1.0 + 1e-12));
        }
    }
}

#[test]
fn pcn_reproduces_the_exact_posterior_mean() {
    let eig = system(300, 10, 6);
    let p = params(10, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let idx: Vec<usize> = (0..40).collect();
    let y: Vec<f64> = idx.iter().map(|&i| eig.vector(1)[i] * 0.05 + rng.random_range(-0.1..0.1)).collect();
    let data = LabeledData::new(idx, y, Task::Regression { sigma2: 0.01 }, 300).unwrap();
    let exact = regression_posterior_exact(&eig, &p, &data).unwrap();
    let opts = PcnOptions {
        n_iter: 30_000,
        burn_in: 3_000,
        seed: 2,
        ..PcnOptions::default()
    };
    let chain = pcn_sample(&eig, &p, &data, None, &opts).unwrap();
    let sup = exact
        .f_hat
        .iter()
        .zip(&chain.f_hat)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(sup < 0.05, "sup difference {sup}");
    let acc = chain.chain.as_ref().unwrap().acceptance_rate;
    assert!((0.05..=0.6).contains(&acc), "acceptance {acc}");
}

#[test]
fn classification_chain_tilts_towards_the_labels() {
    let eig = system(300, 5, 7);
    let p = params(5, 2.0);
    let idx: Vec<usize> = (0..100).collect();
    let y: Vec<f64> = idx.iter().map(|&i| if i % 4 == 0 { 0.0 } else { 1.0 }).collect();
    let data = LabeledData::new(idx.clone(), y, Task::Classification, 300).unwrap();
    for link in [Link::Logistic, Link::Cauchit] {
        let post = pcn_sample(&eig, &p, &data, Some(link), &PcnOptions::default()).unwrap();
        let avg: f64 = idx.iter().map(|&i| post.f_hat[i]).sum::<f64>() / 100.0;
        assert!((avg - 0.75).abs() < 0.1, "{link:?}: mean probability {avg}");
        assert!(post.f_hat.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn contraction_mass_at_the_median_is_about_half() {
    let eig = system(200, 8, 8);
    let idx: Vec<usize> = (0..50).collect();
    let f0: Vec<f64> = (0..200).map(|i| 0.3 * eig.vector(0)[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| f0[i]).collect();
    let data = LabeledData::new(idx.clone(), y, Task::Regression { sigma2: 0.1 }, 200).unwrap();
    let post = regression_posterior_exact(&eig, &params(8, 2.0), &data).unwrap();
    let d = posterior_distances(&post, &f0, &idx, 3).unwrap();
    let med = median(&d);
    let mass = contraction_mass(&d, med).unwrap();
    assert!((mass - 0.5).abs() < 0.01);
    assert_eq!(contraction_mass(&d, 1e6).unwrap(), 0.0);
    assert_eq!(contraction_mass(&d, 1e-12).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hellinger_is_a_bounded_symmetric_distance(ps in proptest::collection::vec((0.001f64..0.999, 0.001f64..0.999), 1..40)) {
        let f: Vec<f64> = ps.iter().map(|p| p.0).collect();
        let g: Vec<f64> = ps.iter().map(|p| p.1).collect();
        let idx: Vec<usize> = (0..f.len()).collect();
        let h = hellinger_rash(&f, &g, &idx).unwrap();
        prop_assert!((0.0..=2f64.sqrt()).contains(&h));
        prop_assert!((h - hellinger_rash(&g, &f, &idx).unwrap()).abs() < 1e-15);
        prop_assert_eq!(hellinger_rash(&f, &f, &idx).unwrap(), 0.0);
    }

    #[test]
    fn smoother_priors_shrink_every_coefficient(seed in 0u64..500, s in 1.5f64..4.0, ds in 0.0f64..3.0) {
        let eig = system(120, 6, 9);
        let a = sample_discrete_field(&eig, &params(6, s), Coefficients::Seeded(seed)).unwrap();
        let b = sample_discrete_field(&eig, &params(6, s + ds), Coefficients::Seeded(seed)).unwrap();
        let idx: Vec<usize> = (0..120).collect();
        let zero = vec![0.0; 120];
        let na = empirical_norm(&a.values, &zero, &idx).unwrap();
        let nb = empirical_norm(&b.values, &zero, &idx).unwrap();
        prop_assert!(nb <= na * (1.0 + 1e-12));
        for i in 0..6 {
            prop_assert!(project(&eig, &b.values, i).abs() <= project(&eig, &a.values, i).abs() + 1e-12);
        }
    }
}
