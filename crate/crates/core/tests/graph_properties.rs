use graphssl::geometry::{sample_uniform, Manifold, PointCloud};
use graphssl::graph::{build_similarity, dirichlet_energy, kernel_constant, laplacian, truth_laplacian_error};
use graphssl::geometry::{make_truth, TruthRecipe};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ½ Σ_{i≠j} H_ij (v_i − v_j)² with H rebuilt from raw pairwise distances.
fn brute_energy(cloud: &PointCloud, zeta: f64, v: &[f64]) -> f64 {
    let m = cloud.manifold();
    let c = kernel_constant(cloud.len(), m.intrinsic_dim(), zeta);
    let mut s = 0.0;
    for i in 0..cloud.len() {
        for j in 0..cloud.len() {
            if i != j && m.kernel_dist2(cloud.point(i), cloud.point(j)).sqrt() < zeta {
                s += c * (v[i] - v[j]).powi(2);
            }
        }
    }
    0.5 * s
}

fn quadratic_form(lap: &graphssl::graph::SparseLaplacian, v: &[f64]) -> f64 {
    let lv = lap.apply(v).unwrap();
    v.iter().zip(&lv).map(|(a, b)| a * b).sum()
}

#[test]
fn energy_matches_double_sum() {
    let torus = Manifold::torus(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in 0..5 {
        let n = rng.random_range(20..=100);
        let zeta = rng.random_range(0.1..0.4);
        let cloud = sample_uniform(&torus, n, inst).unwrap();
        let lap = laplacian(build_similarity(&cloud, zeta).unwrap());
        for _ in 0..10 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = brute_energy(&cloud, zeta, &v);
            let q = quadratic_form(&lap, &v);
            let e = dirichlet_energy(&lap, &v).unwrap();
            assert!((q - want).abs() <= 1e-10 * want.abs().max(1e-300));
            assert!((e - want).abs() <= 1e-10 * want.abs().max(1e-300));
        }
    }
}

#[test]
fn adjacency_matches_brute_force_on_both_manifolds() {
    for (m, zeta) in [(Manifold::torus(3).unwrap(), 0.3), (Manifold::sphere(), 0.2), (Manifold::torus(2).unwrap(), 0.05)] {
        let cloud = sample_uniform(&m, 400, 4).unwrap();
        let g = build_similarity(&cloud, zeta).unwrap();
        let mut nnz = 0;
        for i in 0..cloud.len() {
            let want: Vec<u32> = (0..cloud.len())
                .filter(|&j| j != i && m.kernel_dist2(cloud.point(i), cloud.point(j)).sqrt() < zeta)
                .map(|j| j as u32)
                .collect();
            assert_eq!(g.neighbors(i), want.as_slice(), "row {i} on {m}");
            nnz += want.len();
        }
        assert_eq!(g.nnz(), nnz);
    }
}

#[test]
fn laplacian_is_symmetric_with_zero_row_sums() {
    let cloud = sample_uniform(&Manifold::sphere(), 300, 2).unwrap();
    let lap = laplacian(build_similarity(&cloud, 0.2).unwrap());
    let n = lap.len();
    let mut rows = vec![0.0; n];
    for (i, j, v) in lap.triplets() {
        assert_eq!(lap.entry(i, j), lap.entry(j, i));
        assert_eq!(v, lap.entry(i, j));
        rows[i] += v;
    }
    let scale = lap.degrees().iter().cloned().fold(0.0, f64::max);
    assert!(rows.iter().all(|r| r.abs() <= 1e-12 * scale));
}

#[test]
fn pointwise_error_shrinks_on_denser_clouds() {
    let torus = Manifold::torus(2).unwrap();
    let truth = make_truth(
        &torus,
        &TruthRecipe::SmoothLowFrequency {
            coefficients: vec![0.0, 1.0],
        },
    )
    .unwrap();
    let err = |n: usize, zeta: f64| {
        let cloud = sample_uniform(&torus, n, 3).unwrap();
        let lap = laplacian(build_similarity(&cloud, zeta).unwrap());
        truth_laplacian_error(&lap, &cloud, &truth).unwrap()
    };
    let coarse = err(1000, 0.25);
    let fine = err(16000, 0.15);
    assert!(fine.mean_error < coarse.mean_error);
    assert!(coarse.sup_error >= coarse.mean_error && coarse.mean_error >= 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn laplacian_is_positive_semidefinite(seed in 0u64..1000, n in 5usize..80, zeta in 0.05f64..0.6, vseed in 0u64..1000) {
        let cloud = sample_uniform(&Manifold::torus(2).unwrap(), n, seed).unwrap();
        let lap = laplacian(build_similarity(&cloud, zeta).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(vseed);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let q = quadratic_form(&lap, &v);
        let scale: f64 = lap.degrees().iter().sum::<f64>() * 25.0;
        prop_assert!(q >= -1e-12 * scale.max(1.0));
        // constants are in the kernel
        let shifted: Vec<f64> = v.iter().map(|x| x + 3.0).collect();
        let q2 = quadratic_form(&lap, &shifted);
        prop_assert!((q - q2).abs() <= 1e-9 * q.abs().max(1.0));
    }

    #[test]
    fn energy_identity_holds(seed in 0u64..1000, n in 2usize..60, zeta in 0.05f64..0.7, vseed in 0u64..1000) {
        let cloud = sample_uniform(&Manifold::sphere(), n, seed).unwrap();
        let lap = laplacian(build_similarity(&cloud, zeta).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(vseed);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = brute_energy(&cloud, zeta, &v);
        let q = quadratic_form(&lap, &v);
        prop_assert!((q - want).abs() <= 1e-10 * want.abs() + 1e-300);
    }

    #[test]
    fn graph_is_monotone_in_radius(seed in 0u64..1000, z1 in 0.05f64..0.3, dz in 0.0f64..0.3) {
        let cloud = sample_uniform(&Manifold::torus(2).unwrap(), 60, seed).unwrap();
        let small = build_similarity(&cloud, z1).unwrap();
        let large = build_similarity(&cloud, z1 + dz).unwrap();
        for i in 0..60 {
            for j in small.neighbors(i) {
                prop_assert!(large.neighbors(i).contains(j));
            }
        }
    }
}
