use graphssl::geometry::{analytic_spectrum, reference_grid, sample_uniform, Manifold, PointCloud};
use graphssl::graph::{build_similarity, laplacian, SparseLaplacian};
use graphssl::spectral::{align_spectra, smallest_eigenpairs, spectral_report, ClusterTol, EigenSystem};
use nalgebra::{DMatrix, SymmetricEigen};

fn dense(lap: &SparseLaplacian) -> (Vec<f64>, DMatrix<f64>) {
    let n = lap.len();
    let mut a = DMatrix::zeros(n, n);
    for (i, j, v) in lap.triplets() {
        a[(i, j)] = v;
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// sin of the largest principal angle between two column spaces.
fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let proj = b - a * (a.transpose() * b);
    proj.svd(false, false).singular_values.max()
}

fn block(eig: &EigenSystem, r: std::ops::Range<usize>) -> DMatrix<f64> {
    let n = eig.n();
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, r.len(), |i, c| eig.vector(r.start + c)[i] * s)
}

fn check_instance(cloud: &PointCloud, zeta: f64, k: usize) {
    let lap = laplacian(build_similarity(cloud, zeta).unwrap());
    assert!(lap.is_connected());
    let eig = smallest_eigenpairs(&lap, k, 1e-10, 3).unwrap();
    let (values, vectors) = dense(&lap);
    for i in 0..k {
        let want = values[i];
        assert!(
            (eig.eigenvalues()[i] - want).abs() <= 1e-8 * want.abs().max(1.0),
            "eigenvalue {i}: {} vs {want}",
            eig.eigenvalues()[i]
        );
    }
    // group the dense spectrum into near-degenerate clusters
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < values.len() && (values[end] - values[end - 1]).abs() <= 1e-8 * values[end].abs().max(1.0) {
            end += 1;
        }
        if end <= k {
            let q = vectors.columns(start, end - start).into_owned();
            let sine = max_principal_sine(&q, &block(&eig, start..end));
            assert!(sine < 1e-6, "cluster {start}..{end}: sin angle {sine}");
        }
        start = end;
    }
}

#[test]
fn iterative_solver_matches_dense_on_random_clouds() {
    let torus = Manifold::torus(2).unwrap();
    for (seed, n, zeta) in [(1, 150, 0.25), (2, 300, 0.2), (3, 220, 0.3)] {
        check_instance(&sample_uniform(&torus, n, seed).unwrap(), zeta, 20);
    }
    check_instance(&sample_uniform(&Manifold::sphere(), 250, 4).unwrap(), 0.25, 20);
}

#[test]
fn iterative_solver_resolves_exact_multiplets() {
    // a square lattice on the torus has the torus symmetries, so its graph
    // spectrum has exact 4- and 8-fold multiplets
    let torus = Manifold::torus(2).unwrap();
    let pts = reference_grid(&torus, 256);
    let cloud = PointCloud::from_coords(torus, pts, 0).unwrap();
    check_instance(&cloud, 0.2, 20);
}

#[test]
fn eigenvectors_are_orthonormal_in_empirical_measure() {
    let cloud = sample_uniform(&Manifold::torus(3).unwrap(), 1500, 6).unwrap();
    let lap = laplacian(build_similarity(&cloud, 0.3).unwrap());
    let eig = smallest_eigenpairs(&lap, 10, 1e-10, 1).unwrap();
    let n = eig.n() as f64;
    for i in 0..10 {
        for j in 0..10 {
            let ip: f64 = eig.vector(i).iter().zip(eig.vector(j)).map(|(a, b)| a * b).sum::<f64>() / n;
            assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
    assert_eq!(eig.eigenvalues()[0], 0.0);
    assert!(eig.vector(0).iter().all(|&v| v == 1.0));
    assert!(eig.eigenvalues()[1] > 1e-10);
    assert!(eig.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn solver_is_deterministic() {
    let cloud = sample_uniform(&Manifold::sphere(), 2000, 8).unwrap();
    let lap = laplacian(build_similarity(&cloud, 0.15).unwrap());
    let a = smallest_eigenpairs(&lap, 12, 1e-9, 5).unwrap();
    let b = smallest_eigenpairs(&lap, 12, 1e-9, 5).unwrap();
    assert_eq!(a.eigenvalues(), b.eigenvalues());
    assert_eq!(a.vectors(), b.vectors());
}

#[test]
fn alignment_recovers_torus_eigenfunctions() {
    let torus = Manifold::torus(2).unwrap();
    let cloud = sample_uniform(&torus, 4000, 9).unwrap();
    let lap = laplacian(build_similarity(&cloud, 0.12).unwrap());
    let eig = smallest_eigenpairs(&lap, 9, 1e-9, 2).unwrap();
    let spec = analytic_spectrum(&torus, 9).unwrap();
    let al = align_spectra(&eig, &spec, &cloud, ClusterTol::default()).unwrap();
    let rep = spectral_report(&eig, &al, 0.12, 0.02);
    for row in &rep.rows[1..] {
        assert!(row.rel_error < 0.15, "{row:?}");
        assert!(row.function_l2_error < 0.3, "{row:?}");
    }
    for c in al.clusters() {
        let r = &c.rotation;
        let id = r.transpose() * r;
        assert!((id - DMatrix::identity(r.nrows(), r.ncols())).norm() < 1e-10);
    }
}
