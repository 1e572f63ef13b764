use std::f64::consts::{PI, SQRT_2};

use lqgraphon_core::graphon::AnalyticFn;
use lqgraphon_core::noise::*;
use lqgraphon_core::TimeGrid;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn correlation_from(g: DMatrix<f64>) -> CorrelationMatrix {
    let c = g.transpose() * g;
    let d: Vec<f64> = (0..c.nrows()).map(|i| c[(i, i)].sqrt()).collect();
    let mut m = DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] / (d[i] * d[j]));
    for i in 0..m.nrows() {
        m[(i, i)] = 1.0;
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
    CorrelationMatrix::new(m).unwrap()
}

proptest! {
    #[test]
    fn factorization_is_exact(rows in 1usize..6, n in 1usize..10, raw in prop::collection::vec(0.1f64..1.0, 60)) {
        let g = DMatrix::from_fn(rows, n, |i, j| raw[i * 10 + j] * if (i + j) % 3 == 0 { -1.0 } else { 1.0 });
        let q = correlation_from(g);
        let f = factor_correlation(&q).unwrap();
        prop_assert!(f.rank() <= rows.min(n));
        prop_assert!((f.reconstruct() - q.entries()).abs().max() <= 1e-9);
        for w in f.eigenvalues().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(f.eigenvalues().iter().all(|&v| v > 0.0));
    }

    /// Procrustes alignment is at least as good as every rotation/reflection of
    /// the eigenvector pair on a fine angular grid.
    #[test]
    fn alignment_beats_rotation_search(n in 4usize..40) {
        let q = CorrelationMatrix::named("cosine", n).unwrap();
        let f = factor_correlation(&q).unwrap();
        let spec = QWienerSpec::named("cosine-kernel").unwrap();
        let best = align_factorization(&f, &spec).unwrap().discrepancy.term1;
        let c = f.factor();
        let targets: Vec<Vec<f64>> = (0..2)
            .map(|j| {
                let g = &spec.eigenfunctions()[j];
                (0..n * 64).map(|p| 0.5f64.sqrt() * g.eval((p as f64 + 0.5) / (n * 64) as f64)).collect()
            })
            .collect();
        for step in 0..360 {
            let th = step as f64 * PI / 180.0;
            for flip in [1.0, -1.0] {
                let rot = [[th.cos(), -th.sin()], [flip * th.sin(), flip * th.cos()]];
                let mut term1 = 0.0;
                for j in 0..2 {
                    for p in 0..n * 64 {
                        let i = p / 64;
                        let h = rot[j][0] * c[(i, 0)] + rot[j][1] * c[(i, 1)];
                        term1 += (targets[j][p] - h).powi(2);
                    }
                }
                term1 /= (n * 64) as f64;
                prop_assert!(best <= term1 + 1e-12);
            }
        }
    }
}

#[test]
fn cosine_example_bounds() {
    let spec = QWienerSpec::named("cosine-kernel").unwrap();
    let mut prev = f64::INFINITY;
    for n in [8usize, 16, 32, 64, 128, 256] {
        let d = assumption2_discrepancy(&CorrelationMatrix::named("cosine", n).unwrap(), &spec).unwrap();
        assert!(d.term1 <= 2.0 * PI * PI / (n * n) as f64, "n = {n}: {}", d.term1);
        assert_eq!(d.term2, 0.0);
        assert!(d.term1 + d.term2 < prev);
        prev = d.term1 + d.term2;
    }
}

#[test]
fn double_constant_term2() {
    let spec = QWienerSpec::named("constant-kernel").unwrap();
    let mut prev = f64::INFINITY;
    for n in [8usize, 16, 32, 64, 128, 256] {
        let d = assumption2_discrepancy(&CorrelationMatrix::named("double-constant", n).unwrap(), &spec).unwrap();
        let nf = n as f64;
        let exact = (nf - 1.0) / (2.0 * nf * nf);
        assert!((d.term2 - exact).abs() <= 1e-12 * exact, "n = {n}: {} vs {exact}", d.term2);
        assert!(d.term1 + d.term2 < prev);
        prev = d.term1 + d.term2;
    }
}

#[test]
fn cell_gram_matrix_has_tiny_term1() {
    // Eigenfunctions constant on every cell, so the per-cell Gram matrix has unit diagonal.
    let haar = |x: f64| if x < 0.5 { 1.0 } else { -1.0 };
    let spec = QWienerSpec::new(vec![0.6, 0.4], vec![AnalyticFn::new(|_| 1.0), AnalyticFn::new(haar)]).unwrap();
    let n = 256;
    let avg: Vec<Vec<f64>> = spec.eigenfunctions().iter().map(|f| f.cell_averages(n)).collect();
    let q = DMatrix::from_fn(n, n, |i, j| {
        spec.eigenvalues().iter().zip(&avg).map(|(l, a)| l * a[i] * a[j]).sum()
    });
    let d = assumption2_discrepancy(&CorrelationMatrix::new(q).unwrap(), &spec).unwrap();
    assert!(d.term1 < 1e-6, "{}", d.term1);
    assert!(d.term2.abs() < 1e-12);
}

#[test]
fn sampling_is_deterministic() {
    let f = factor_correlation(&CorrelationMatrix::named("identity", 2).unwrap()).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    assert_eq!(sample_noise(&f, grid, 42), sample_noise(&f, grid, 42));
    assert_ne!(sample_noise(&f, grid, 42).independent(), sample_noise(&f, grid, 43).independent());
    let p = sample_noise(&f, grid, 42);
    for k in 0..=100 {
        for i in 0..2 {
            let expect: f64 = (0..2).map(|j| f.factor()[(i, j)] * p.independent()[j][k]).sum();
            assert_eq!(p.correlated()[i][k], expect);
        }
    }
}

#[test]
fn sample_correlation_matches_matrix() {
    let n = 16;
    let f = factor_correlation(&CorrelationMatrix::named("cosine", n).unwrap()).unwrap();
    let grid = TimeGrid::from_dt(0.01, 0.01).unwrap();
    let paths = 20_000;
    let mut xy = Vec::with_capacity(paths);
    let (mut sxx, mut syy) = (0.0, 0.0);
    for r in 0..paths {
        let p = sample_noise_replica(&f, grid, 5, r as u64);
        let a = p.correlated_increment(0, 0);
        let b = p.correlated_increment(1, 0);
        xy.push(a * b);
        sxx += a * a;
        syy += b * b;
    }
    let mean_xy = xy.iter().sum::<f64>() / paths as f64;
    let corr = mean_xy / ((sxx / paths as f64) * (syy / paths as f64)).sqrt();
    // Standard error of a Gaussian sample correlation.
    let rho = (PI / n as f64).cos();
    let se = (1.0 - rho * rho) / (paths as f64).sqrt();
    assert!((corr - rho).abs() <= 3.0 * se, "{corr} vs {rho} (se {se})");
}

#[test]
fn increment_variance_is_dt() {
    let f = factor_correlation(&CorrelationMatrix::named("identity", 1).unwrap()).unwrap();
    let grid = TimeGrid::new(1.0, 20_000).unwrap();
    let p = sample_noise(&f, grid, 8);
    let var = (0..20_000).map(|k| p.driver_increment(0, k).powi(2)).sum::<f64>() / 20_000.0;
    let dt = grid.dt();
    assert!((var - dt).abs() < 4.0 * dt * (2.0f64 / 20_000.0).sqrt());
}

#[test]
fn named_specs() {
    let c = QWienerSpec::named("cosine-kernel").unwrap();
    assert!((c.kernel(0.3, 0.3) - 1.0).abs() < 1e-12);
    assert!((c.eigenfunctions()[0].eval(0.25) - SQRT_2 * (PI / 4.0).cos()).abs() < 1e-15);
    assert_eq!(c.truncated(1).unwrap().rank(), 1);
    assert!(c.truncated(3).is_err());
    assert!(QWienerSpec::named("unknown").is_none());
}
