mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use rmmgks::linalg::DenseMatrix;
use rmmgks::mm::{compute_weights, LambdaGrid, LambdaRule};
use rmmgks::operators::{DenseOperator, LinearOperator};
use rmmgks::problems::rre;
use rmmgks::regularizers::{assemble, make_identity, make_psi_2d};
use rmmgks::solvers::{mm_gks, rmm_gks, s_rmm_gks, DataBlock, Quality, Seed, SolverConfig};

/// Well-conditioned random square matrix.
fn conditioned(g: &mut TestRng, n: usize) -> DenseMatrix {
    let mut a = rand_matrix(g, n, n);
    a.scale(0.3);
    for i in 0..n {
        a[(i, i)] += 2.0;
    }
    a
}

/// Collects every iterate the solver reports.
fn recorder(store: &mut Vec<Vec<f64>>) -> impl FnMut(&[f64]) -> Quality + '_ {
    move |x: &[f64]| {
        store.push(x.to_vec());
        Quality::default()
    }
}

/// `argmin ‖Ax − d‖² + μ Σ w_j (Ψx)_j²` with `w` taken at `prev`.
fn irls_update(a: &DMatrix<f64>, psi: &DMatrix<f64>, d: &DVector<f64>, prev: &DVector<f64>, mu: f64, eps: f64, q: f64) -> DVector<f64> {
    let u = psi * prev;
    let w = compute_weights(u.as_slice(), eps, q);
    let wd = DMatrix::from_diagonal(&DVector::from_vec(w));
    let lhs = a.transpose() * a + mu * psi.transpose() * wd * psi;
    lhs.lu().solve(&(a.transpose() * d)).unwrap()
}

#[test]
fn noiseless_dense_problem_is_recovered() {
    let mut g = rng(40);
    let n = 10;
    let a = DenseOperator::new(conditioned(&mut g, n));
    let psi = make_psi_2d(2, 5).unwrap();
    let x_true = randn(&mut g, n);
    let d = a.apply(&x_true);
    let cfg = SolverConfig {
        initial_steps: Some(2),
        max_iters: 40,
        tol: 1e-14,
        lambda: LambdaRule::Gcv(LambdaGrid {
            min: 1e-14,
            max: 1e2,
            count: 80,
        }),
        ..Default::default()
    };
    let out = mm_gks(&a, &psi, &d, &cfg, None, &mut rmmgks::solvers::NoMonitor).unwrap();
    let err = rre(&out.x, &x_true);
    assert!(err <= 1e-4, "rre = {err}");
}

#[test]
fn full_space_iterates_follow_dense_irls() {
    let mut g = rng(41);
    let n = 12;
    let a_dense = conditioned(&mut g, n);
    let a = DenseOperator::new(a_dense.clone());
    let psi = make_psi_2d(3, 4).unwrap();
    let d = randn(&mut g, n);
    let (mu, eps, q) = (0.5, 0.05, 1.0);
    let cfg = SolverConfig {
        initial_steps: Some(n),
        max_iters: 20,
        tol: 1e-300,
        epsilon: eps,
        q,
        lambda: LambdaRule::Fixed(mu),
        ..Default::default()
    };
    let mut iterates = Vec::new();
    let out = mm_gks(&a, &psi, &d, &cfg, None, &mut recorder(&mut iterates)).unwrap();
    assert_eq!(iterates.len(), 20);

    let (an, pn) = (to_na(&a_dense), to_na(&assemble(&psi).unwrap()));
    let dn = DVector::from_column_slice(&d);
    // Steps whose solve ran on the full space are pure weight updates.
    let first = out.log.iter().position(|r| r.basis_k == n).unwrap() + 1;
    assert!(first <= 5);
    let mut x = DVector::from_column_slice(&iterates[first - 1]);
    for (k, got) in iterates.iter().enumerate().skip(first) {
        x = irls_update(&an, &pn, &dn, &x, mu, eps, q);
        let gap = rel_diff(got, x.as_slice());
        assert!(gap <= 1e-8, "update {k}: {gap}");
    }
}

#[test]
fn initial_basis_spans_explicit_krylov_space() {
    let mut g = rng(42);
    let n = 16;
    let a_dense = conditioned(&mut g, n);
    let a = DenseOperator::new(a_dense.clone());
    let psi = make_psi_2d(4, 4).unwrap();
    let d = randn(&mut g, n);
    let cfg = SolverConfig {
        k_min: 4,
        k_max: 8,
        outer_cycles: 0,
        ..Default::default()
    };
    let mut iterates = Vec::new();
    let out = rmm_gks(&a, &psi, &d, &cfg, None, &mut recorder(&mut iterates)).unwrap();
    let mu = out.log[0].lambda;
    let x1 = DVector::from_column_slice(&iterates[0]);

    let (an, pn) = (to_na(&a_dense), to_na(&assemble(&psi).unwrap()));
    let u = &pn * &x1;
    let w = DMatrix::from_diagonal(&DVector::from_vec(compute_weights(u.as_slice(), cfg.epsilon, cfg.q)));
    let m = an.transpose() * &an + mu * pn.transpose() * w * &pn;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut v = an.transpose() * DVector::from_column_slice(&d);
    for _ in 0..4 {
        for _ in 0..2 {
            for c in &cols {
                v -= c * c.dot(&v);
            }
        }
        v /= v.norm();
        cols.push(v.clone());
        v = &m * &v;
    }
    let oracle = DenseMatrix::from_columns(n, &cols.iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>()).unwrap();
    assert_eq!(out.basis.width(), 4);
    assert!(subspace_gap(out.basis.v(), &oracle) <= 1e-8);
}

#[test]
fn uncompressed_restart_equals_seeded_mm_gks() {
    let mut g = rng(43);
    let n = 20;
    let a = DenseOperator::new(conditioned(&mut g, n));
    let psi = make_psi_2d(4, 5).unwrap();
    let d = randn(&mut g, n);
    let basis = orth(&rand_matrix(&mut g, n, 3));
    let x = basis.matvec(&randn(&mut g, 3));
    let seed = Seed { basis, x };
    let cfg = SolverConfig {
        k_min: 3,
        k_max: 40,
        outer_cycles: 1,
        max_iters: 20,
        tol: 1e-300,
        ..Default::default()
    };
    let (mut mm, mut rmm) = (Vec::new(), Vec::new());
    mm_gks(&a, &psi, &d, &cfg, Some(&seed), &mut recorder(&mut mm)).unwrap();
    rmm_gks(&a, &psi, &d, &cfg, Some(&seed), &mut recorder(&mut rmm)).unwrap();
    assert_eq!(mm.len(), 20);
    assert_eq!(mm, rmm);
}

#[test]
fn replayed_block_cannot_hurt() {
    let mut g = rng(44);
    let n = 16;
    let a: Arc<dyn LinearOperator> = Arc::new(DenseOperator::new(conditioned(&mut g, n)));
    let psi = make_identity(n);
    let x_true = randn(&mut g, n);
    let d = a.apply(&x_true);
    let cfg = SolverConfig {
        k_min: 3,
        k_max: 8,
        max_iters: 30,
        tol: 1e-10,
        ..Default::default()
    };
    let block = DataBlock {
        operator: a,
        data: d,
    };
    let mut errors = Vec::new();
    s_rmm_gks(
        vec![block.clone(), block],
        &psi,
        &cfg,
        &mut rmmgks::solvers::NoMonitor,
        |b| {
            errors.push(rre(&b.x, &x_true));
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(errors.len(), 2);
    assert!(errors[1] <= errors[0] + 1e-10, "{errors:?}");
}
