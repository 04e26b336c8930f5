mod common;

use common::*;
use nalgebra::DMatrix;
use rmmgks::linalg::{
    golub_kahan, qr_append_column, qr_factor, solve_regularized_ls, truncated_svd, DenseMatrix,
};
use rmmgks::operators::DenseOperator;

/// Flips signs so that diag(R) is nonnegative.
fn normalized(q: &DenseMatrix, r: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (mut q, mut r) = (q.clone(), r.clone());
    for j in 0..r.rows() {
        if r[(j, j)] < 0.0 {
            q.col_mut(j).iter_mut().for_each(|v| *v = -*v);
            for c in 0..r.cols() {
                r[(j, c)] = -r[(j, c)];
            }
        }
    }
    (q, r)
}

#[test]
fn qr_reconstructs_random_matrix() {
    let mut g = rng(1);
    let m = rand_matrix(&mut g, 6, 4);
    let f = qr_factor(&m).unwrap();
    assert!(f.q.orthonormality_error() <= 1e-10 * 4.0);
    assert!(f.reconstruct().sub(&m).frobenius_norm() <= 1e-12 * m.frobenius_norm());
    for j in 0..4 {
        for i in j + 1..4 {
            assert_eq!(f.r[(i, j)], 0.0);
        }
    }
    let oracle = to_na(&m).qr();
    let (q, r) = normalized(&f.q, &f.r);
    let (qo, ro) = normalized(&from_na(&oracle.q()), &from_na(&oracle.r()));
    assert!(max_abs_diff(q.as_slice(), qo.as_slice()) < 1e-10);
    assert!(max_abs_diff(r.as_slice(), ro.as_slice()) < 1e-10);
}

#[test]
fn appended_column_matches_refactorization() {
    let mut g = rng(2);
    let full = rand_matrix(&mut g, 8, 4);
    let f3 = qr_factor(&full.leading(8, 3)).unwrap();
    let f4 = qr_append_column(&f3, full.col(3)).unwrap();
    let oracle = to_na(&full).qr();
    let (q, r) = normalized(&f4.q, &f4.r);
    let (qo, ro) = normalized(&from_na(&oracle.q()), &from_na(&oracle.r()));
    assert!(max_abs_diff(q.as_slice(), qo.as_slice()) < 1e-10);
    assert!(max_abs_diff(r.as_slice(), ro.as_slice()) < 1e-10);
}

#[test]
fn golub_kahan_identity_and_orthonormality() {
    let mut g = rng(3);
    let a = rand_matrix(&mut g, 10, 7);
    let d = randn(&mut g, 10);
    let op = DenseOperator::new(a.clone());
    let gk = golub_kahan(&op, &d, 4).unwrap();
    assert_eq!((gk.v.cols(), gk.u.cols(), gk.b.rows(), gk.b.cols()), (4, 5, 5, 4));
    let lhs = to_na(&a) * to_na(&gk.v);
    let rhs = to_na(&gk.u) * to_na(&gk.b);
    assert!((lhs - rhs).norm() < 1e-10);
    assert!(gk.v.orthonormality_error() < 1e-12);
    assert!(gk.u.orthonormality_error() < 1e-12);
    // first U column is the normalized start vector
    let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u0: Vec<f64> = d.iter().map(|v| v / dn).collect();
    assert!(max_abs_diff(gk.u.col(0), &u0) < 1e-14);
}

#[test]
fn truncated_svd_meets_eckart_young() {
    let mut g = rng(4);
    let m = rand_matrix(&mut g, 10, 5);
    let t = truncated_svd(&m, 3);
    let oracle = to_na(&m).svd(false, false).singular_values;
    let mut sv: Vec<f64> = oracle.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let mut approx = DMatrix::zeros(10, 5);
    for j in 0..3 {
        approx += to_na(&t.u).column(j) * t.s[j] * to_na(&t.w).column(j).transpose();
        assert!((t.s[j] - sv[j]).abs() < 1e-10);
    }
    let err = (to_na(&m) - approx).norm();
    assert!((err - (sv[3] * sv[3] + sv[4] * sv[4]).sqrt()).abs() < 1e-10);
}

#[test]
fn regularized_solve_matches_normal_equations() {
    let mut g = rng(5);
    let r_a = rand_upper(&mut g, 5);
    let r_psi = rand_upper(&mut g, 5);
    let rhs = randn(&mut g, 5);
    let lambda = 0.37;
    let z = solve_regularized_ls(&r_a, &r_psi, &rhs, lambda).unwrap();
    let (ra, rp) = (to_na(&r_a), to_na(&r_psi));
    let lhs = ra.transpose() * &ra + lambda * rp.transpose() * &rp;
    let b = ra.transpose() * nalgebra::DVector::from_column_slice(&rhs);
    let oracle = lhs.lu().solve(&b).unwrap();
    assert!(max_abs_diff(&z, oracle.as_slice()) < 1e-10);
}
