#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rmmgks::linalg::DenseMatrix;

pub type TestRng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

pub fn randn(rng: &mut TestRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn rand_matrix(rng: &mut TestRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_col_major(rows, cols, randn(rng, rows * cols)).unwrap()
}

/// Random upper triangular matrix with a diagonal bounded away from zero.
pub fn rand_upper(rng: &mut TestRng, k: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(k, k);
    for j in 0..k {
        for i in 0..j {
            m[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
        m[(j, j)] = 1.0 + rng.random::<f64>();
    }
    m
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec()).unwrap()
}

/// Largest sine of the principal angles between the column spaces of two
/// matrices with orthonormal columns.
pub fn subspace_gap(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let a = to_na(a);
    let b = to_na(b);
    let proj = &b - &a * (a.transpose() * &b);
    proj.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Orthonormal basis of the columns of `m` via nalgebra QR.
pub fn orth(m: &DenseMatrix) -> DenseMatrix {
    from_na(&to_na(m).qr().q())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(f64::MIN_POSITIVE)
}

/// Outcome of compressing one random projected instance.
pub struct ContractReport {
    pub width: usize,
    pub orthonormality: f64,
    /// `‖z − CCᵀz‖ / ‖z‖` for the projected solution `z`.
    pub containment: f64,
    /// Relative gap between `z` and the re-solve over `range(C)`.
    pub resolve_gap: f64,
    pub contained: bool,
}

pub struct ProjectedInstance {
    pub r_a: DenseMatrix,
    pub r_psi: DenseMatrix,
    pub rhs: Vec<f64>,
    pub lambda: f64,
}

pub fn random_projected(g: &mut TestRng, k: usize) -> ProjectedInstance {
    let r_a = rand_upper(g, k);
    let r_psi = rand_upper(g, k);
    let rhs = randn(g, k);
    let lambda = 10f64.powf(-3.0 + 4.0 * g.random::<f64>());
    ProjectedInstance { r_a, r_psi, rhs, lambda }
}

/// Runs `χ` plus reinjection and checks the output against the contract.
pub fn check_contract(
    strategy: &rmmgks::compression::CompressionStrategy,
    inst: &ProjectedInstance,
    k_min: usize,
) -> ContractReport {
    use rmmgks::compression::{chi, reinjection_coefficients, ProjectedFactors};
    use rmmgks::linalg::{norm, qr_factor, solve_regularized_ls};

    let f = ProjectedFactors {
        r_a: &inst.r_a,
        r_psi: &inst.r_psi,
        rhs: &inst.rhs,
        lambda: inst.lambda,
    };
    let z = solve_regularized_ls(&inst.r_a, &inst.r_psi, &inst.rhs, inst.lambda).unwrap();
    let mixing = chi(strategy, &f, k_min).unwrap();
    let (c, contained) = reinjection_coefficients(&mixing.w, &z);
    let coords = c.tr_matvec(&z);
    let back = c.matvec(&coords);
    let containment = rel_diff(&back, &z);

    // Re-solve the projected problem restricted to range(C).
    let qa = qr_factor(&inst.r_a.matmul(&c)).unwrap();
    let qp = qr_factor(&inst.r_psi.matmul(&c)).unwrap();
    let y = solve_regularized_ls(&qa.r, &qp.r, &qa.q.tr_matvec(&inst.rhs), inst.lambda).unwrap();
    let resolved = c.matvec(&y);
    let resolve_gap = rel_diff(&resolved, &z);
    assert!(norm(&z) > 0.0);
    ContractReport {
        width: c.cols(),
        orthonormality: c.orthonormality_error(),
        containment,
        resolve_gap,
        contained,
    }
}
