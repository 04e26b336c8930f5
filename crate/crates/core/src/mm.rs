//! Majorization machinery for the smoothed ℓ2-ℓq functional
//!
//! ```text
//! J(x) = ‖A x − d‖² + λ Σ_j φ((Ψx)_j),   φ(t) = (t² + ε²)^{q/2}
//! ```
//!
//! With weights `w = ((Ψv)² + ε²)^{q/2−1}` and `P = diag(w)^{1/2}`, the
//! quadratic
//!
//! ```text
//! Q(x, v) = ‖A x − d‖² + λ·(q/2)·‖P Ψ x‖² + c(v)
//! ```
//!
//! is a tangent majorant of `J` at `v`. The solvers work with the reweighted
//! least-squares parameter `μ = λ·q/2` directly (the weight on `‖PΨx‖²`), so
//! the functional they descend has `λ = 2μ/q`; see [`objective_lambda`].

use serde::{Deserialize, Serialize};

use crate::linalg::{qr_factor_lenient, DenseMatrix};
use crate::operators::LinearOperator;

/// Smoothing parameter, exponent and the current weights.
#[derive(Debug, Clone)]
pub struct WeightState {
    pub epsilon: f64,
    pub q: f64,
    pub weights: Vec<f64>,
}

impl WeightState {
    /// Weights for the regularizer values `u = Ψx`.
    pub fn at(u: &[f64], epsilon: f64, q: f64) -> Self {
        Self {
            epsilon,
            q,
            weights: compute_weights(u, epsilon, q),
        }
    }

    /// Diagonal of `P`.
    pub fn p_diagonal(&self) -> Vec<f64> {
        weighting_matrix(&self.weights)
    }
}

/// `w = (u² + ε²)^{q/2 − 1}`, elementwise.
pub fn compute_weights(u: &[f64], epsilon: f64, q: f64) -> Vec<f64> {
    debug_assert!(epsilon > 0.0 && q > 0.0 && q <= 2.0);
    let e2 = epsilon * epsilon;
    let expo = q / 2.0 - 1.0;
    if expo == 0.0 {
        return vec![1.0; u.len()];
    }
    u.iter().map(|&t| (t * t + e2).powf(expo)).collect()
}

/// Diagonal of `P = diag(w)^{1/2}`.
pub fn weighting_matrix(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| v.sqrt()).collect()
}

/// Scales `v` by the diagonal `p` in place.
pub fn apply_weighting(p: &[f64], v: &mut [f64]) {
    v.iter_mut().zip(p).for_each(|(a, b)| *a *= b);
}

/// `λ` of the functional descended when the weighted least-squares problems
/// use `μ` as the weight on `‖PΨx‖²`.
pub fn objective_lambda(mu: f64, q: f64) -> f64 {
    2.0 * mu / q
}

/// `Σ_j (t_j² + ε²)^{q/2}`
pub fn smoothed_penalty(u: &[f64], epsilon: f64, q: f64) -> f64 {
    let e2 = epsilon * epsilon;
    u.iter().map(|&t| (t * t + e2).powf(q / 2.0)).sum()
}

/// Components of `J(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub misfit: f64,
    pub regularizer: f64,
    pub lambda: f64,
    pub total: f64,
}

impl ObjectiveValue {
    pub fn new(misfit: f64, regularizer: f64, lambda: f64) -> Self {
        Self {
            misfit,
            regularizer,
            lambda,
            total: misfit + lambda * regularizer,
        }
    }
}

fn misfit(a: &dyn LinearOperator, d: &[f64], x: &[f64]) -> f64 {
    let ax = a.apply(x);
    ax.iter().zip(d).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[allow(clippy::too_many_arguments)]
pub fn eval_objective(
    a: &dyn LinearOperator,
    psi: &dyn LinearOperator,
    d: &[f64],
    x: &[f64],
    lambda: f64,
    epsilon: f64,
    q: f64,
) -> ObjectiveValue {
    let u = psi.apply(x);
    ObjectiveValue::new(misfit(a, d, x), smoothed_penalty(&u, epsilon, q), lambda)
}

/// `Q(x, v)` with the constant chosen so that `Q(v, v) = J(v)`.
#[allow(clippy::too_many_arguments)]
pub fn eval_majorant(
    a: &dyn LinearOperator,
    psi: &dyn LinearOperator,
    d: &[f64],
    x: &[f64],
    v: &[f64],
    lambda: f64,
    epsilon: f64,
    q: f64,
) -> f64 {
    let uv = psi.apply(v);
    let w = compute_weights(&uv, epsilon, q);
    let weighted_sq = |u: &[f64]| -> f64 { u.iter().zip(&w).map(|(t, wi)| wi * t * t).sum() };
    let half_q = q / 2.0;
    let c = lambda * (smoothed_penalty(&uv, epsilon, q) - half_q * weighted_sq(&uv));
    let ux = psi.apply(x);
    misfit(a, d, x) + lambda * half_q * weighted_sq(&ux) + c
}

/// Logarithmic grid for the regularization parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 1e-12,
            max: 1e2,
            count: 60,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.log10(), self.max.log10());
        (0..self.count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (self.count - 1) as f64))
            .collect()
    }
}

/// How the regularization parameter of each projected problem is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Gcv(LambdaGrid),
    Fixed(f64),
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Gcv(LambdaGrid::default())
    }
}

/// Outcome of a parameter search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    /// Set when the GCV function was flat or undefined on the whole grid.
    pub degenerate: bool,
}

/// Largest condition number of `R_A` for which [`GcvEvaluator`] uses the
/// generalized eigen-decomposition route.
const GCV_COND_LIMIT: f64 = 1e8;

/// Projected GCV function
///
/// ```text
/// Θ(λ) = k‖R_A z_λ − rhs‖² / trace(I − R_A (R_AᵀR_A + λR_ΨᵀR_Ψ)⁻¹ R_Aᵀ)²
/// ```
///
/// When `R_A` is well conditioned, the SVD `R_Ψ R_A⁻¹ = U Σ Vᵀ` diagonalizes
/// the pencil and `I − R_A M⁻¹ R_Aᵀ = V diag(λσ²/(1 + λσ²)) Vᵀ`, which keeps
/// both numerator and denominator accurate as `λ → 0`. Otherwise each grid
/// point is evaluated through a QR factorization of `[R_A; √λ R_Ψ]`.
pub struct GcvEvaluator<'a> {
    r_a: &'a DenseMatrix,
    r_psi: &'a DenseMatrix,
    rhs: &'a [f64],
    spectral: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> GcvEvaluator<'a> {
    pub fn new(r_a: &'a DenseMatrix, r_psi: &'a DenseMatrix, rhs: &'a [f64]) -> Self {
        Self {
            r_a,
            r_psi,
            rhs,
            spectral: spectral_form(r_a, r_psi, rhs),
        }
    }

    /// `Θ(λ)`, or `+∞` where the trace term vanishes.
    pub fn eval(&self, lambda: f64) -> f64 {
        let k = self.r_a.cols() as f64;
        let (resid, trace) = match &self.spectral {
            Some((sig2, coef)) => {
                let mut resid = 0.0;
                let mut trace = 0.0;
                for (s2, c) in sig2.iter().zip(coef) {
                    let f = lambda * s2 / (1.0 + lambda * s2);
                    resid += f * f * c * c;
                    trace += f;
                }
                (resid, trace)
            }
            None => self.stacked_terms(lambda),
        };
        if !(trace > 1e-14 * k) {
            return f64::INFINITY;
        }
        k * resid / (trace * trace)
    }

    fn stacked_terms(&self, lambda: f64) -> (f64, f64) {
        let k = self.r_a.cols();
        let mut scaled = self.r_psi.clone();
        scaled.scale(lambda.sqrt());
        let (f, dependent) = qr_factor_lenient(&self.r_a.vstack(&scaled));
        let q1 = f.q.leading(k, k);
        let coeff = q1.tr_matvec(self.rhs);
        let fitted = q1.matvec(&coeff);
        let resid = fitted
            .iter()
            .zip(self.rhs)
            .map(|(p, b)| (p - b) * (p - b))
            .sum();
        // ‖Q₁‖² + ‖Q₂‖² = rank, so the trace is (k − rank) + ‖Q₂‖².
        let q2_sq: f64 = (0..k)
            .map(|j| f.q.col(j)[k..].iter().map(|v| v * v).sum::<f64>())
            .sum();
        (resid, dependent.len() as f64 + q2_sq)
    }
}

fn spectral_form(
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    rhs: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = r_a.cols();
    if k == 0 {
        return None;
    }
    let s = crate::linalg::svd(r_a).s;
    let (smax, smin) = (s[0], s[k - 1]);
    if !(smin > 0.0) || smax / smin > GCV_COND_LIMIT {
        return None;
    }
    // G = R_Ψ R_A⁻¹, built row by row from R_Aᵀ gᵢ = (R_Ψ row i).
    let r_at = r_a.transpose();
    let mut g = DenseMatrix::zeros(r_psi.rows(), k);
    for i in 0..r_psi.rows() {
        let row: Vec<f64> = (0..k).map(|j| r_psi[(i, j)]).collect();
        let sol = solve_lower(&r_at, &row)?;
        for j in 0..k {
            g[(i, j)] = sol[j];
        }
    }
    let gs = crate::linalg::svd(&g);
    let sig2 = gs.s.iter().map(|v| v * v).collect();
    let coef = gs.w.tr_matvec(rhs);
    Some((sig2, coef))
}

fn solve_lower(l: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = l.cols();
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        let d = l[(i, i)];
        if d == 0.0 {
            return None;
        }
        x[i] = s / d;
    }
    Some(x)
}

/// Single evaluation of the projected GCV function.
pub fn gcv_function(r_a: &DenseMatrix, r_psi: &DenseMatrix, rhs: &[f64], lambda: f64) -> f64 {
    GcvEvaluator::new(r_a, r_psi, rhs).eval(lambda)
}

/// Grid minimizer of the projected GCV function; ties go to the smallest `λ`.
pub fn select_lambda(
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    rhs: &[f64],
    grid: &LambdaGrid,
) -> LambdaChoice {
    let values = grid.values();
    let gcv = GcvEvaluator::new(r_a, r_psi, rhs);
    let thetas: Vec<f64> = values.iter().map(|&l| gcv.eval(l)).collect();
    let finite: Vec<f64> = thetas.iter().copied().filter(|t| t.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if finite.is_empty() || hi - lo <= 64.0 * f64::EPSILON * hi.abs() {
        log::debug!("degenerate GCV function, using lambda = {}", values[0]);
        return LambdaChoice {
            lambda: values[0],
            degenerate: true,
        };
    }
    let mut best = None;
    for (i, &t) in thetas.iter().enumerate() {
        if t.is_finite() && best.is_none_or(|b: usize| t < thetas[b]) {
            best = Some(i);
        }
    }
    LambdaChoice {
        lambda: values[best.expect("at least one finite value")],
        degenerate: false,
    }
}

/// Applies a [`LambdaRule`] to the projected factors.
pub fn choose_lambda(
    rule: &LambdaRule,
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    rhs: &[f64],
) -> LambdaChoice {
    match rule {
        LambdaRule::Fixed(l) => LambdaChoice {
            lambda: *l,
            degenerate: false,
        },
        LambdaRule::Gcv(grid) => select_lambda(r_a, r_psi, rhs, grid),
    }
}
