//! Basis compression strategies.
//!
//! Each strategy maps the projected factors of a `k_max`-wide basis to a
//! mixing matrix `W` (`k_max × ≤ k_min−1`). The compressed basis is `V W`
//! plus the normalized part of the current iterate that `V W` misses.
//!
//! * tSVD: leading right singular vectors of `H̄ = [R_A; √λ R_Ψ]`.
//! * RBD: greedy reduced basis of the columns of `H̄ᵀ`.
//! * SOC: identity columns at the largest entries of the projected
//!   Tikhonov solution.
//! * SEC: as SOC, but the projected solution comes from an ℓ1-penalized
//!   problem solved by reweighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cgs2, norm, scale_in_place, solve_regularized_ls, truncated_svd, DenseMatrix,
};
use crate::mm::compute_weights;

/// Threshold below which a re-injected iterate counts as already contained.
pub const CONTAINED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompressionKind {
    Tsvd,
    Rbd,
    Soc,
    Sec,
}

impl CompressionKind {
    pub const ALL: [CompressionKind; 4] = [Self::Tsvd, Self::Rbd, Self::Soc, Self::Sec];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Tsvd => "tsvd",
            Self::Rbd => "rbd",
            Self::Soc => "soc",
            Self::Sec => "sec",
        }
    }
}

impl std::str::FromStr for CompressionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsvd" => Ok(Self::Tsvd),
            "rbd" => Ok(Self::Rbd),
            "soc" => Ok(Self::Soc),
            "sec" => Ok(Self::Sec),
            other => Err(Error::Config(format!("unknown compression '{other}'"))),
        }
    }
}

/// Strategy-specific parameters. `None` dimensions default to `k_min − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionParams {
    pub rbd_tol: f64,
    pub rbd_max_dim: Option<usize>,
    pub soc_tol: f64,
    pub soc_max_dim: Option<usize>,
    pub sec_inner_iters: usize,
    pub sec_epsilon: f64,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            rbd_tol: 1e-5,
            rbd_max_dim: None,
            soc_tol: 1.0,
            soc_max_dim: None,
            sec_inner_iters: 10,
            sec_epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionStrategy {
    pub kind: CompressionKind,
    pub params: CompressionParams,
}

impl CompressionStrategy {
    pub fn new(kind: CompressionKind) -> Self {
        Self {
            kind,
            params: CompressionParams::default(),
        }
    }
}

/// Inputs of `χ`: projected factors, projected data `Q_Aᵀd`, current `λ`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedFactors<'a> {
    pub r_a: &'a DenseMatrix,
    pub r_psi: &'a DenseMatrix,
    pub rhs: &'a [f64],
    pub lambda: f64,
}

impl ProjectedFactors<'_> {
    /// `H̄ = [R_A; √λ R_Ψ]`
    pub fn stacked(&self) -> DenseMatrix {
        let mut s = self.r_psi.clone();
        s.scale(self.lambda.sqrt());
        self.r_a.vstack(&s)
    }

    pub fn width(&self) -> usize {
        self.r_a.cols()
    }
}

/// Things a strategy had to work around, reported to the caller for logging.
#[derive(Debug, Clone, PartialEq)]
pub enum CompressionNote {
    /// Fewer nonzero singular values than requested columns.
    RankShortfall { effective: usize },
    /// `|I ∩ J|` was too small and the index set was filled by magnitude.
    InsufficientIndices { found: usize },
}

/// Mixing matrix and any notes produced while building it.
#[derive(Debug, Clone)]
pub struct Mixing {
    pub w: DenseMatrix,
    pub notes: Vec<CompressionNote>,
}

/// Builds `W = χ(R_A, R_Ψ, Q_Aᵀd, λ)` for the requested `k_min`.
pub fn chi(strategy: &CompressionStrategy, f: &ProjectedFactors, k_min: usize) -> Result<Mixing> {
    let k_max = f.width();
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidArgument(format!(
            "k_min = {k_min} for a basis of width {k_max}"
        )));
    }
    let keep = k_min - 1;
    let p = &strategy.params;
    match strategy.kind {
        CompressionKind::Tsvd => Ok(chi_tsvd(f, keep)),
        CompressionKind::Rbd => {
            let d = p.rbd_max_dim.unwrap_or(keep).min(k_max);
            Ok(Mixing {
                w: chi_rbd(f, p.rbd_tol, d),
                notes: Vec::new(),
            })
        }
        CompressionKind::Soc => {
            let d = p.soc_max_dim.unwrap_or(keep).min(k_max);
            chi_soc(f, p.soc_tol, d, keep)
        }
        CompressionKind::Sec => {
            let d = p.soc_max_dim.unwrap_or(keep).min(k_max);
            chi_sec(f, p.sec_inner_iters, p.sec_epsilon, p.soc_tol, d, keep)
        }
    }
}

/// Right singular vectors of `H̄` for the `keep` largest singular values.
pub fn chi_tsvd(f: &ProjectedFactors, keep: usize) -> Mixing {
    let t = truncated_svd(&f.stacked(), keep);
    let mut notes = Vec::new();
    if t.rank() < keep {
        notes.push(CompressionNote::RankShortfall {
            effective: t.rank(),
        });
    }
    Mixing { w: t.w, notes }
}

/// Greedy reduced-basis run on the columns of `H̄ᵀ`, at most `max_dim` steps.
/// Returns the basis and the error sequence `ε_j`, the largest residual
/// column norm after step `j`.
pub fn rbd_greedy(ht: &DenseMatrix, max_dim: usize, tol: f64) -> (DenseMatrix, Vec<f64>) {
    let rows = ht.rows();
    let mut w = DenseMatrix::zeros(rows, 0);
    let mut residual = ht.clone();
    let mut errors = Vec::new();
    for _ in 0..max_dim.min(rows) {
        let (pivot, best) = (0..residual.cols())
            .map(|k| (k, norm(residual.col(k))))
            .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if !(best > 0.0) {
            break;
        }
        let mut v = residual.col(pivot).to_vec();
        cgs2(&w, &mut v);
        let nv = norm(&v);
        if !(nv > 0.0) {
            break;
        }
        scale_in_place(1.0 / nv, &mut v);
        w.push_column(&v).expect("length");
        for k in 0..residual.cols() {
            let mut c = ht.col(k).to_vec();
            cgs2(&w, &mut c);
            residual.col_mut(k).copy_from_slice(&c);
        }
        let eps = (0..residual.cols())
            .map(|k| norm(residual.col(k)))
            .fold(0.0, f64::max);
        errors.push(eps);
        if eps < tol {
            break;
        }
    }
    (w, errors)
}

/// RBD width rule: `d` when `ε_d ≥ tol`, otherwise the largest `j` with
/// `ε_j ≥ tol` (at least one column).
pub fn chi_rbd(f: &ProjectedFactors, tol: f64, max_dim: usize) -> DenseMatrix {
    let ht = f.stacked().transpose();
    let (w, errors) = rbd_greedy(&ht, max_dim.max(1), tol);
    let width = if errors.len() == max_dim && errors.last().is_some_and(|e| *e >= tol) {
        max_dim
    } else {
        errors.iter().rposition(|e| *e >= tol).map_or(1, |j| j + 1)
    };
    w.leading(w.rows(), width.min(w.cols()))
}

/// Index set `K`: entries of `I = {|z_i| > tol}` that are also among the
/// `d` largest magnitudes, in decreasing magnitude (ties to lower index),
/// truncated to `keep`. Falls back to the next largest magnitudes when too
/// few qualify.
pub fn solution_indices(z: &[f64], tol: f64, d: usize, keep: usize) -> (Vec<usize>, Option<CompressionNote>) {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    let mut k: Vec<usize> = order
        .iter()
        .take(d)
        .copied()
        .filter(|&i| z[i].abs() > tol)
        .take(keep)
        .collect();
    let found = k.len();
    let mut note = None;
    if found < keep {
        note = Some(CompressionNote::InsufficientIndices { found });
        for &i in &order {
            if k.len() == keep {
                break;
            }
            if !k.contains(&i) {
                k.push(i);
            }
        }
    }
    (k, note)
}

fn identity_columns(n: usize, idx: &[usize]) -> DenseMatrix {
    let mut w = DenseMatrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        w[(i, c)] = 1.0;
    }
    w
}

pub fn chi_soc(f: &ProjectedFactors, tol: f64, d: usize, keep: usize) -> Result<Mixing> {
    let z = solve_regularized_ls(f.r_a, f.r_psi, f.rhs, f.lambda)?;
    let (idx, note) = solution_indices(&z, tol, d, keep);
    Ok(Mixing {
        w: identity_columns(z.len(), &idx),
        notes: note.into_iter().collect(),
    })
}

/// Reweighted solution of `min ‖R_A z − rhs‖² + λ‖R_Ψ z‖₁` (smoothed by
/// `ε`), started from the projected Tikhonov solution. Returns the iterate
/// and the smoothed objective before and after every sweep.
pub fn sparse_projected_solve(
    f: &ProjectedFactors,
    sweeps: usize,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let objective = |z: &[f64]| -> f64 {
        let r = f.r_a.matvec(z);
        let misfit: f64 = r.iter().zip(f.rhs).map(|(a, b)| (a - b) * (a - b)).sum();
        let u = f.r_psi.matvec(z);
        misfit + f.lambda * u.iter().map(|t| (t * t + epsilon * epsilon).sqrt()).sum::<f64>()
    };
    let mut z = solve_regularized_ls(f.r_a, f.r_psi, f.rhs, f.lambda)?;
    let mut history = vec![objective(&z)];
    for _ in 0..sweeps {
        let u = f.r_psi.matvec(&z);
        let w = compute_weights(&u, epsilon, 1.0);
        let mut weighted = f.r_psi.clone();
        for j in 0..weighted.cols() {
            weighted
                .col_mut(j)
                .iter_mut()
                .zip(&w)
                .for_each(|(v, wi)| *v *= wi.sqrt());
        }
        // Majorant weight q/2 = 1/2 keeps every sweep a descent step.
        z = solve_regularized_ls(f.r_a, &weighted, f.rhs, 0.5 * f.lambda)?;
        history.push(objective(&z));
    }
    Ok((z, history))
}

pub fn chi_sec(
    f: &ProjectedFactors,
    sweeps: usize,
    epsilon: f64,
    tol: f64,
    d: usize,
    keep: usize,
) -> Result<Mixing> {
    let (z, _) = sparse_projected_solve(f, sweeps, epsilon)?;
    let (idx, note) = solution_indices(&z, tol, d, keep);
    Ok(Mixing {
        w: identity_columns(z.len(), &idx),
        notes: note.into_iter().collect(),
    })
}

/// Result of appending the current iterate to a compressed basis.
#[derive(Debug, Clone)]
pub struct Reinjected {
    pub basis: DenseMatrix,
    /// True when the iterate was already in `range(Ṽ)` and nothing was added.
    pub already_contained: bool,
}

/// Appends the normalized component of `x` orthogonal to `range(Ṽ)`.
pub fn reinject_solution(v_tilde: &DenseMatrix, x: &[f64]) -> Result<Reinjected> {
    if x.len() != v_tilde.rows() {
        return Err(Error::DimensionMismatch("iterate length".into()));
    }
    let xn = norm(x);
    if !(xn > 0.0) {
        return Err(Error::InvalidArgument("zero iterate".into()));
    }
    let mut r = x.to_vec();
    cgs2(v_tilde, &mut r);
    let rn = norm(&r);
    let mut basis = v_tilde.clone();
    if rn <= CONTAINED_TOL * xn {
        log::debug!("iterate already contained in the compressed space");
        return Ok(Reinjected {
            basis,
            already_contained: true,
        });
    }
    scale_in_place(1.0 / rn, &mut r);
    basis.push_column(&r)?;
    Ok(Reinjected {
        basis,
        already_contained: false,
    })
}

/// Coefficient-space form of [`reinject_solution`] for `Ṽ = V W` and
/// `x = V z` with `V` orthonormal: returns `C` such that the new basis is
/// `V C`, and whether the iterate was already contained.
pub fn reinjection_coefficients(w: &DenseMatrix, z: &[f64]) -> (DenseMatrix, bool) {
    let mut c = w.clone();
    let zn = norm(z);
    let mut r = z.to_vec();
    cgs2(w, &mut r);
    let rn = norm(&r);
    if zn == 0.0 || rn <= CONTAINED_TOL * zn {
        return (c, true);
    }
    scale_in_place(1.0 / rn, &mut r);
    c.push_column(&r).expect("length");
    (c, false)
}
