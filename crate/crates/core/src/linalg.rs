//! Dense kernels for the small projected problems.
//!
//! Everything here works on column-major [`DenseMatrix`] values whose size is
//! bounded by the basis width, plus [`golub_kahan`] which touches the large
//! operator only through matrix-vector products. Orthogonalization is always
//! classical Gram-Schmidt with a second full pass (CGS2), and QR factors keep
//! a nonnegative diagonal in `R` so that `Q` and `R` are unique.

use crate::error::{Error, Result};
use crate::operators::LinearOperator;

/// Relative tolerance used to declare a column numerically dependent.
pub const RANK_TOL: f64 = 1e-12;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from column-major entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row-major entries, the natural layout for literals.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = data[i * cols + j];
            }
        }
        Ok(m)
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::zeros(rows, 0);
        for c in columns {
            m.push_column(c)?;
        }
        Ok(m)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn push_column(&mut self, c: &[f64]) -> Result<()> {
        if c.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} for {} rows",
                c.len(),
                self.rows
            )));
        }
        self.data.extend_from_slice(c);
        self.cols += 1;
        Ok(())
    }

    /// Keeps the first `cols` columns.
    pub fn truncate_cols(&mut self, cols: usize) {
        if cols < self.cols {
            self.data.truncate(cols * self.rows);
            self.cols = cols;
        }
    }

    /// Replaces `self` by `self · c` without a second copy of the matrix.
    /// Requires `c.cols() ≤ self.cols()`; one row buffer is used per row.
    pub fn right_multiply_in_place(&mut self, c: &DenseMatrix) -> Result<()> {
        if c.rows() != self.cols || c.cols() > self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{} in place",
                self.rows,
                self.cols,
                c.rows(),
                c.cols()
            )));
        }
        let (m, k, p) = (self.rows, self.cols, c.cols());
        let mut row = vec![0.0; k];
        for i in 0..m {
            for (j, r) in row.iter_mut().enumerate() {
                *r = self.data[j * m + i];
            }
            for j in 0..p {
                self.data[j * m + i] = dot(&row, c.col(j));
            }
        }
        self.truncate_cols(p);
        Ok(())
    }

    /// Leading `r x c` block.
    pub fn leading(&self, r: usize, c: usize) -> Self {
        let mut m = Self::zeros(r, c);
        for j in 0..c {
            m.col_mut(j).copy_from_slice(&self.col(j)[..r]);
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `M v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                axpy(vj, self.col(j), &mut out);
            }
        }
        out
    }

    /// `Mᵀ v`
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let c = self.matvec(other.col(j));
            out.col_mut(j).copy_from_slice(&c);
        }
        out
    }

    /// `Mᵀ N`
    pub fn tr_matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "tr_matmul dimension mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for j in 0..other.cols {
            for i in 0..self.cols {
                out[(i, j)] = dot(self.col(i), other.col(j));
            }
        }
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vstack(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.cols, "vstack column mismatch");
        let rows = self.rows + other.rows;
        let mut out = Self::zeros(rows, self.cols);
        for j in 0..self.cols {
            let c = out.col_mut(j);
            c[..self.rows].copy_from_slice(self.col(j));
            c[self.rows..].copy_from_slice(other.col(j));
        }
        out
    }

    /// Selects the given columns, in order.
    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        let mut out = Self::zeros(self.rows, idx.len());
        for (k, &j) in idx.iter().enumerate() {
            out.col_mut(k).copy_from_slice(self.col(j));
        }
        out
    }

    /// `‖MᵀM − I‖_F`
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.tr_matmul(self);
        g.sub(&Self::identity(self.cols)).frobenius_norm()
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn scale_in_place(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Two passes of classical Gram-Schmidt of `v` against the columns of `q`.
/// Returns the accumulated coefficients `qᵀv_original`; `v` is left holding
/// the orthogonal remainder.
pub fn cgs2(q: &DenseMatrix, v: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; q.cols()];
    for _ in 0..2 {
        let c = q.tr_matvec(v);
        for (j, cj) in c.iter().enumerate() {
            axpy(-cj, q.col(j), v);
            coeffs[j] += cj;
        }
    }
    coeffs
}

/// Thin QR factors `M = Q R` with `R` upper triangular and `diag(R) ≥ 0`.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    frob_sq: f64,
}

impl QrFactors {
    /// Empty factorization for vectors of length `rows`.
    pub fn empty(rows: usize) -> Self {
        Self {
            q: DenseMatrix::zeros(rows, 0),
            r: DenseMatrix::zeros(0, 0),
            frob_sq: 0.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.q.rows()
    }

    pub fn width(&self) -> usize {
        self.q.cols()
    }

    /// Appends a column, failing when it is dependent on the current ones.
    pub fn push_column(&mut self, m_new: &[f64]) -> Result<()> {
        let column = self.width();
        match self.push_inner(m_new, false)? {
            true => Ok(()),
            false => Err(Error::RankDeficient { column }),
        }
    }

    /// Appends a column; a dependent column gets a zero `Q` column and a zero
    /// diagonal entry instead of an error. Returns `false` in that case.
    pub fn push_column_lenient(&mut self, m_new: &[f64]) -> Result<bool> {
        self.push_inner(m_new, true)
    }

    fn push_inner(&mut self, m_new: &[f64], lenient: bool) -> Result<bool> {
        if m_new.len() != self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "column of length {} for {} rows",
                m_new.len(),
                self.rows()
            )));
        }
        let k = self.width();
        let mut v = m_new.to_vec();
        let coeffs = cgs2(&self.q, &mut v);
        let frob_sq = self.frob_sq + dot(m_new, m_new);
        let rho = norm(&v);
        let independent = rho > RANK_TOL * frob_sq.sqrt() && rho > 0.0;
        if !independent && !lenient {
            return Err(Error::RankDeficient { column: k });
        }
        if independent {
            scale_in_place(1.0 / rho, &mut v);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.q.push_column(&v)?;
        let mut r = DenseMatrix::zeros(k + 1, k + 1);
        for j in 0..k {
            r.col_mut(j)[..k].copy_from_slice(self.r.col(j));
        }
        {
            let last = r.col_mut(k);
            last[..k].copy_from_slice(&coeffs);
            last[k] = if independent { rho } else { 0.0 };
        }
        self.r = r;
        self.frob_sq = frob_sq;
        Ok(independent)
    }

    /// Reassembles `Q R`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.q.matmul(&self.r)
    }
}

/// Thin QR factorization of a full-column-rank matrix.
pub fn qr_factor(m: &DenseMatrix) -> Result<QrFactors> {
    let mut f = QrFactors::empty(m.rows());
    // Dependence is judged against the whole matrix, not a running prefix.
    f.frob_sq = 0.0;
    let total = m.frobenius_norm();
    for j in 0..m.cols() {
        let mut v = m.col(j).to_vec();
        let coeffs = cgs2(&f.q, &mut v);
        let rho = norm(&v);
        if !(rho > RANK_TOL * total) {
            return Err(Error::RankDeficient { column: j });
        }
        scale_in_place(1.0 / rho, &mut v);
        append_factor_column(&mut f, &v, &coeffs, rho);
    }
    f.frob_sq = total * total;
    Ok(f)
}

/// QR factorization that tolerates dependent columns (zero `Q` column, zero
/// diagonal). Returns the factors and the indices of dependent columns.
pub fn qr_factor_lenient(m: &DenseMatrix) -> (QrFactors, Vec<usize>) {
    let mut f = QrFactors::empty(m.rows());
    let total = m.frobenius_norm();
    let mut dependent = Vec::new();
    for j in 0..m.cols() {
        let mut v = m.col(j).to_vec();
        let coeffs = cgs2(&f.q, &mut v);
        let rho = norm(&v);
        if rho > RANK_TOL * total && rho > 0.0 {
            scale_in_place(1.0 / rho, &mut v);
            append_factor_column(&mut f, &v, &coeffs, rho);
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
            append_factor_column(&mut f, &v, &coeffs, 0.0);
            dependent.push(j);
        }
    }
    f.frob_sq = total * total;
    (f, dependent)
}

fn append_factor_column(f: &mut QrFactors, q_col: &[f64], coeffs: &[f64], rho: f64) {
    let k = f.width();
    f.q.push_column(q_col).expect("length checked by caller");
    let mut r = DenseMatrix::zeros(k + 1, k + 1);
    for j in 0..k {
        r.col_mut(j)[..k].copy_from_slice(f.r.col(j));
    }
    let last = r.col_mut(k);
    last[..k].copy_from_slice(coeffs);
    last[k] = rho;
    f.r = r;
}

/// Returns the QR factors of `[M, m_new]` given the factors of `M`.
pub fn qr_append_column(f: &QrFactors, m_new: &[f64]) -> Result<QrFactors> {
    let mut out = f.clone();
    out.push_column(m_new)?;
    Ok(out)
}

/// Solves `R x = b` for upper triangular `R`.
pub fn solve_upper(r: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.cols();
    if r.rows() < n || b.len() < n {
        return Err(Error::DimensionMismatch("triangular solve".into()));
    }
    let mut x = b[..n].to_vec();
    for i in (0..n).rev() {
        let d = r[(i, i)];
        if d == 0.0 {
            return Err(Error::SingularSystem);
        }
        let mut s = x[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / d;
    }
    Ok(x)
}

/// Result of `ℓ` Golub-Kahan steps: `A V = U B` with `B` lower bidiagonal.
#[derive(Debug, Clone)]
pub struct Bidiagonalization {
    pub v: DenseMatrix,
    pub u: DenseMatrix,
    pub b: DenseMatrix,
}

/// Runs `steps` Golub-Kahan bidiagonalization steps on `op` started from `d`,
/// with full reorthogonalization of both bases.
pub fn golub_kahan(
    op: &dyn LinearOperator,
    d: &[f64],
    steps: usize,
) -> Result<Bidiagonalization> {
    let (m, n) = (op.rows(), op.cols());
    if d.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "data length {} for operator with {m} rows",
            d.len()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let beta1 = norm(d);
    if beta1 == 0.0 {
        return Err(Error::InvalidArgument("zero start vector".into()));
    }
    let mut u = DenseMatrix::zeros(m, 0);
    let mut v = DenseMatrix::zeros(n, 0);
    let mut b = DenseMatrix::zeros(steps + 1, steps);
    let mut u_cur: Vec<f64> = d.iter().map(|x| x / beta1).collect();
    u.push_column(&u_cur)?;
    let mut scale = 0.0_f64;

    for j in 0..steps {
        // alpha_j v_j = Aᵀ u_j − beta_j v_{j−1}
        let mut w = op.apply_adjoint(&u_cur);
        cgs2(&v, &mut w);
        let alpha = norm(&w);
        scale = scale.max(alpha);
        if !(alpha > RANK_TOL * scale) {
            return Err(Error::Breakdown { step: j });
        }
        scale_in_place(1.0 / alpha, &mut w);
        v.push_column(&w)?;
        b[(j, j)] = alpha;

        // beta_{j+1} u_{j+1} = A v_j − alpha_j u_j
        let mut p = op.apply(&w);
        cgs2(&u, &mut p);
        let beta = norm(&p);
        b[(j + 1, j)] = beta;
        if beta > RANK_TOL * scale {
            scale = scale.max(beta);
            scale_in_place(1.0 / beta, &mut p);
            u.push_column(&p)?;
            u_cur = p;
        } else if j + 1 == steps {
            // A V already lies in span(U); complete U with any unit vector.
            b[(j + 1, j)] = 0.0;
            let filler = orthonormal_completion(&u).ok_or(Error::Breakdown { step: j + 1 })?;
            u.push_column(&filler)?;
        } else {
            return Err(Error::Breakdown { step: j + 1 });
        }
    }
    Ok(Bidiagonalization { v, u, b })
}

/// A unit vector orthogonal to the columns of `q`, if the space is not full.
fn orthonormal_completion(q: &DenseMatrix) -> Option<Vec<f64>> {
    let m = q.rows();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..m.min(q.cols() + 1) {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        cgs2(q, &mut e);
        let nrm = norm(&e);
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, e));
        }
    }
    let (nrm, mut e) = best?;
    if nrm < 1e-8 {
        return None;
    }
    scale_in_place(1.0 / nrm, &mut e);
    Some(e)
}

/// Thin singular value decomposition `M ≈ U diag(S) Wᵀ` truncated to the
/// requested rank.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub w: DenseMatrix,
}

impl Svd {
    /// Number of retained singular triplets.
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Full thin SVD by one-sided Jacobi rotations. Singular values are sorted in
/// nonincreasing order; columns belonging to zero singular values are kept.
pub fn svd(m: &DenseMatrix) -> Svd {
    if m.rows() < m.cols() {
        let t = svd(&m.transpose());
        return Svd {
            u: t.w,
            s: t.s,
            w: t.u,
        };
    }
    let (rows, cols) = (m.rows(), m.cols());
    let mut a = m.clone();
    let mut w = DenseMatrix::identity(cols);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(a.col(p), a.col(p));
                let beta = dot(a.col(q), a.col(q));
                let gamma = dot(a.col(p), a.col(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut w, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..cols).map(|j| (norm(a.col(j)), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut u = DenseMatrix::zeros(rows, cols);
    let mut wout = DenseMatrix::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    let smax = order.first().map_or(0.0, |o| o.0);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s.push(sigma);
        wout.col_mut(k).copy_from_slice(w.col(j));
        if sigma > f64::EPSILON * smax * rows as f64 && sigma > 0.0 {
            let col: Vec<f64> = a.col(j).iter().map(|x| x / sigma).collect();
            u.col_mut(k).copy_from_slice(&col);
        }
    }
    // Fill left vectors of null singular values so that U stays orthonormal.
    let mut basis = DenseMatrix::zeros(rows, 0);
    for k in 0..cols {
        let c = u.col(k).to_vec();
        if norm(&c) > 0.5 {
            basis.push_column(&c).expect("length");
        }
    }
    for k in 0..cols {
        if norm(u.col(k)) < 0.5 {
            if let Some(e) = orthonormal_completion_full(&basis) {
                u.col_mut(k).copy_from_slice(&e);
                basis.push_column(&e).expect("length");
            }
        }
    }
    Svd { u, s, w: wout }
}

fn orthonormal_completion_full(q: &DenseMatrix) -> Option<Vec<f64>> {
    let m = q.rows();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        cgs2(q, &mut e);
        let nrm = norm(&e);
        if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
            best = Some((nrm, e));
        }
    }
    let (nrm, mut e) = best?;
    if nrm < 1e-8 {
        return None;
    }
    scale_in_place(1.0 / nrm, &mut e);
    Some(e)
}

fn rotate_columns(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = a.rows();
    for i in 0..rows {
        let ap = a[(i, p)];
        let aq = a[(i, q)];
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Rank-`k` truncated SVD. The returned rank is `k` clipped to the numerical
/// rank of `m`.
pub fn truncated_svd(m: &DenseMatrix, k: usize) -> Svd {
    let full = svd(m);
    let smax = full.s.first().copied().unwrap_or(0.0);
    let tol = smax * f64::EPSILON * m.rows().max(m.cols()) as f64;
    let numerical = full.s.iter().take_while(|&&s| s > tol && s > 0.0).count();
    let eff = k.min(numerical);
    Svd {
        u: full.u.leading(full.u.rows(), eff),
        s: full.s[..eff].to_vec(),
        w: full.w.leading(full.w.rows(), eff),
    }
}

/// Minimum-norm least-squares solution of `M z ≈ b` through the SVD.
pub fn lstsq_min_norm(m: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let f = svd(m);
    let smax = f.s.first().copied().unwrap_or(0.0);
    let tol = smax * f64::EPSILON * m.rows().max(m.cols()) as f64;
    let mut z = vec![0.0; m.cols()];
    for (j, &s) in f.s.iter().enumerate() {
        if s > tol && s > 0.0 {
            let c = dot(f.u.col(j), b) / s;
            axpy(c, f.w.col(j), &mut z);
        }
    }
    z
}

/// Minimizes `‖R_A z − rhs‖² + λ‖R_Ψ z‖²` through a QR factorization of the
/// stacked matrix `[R_A; √λ R_Ψ]`.
pub fn solve_regularized_ls(
    r_a: &DenseMatrix,
    r_psi: &DenseMatrix,
    rhs: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let k = r_a.cols();
    if r_a.rows() != k || r_psi.cols() != k || rhs.len() != k {
        return Err(Error::DimensionMismatch("projected system".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
    }
    let mut scaled = r_psi.clone();
    scaled.scale(lambda.sqrt());
    let stacked = r_a.vstack(&scaled);
    let f = qr_factor(&stacked).map_err(|_| Error::SingularSystem)?;
    let mut full_rhs = rhs.to_vec();
    full_rhs.resize(stacked.rows(), 0.0);
    let qtb = f.q.tr_matvec(&full_rhs);
    solve_upper(&f.r, &qtb)
}
