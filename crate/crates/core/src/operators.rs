//! Matrix-free linear operators.
//!
//! Every operator counts its own forward and adjoint applications. The solver
//! cost ledger is read exclusively from these counters. Composite operators
//! call the uncounted kernels of their blocks, so one composite application
//! counts once.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Largest input dimension for which [`to_dense`] will materialize a matrix.
pub const DENSE_LIMIT: usize = 64 * 64;

/// Forward/adjoint application counts.
#[derive(Debug, Default)]
pub struct MatvecCounter {
    forward: AtomicU64,
    adjoint: AtomicU64,
}

impl MatvecCounter {
    pub fn forward(&self) -> u64 {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn adjoint(&self) -> u64 {
        self.adjoint.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.forward.store(0, Ordering::Relaxed);
        self.adjoint.store(0, Ordering::Relaxed);
    }

    fn bump_forward(&self) {
        self.forward.fetch_add(1, Ordering::Relaxed);
    }

    fn bump_adjoint(&self) {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
    }
}

/// A linear map `ℝⁿ → ℝᵐ` known only through its action.
pub trait LinearOperator: Send + Sync {
    /// Output dimension `m`.
    fn rows(&self) -> usize;
    /// Input dimension `n`.
    fn cols(&self) -> usize;
    /// Uncounted kernel: `y = A x`. `y` has length `m` and is overwritten.
    fn forward(&self, x: &[f64], y: &mut [f64]);
    /// Uncounted kernel: `x = Aᵀ y`. `x` has length `n` and is overwritten.
    fn adjoint(&self, y: &[f64], x: &mut [f64]);
    fn counter(&self) -> &MatvecCounter;

    /// Counted forward application.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "apply: input length");
        self.counter().bump_forward();
        let mut y = vec![0.0; self.rows()];
        self.forward(x, &mut y);
        y
    }

    /// Counted adjoint application.
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows(), "apply_adjoint: input length");
        self.counter().bump_adjoint();
        let mut x = vec![0.0; self.cols()];
        self.adjoint(y, &mut x);
        x
    }
}

pub type SharedOperator = Arc<dyn LinearOperator>;

/// Assembles the dense matrix of a small operator (uncounted).
pub fn to_dense(op: &dyn LinearOperator) -> Result<DenseMatrix> {
    if op.cols() > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "refusing to materialize an operator with {} columns",
            op.cols()
        )));
    }
    let (m, n) = (op.rows(), op.cols());
    let mut out = DenseMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.forward(&e, out.col_mut(j));
        e[j] = 0.0;
    }
    Ok(out)
}

/// Identity map on `ℝⁿ`.
#[derive(Debug)]
pub struct IdentityOperator {
    n: usize,
    counter: MatvecCounter,
}

impl IdentityOperator {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counter: MatvecCounter::default(),
        }
    }
}

impl LinearOperator for IdentityOperator {
    fn rows(&self) -> usize {
        self.n
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.copy_from_slice(y);
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// Explicit dense matrix, for small problems and tests.
#[derive(Debug)]
pub struct DenseOperator {
    matrix: DenseMatrix,
    counter: MatvecCounter,
}

impl DenseOperator {
    pub fn new(matrix: DenseMatrix) -> Self {
        Self {
            matrix,
            counter: MatvecCounter::default(),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.matrix.rows()
    }
    fn cols(&self) -> usize {
        self.matrix.cols()
    }
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.matrix.matvec(x));
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.copy_from_slice(&self.matrix.tr_matvec(y));
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// 2D correlation with a point spread function and zero boundary.
///
/// Images are `n_x × n_y` in column-major order (the `x` index is fastest).
#[derive(Debug)]
pub struct BlurOperator {
    n_x: usize,
    n_y: usize,
    psf: DenseMatrix,
    counter: MatvecCounter,
}

impl BlurOperator {
    pub fn psf(&self) -> &DenseMatrix {
        &self.psf
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_x, self.n_y)
    }
}

/// Builds a blur operator; the PSF is normalized to unit sum.
pub fn blur_make(psf: &DenseMatrix, n_x: usize, n_y: usize) -> Result<BlurOperator> {
    let (h, w) = (psf.rows(), psf.cols());
    if h % 2 == 0 || w % 2 == 0 {
        return Err(Error::BadPsf(format!("even PSF dimensions {h}x{w}")));
    }
    if h > n_x || w > n_y {
        return Err(Error::BadPsf(format!(
            "PSF {h}x{w} larger than image {n_x}x{n_y}"
        )));
    }
    let total: f64 = psf.as_slice().iter().sum();
    if psf.as_slice().iter().all(|v| *v == 0.0) || total == 0.0 || !total.is_finite() {
        return Err(Error::BadPsf("kernel sums to zero".into()));
    }
    let mut psf = psf.clone();
    psf.scale(1.0 / total);
    Ok(BlurOperator {
        n_x,
        n_y,
        psf,
        counter: MatvecCounter::default(),
    })
}

impl LinearOperator for BlurOperator {
    fn rows(&self) -> usize {
        self.n_x * self.n_y
    }
    fn cols(&self) -> usize {
        self.n_x * self.n_y
    }

    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny) = (self.n_x as isize, self.n_y as isize);
        let (ch, cw) = ((self.psf.rows() / 2) as isize, (self.psf.cols() / 2) as isize);
        y.iter_mut().for_each(|v| *v = 0.0);
        for b in 0..self.psf.cols() {
            let db = b as isize - cw;
            for a in 0..self.psf.rows() {
                let p = self.psf[(a, b)];
                if p == 0.0 {
                    continue;
                }
                let da = a as isize - ch;
                for j in 0..ny {
                    let sj = j + db;
                    if sj < 0 || sj >= ny {
                        continue;
                    }
                    let i_lo = (-da).max(0);
                    let i_hi = (nx - da).min(nx);
                    let out = &mut y[(j * nx) as usize..((j + 1) * nx) as usize];
                    let src = &x[(sj * nx) as usize..((sj + 1) * nx) as usize];
                    for i in i_lo..i_hi {
                        out[i as usize] += p * src[(i + da) as usize];
                    }
                }
            }
        }
    }

    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        let (nx, ny) = (self.n_x as isize, self.n_y as isize);
        let (ch, cw) = ((self.psf.rows() / 2) as isize, (self.psf.cols() / 2) as isize);
        x.iter_mut().for_each(|v| *v = 0.0);
        for b in 0..self.psf.cols() {
            let db = b as isize - cw;
            for a in 0..self.psf.rows() {
                let p = self.psf[(a, b)];
                if p == 0.0 {
                    continue;
                }
                let da = a as isize - ch;
                for j in 0..ny {
                    let sj = j + db;
                    if sj < 0 || sj >= ny {
                        continue;
                    }
                    let i_lo = (-da).max(0);
                    let i_hi = (nx - da).min(nx);
                    for i in i_lo..i_hi {
                        x[(sj * nx + i + da) as usize] += p * y[(j * nx + i) as usize];
                    }
                }
            }
        }
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// Default detector count for an `n × n` grid: `⌈√2·n⌉ + 1`.
pub fn default_detectors(n: usize) -> usize {
    (std::f64::consts::SQRT_2 * n as f64).ceil() as usize + 1
}

/// Parallel-beam projector with exact ray/pixel intersection lengths.
///
/// The grid covers `[−n/2, n/2]²` with unit pixels. Pixel `(i, j)` (row `i`,
/// column `j`) has vector index `i + n·j`; rows run top to bottom. For angle
/// `θ` and detector offset `t` the ray is `t·(cos θ, sin θ) + s·(−sin θ, cos θ)`
/// in (horizontal, vertical) coordinates, and detectors are spaced one pixel
/// apart and centered on the origin.
#[derive(Debug)]
pub struct TomoOperator {
    n: usize,
    angles: Vec<f64>,
    detectors: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    counter: MatvecCounter,
}

impl TomoOperator {
    pub fn grid(&self) -> usize {
        self.n
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detectors(&self) -> usize {
        self.detectors
    }

    /// Column indices and intersection lengths of one ray.
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }
}

/// Builds the projector for an `n × n` grid.
pub fn tomo_make(n: usize, angles: &[f64], detectors: usize) -> Result<TomoOperator> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("grid size {n} < 2")));
    }
    if detectors == 0 {
        return Err(Error::InvalidArgument("no detectors".into()));
    }
    if let Some(a) = angles.iter().find(|a| !(0.0..180.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!("angle {a} outside [0, 180)")));
    }
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let half = n as f64 / 2.0;
    for &deg in angles {
        let th = deg.to_radians();
        let (s, c) = th.sin_cos();
        for k in 0..detectors {
            let t = k as f64 - (detectors as f64 - 1.0) / 2.0;
            trace_ray(n, half, (t * c, t * s), (-s, c), &mut col_idx, &mut values);
            row_ptr.push(col_idx.len());
        }
    }
    Ok(TomoOperator {
        n,
        angles: angles.to_vec(),
        detectors,
        row_ptr,
        col_idx,
        values,
        counter: MatvecCounter::default(),
    })
}

fn trace_ray(
    n: usize,
    half: f64,
    p0: (f64, f64),
    dir: (f64, f64),
    cols: &mut Vec<u32>,
    vals: &mut Vec<f64>,
) {
    const EPS: f64 = 1e-12;
    // Clip the line against the square [−half, half]².
    let mut s_lo = f64::NEG_INFINITY;
    let mut s_hi = f64::INFINITY;
    for (p, d) in [(p0.0, dir.0), (p0.1, dir.1)] {
        if d.abs() < EPS {
            if p <= -half || p >= half {
                return;
            }
        } else {
            let a = (-half - p) / d;
            let b = (half - p) / d;
            s_lo = s_lo.max(a.min(b));
            s_hi = s_hi.min(a.max(b));
        }
    }
    if !(s_hi - s_lo > EPS) {
        return;
    }
    let mut knots = vec![s_lo, s_hi];
    for (p, d) in [(p0.0, dir.0), (p0.1, dir.1)] {
        if d.abs() < EPS {
            continue;
        }
        for g in 0..=n {
            let s = (g as f64 - half - p) / d;
            if s > s_lo && s < s_hi {
                knots.push(s);
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    let start = cols.len();
    for w in knots.windows(2) {
        let len = w[1] - w[0];
        if len <= EPS {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let h = p0.0 + mid * dir.0;
        let v = p0.1 + mid * dir.1;
        let j = ((h + half).floor() as isize).clamp(0, n as isize - 1) as usize;
        let i = ((half - v).floor() as isize).clamp(0, n as isize - 1) as usize;
        let idx = (i + n * j) as u32;
        // Consecutive segments can only repeat the previous pixel.
        if cols.len() > start && *cols.last().unwrap() == idx {
            *vals.last_mut().unwrap() += len;
        } else {
            cols.push(idx);
            vals.push(len);
        }
    }
}

impl LinearOperator for TomoOperator {
    fn rows(&self) -> usize {
        self.angles.len() * self.detectors
    }
    fn cols(&self) -> usize {
        self.n * self.n
    }

    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let (c, v) = self.row(r);
            *out = c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum();
        }
    }

    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let (c, v) = self.row(r);
            for (&j, &a) in c.iter().zip(v) {
                x[j as usize] += a * yr;
            }
        }
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// Row-stacked operator `[A₁; A₂; …]` over a shared input space.
pub struct StackedOperator {
    blocks: Vec<SharedOperator>,
    rows: usize,
    cols: usize,
    counter: MatvecCounter,
}

impl StackedOperator {
    pub fn blocks(&self) -> &[SharedOperator] {
        &self.blocks
    }
}

pub fn stack(blocks: Vec<SharedOperator>) -> Result<StackedOperator> {
    let cols = blocks
        .first()
        .map(|b| b.cols())
        .ok_or_else(|| Error::DimensionMismatch("empty stack".into()))?;
    if let Some(b) = blocks.iter().find(|b| b.cols() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "stacked block has {} columns, expected {cols}",
            b.cols()
        )));
    }
    let rows = blocks.iter().map(|b| b.rows()).sum();
    Ok(StackedOperator {
        blocks,
        rows,
        cols,
        counter: MatvecCounter::default(),
    })
}

impl LinearOperator for StackedOperator {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let mut off = 0;
        for b in &self.blocks {
            let m = b.rows();
            b.forward(x, &mut y[off..off + m]);
            off += m;
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        let mut tmp = vec![0.0; self.cols];
        let mut off = 0;
        for b in &self.blocks {
            let m = b.rows();
            b.adjoint(&y[off..off + m], &mut tmp);
            x.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
            off += m;
        }
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// Block-diagonal operator `diag(A₁, …, A_T)` acting on stacked frames.
pub struct BlockDiagOperator {
    blocks: Vec<SharedOperator>,
    rows: usize,
    cols: usize,
    counter: MatvecCounter,
}

impl BlockDiagOperator {
    pub fn blocks(&self) -> &[SharedOperator] {
        &self.blocks
    }
}

pub fn block_diag(blocks: Vec<SharedOperator>) -> Result<BlockDiagOperator> {
    if blocks.is_empty() {
        return Err(Error::DimensionMismatch("empty block diagonal".into()));
    }
    let rows = blocks.iter().map(|b| b.rows()).sum();
    let cols = blocks.iter().map(|b| b.cols()).sum();
    Ok(BlockDiagOperator {
        blocks,
        rows,
        cols,
        counter: MatvecCounter::default(),
    })
}

impl LinearOperator for BlockDiagOperator {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let (mut ro, mut co) = (0, 0);
        for b in &self.blocks {
            let (m, n) = (b.rows(), b.cols());
            b.forward(&x[co..co + n], &mut y[ro..ro + m]);
            ro += m;
            co += n;
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        let (mut ro, mut co) = (0, 0);
        for b in &self.blocks {
            let (m, n) = (b.rows(), b.cols());
            b.adjoint(&y[ro..ro + m], &mut x[co..co + n]);
            ro += m;
            co += n;
        }
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}
