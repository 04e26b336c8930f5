//! First-difference regularization operators built from Kronecker blocks.
//!
//! Vectors are column-major with `x` fastest, then `y`, then `t`. For an image
//! stored as an `n_x × n_y` matrix, `x` runs down the rows (vertical direction)
//! and `y` across the columns. The 2D operator is
//! `Ψ = [I_{n_y} ⊗ L_x; L_y ⊗ I_{n_x}]` and the dynamic one appends the temporal
//! block `L_t ⊗ I_{n_y} ⊗ I_{n_x}`. No Kronecker product is ever formed.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::operators::{to_dense, LinearOperator, MatvecCounter};

/// Forward differences `(x_{i+1} − x_i)`, an `(n−1) × n` map.
#[derive(Debug)]
pub struct DiffOperator {
    n: usize,
    counter: MatvecCounter,
}

pub fn make_diff(n: usize) -> Result<DiffOperator> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("difference size {n} < 2")));
    }
    Ok(DiffOperator {
        n,
        counter: MatvecCounter::default(),
    })
}

impl LinearOperator for DiffOperator {
    fn rows(&self) -> usize {
        self.n - 1
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn forward(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = x[i + 1] - x[i];
        }
    }
    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            x[i] -= yi;
            x[i + 1] += yi;
        }
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// Which regularizer a [`RegularizerOperator`] implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    Identity { n: usize },
    Tv2d { n_x: usize, n_y: usize },
    Dynamic { n_x: usize, n_y: usize, n_t: usize },
}

/// Matrix-free regularization operator `Ψ`.
#[derive(Debug)]
pub struct RegularizerOperator {
    kind: RegularizerKind,
    counter: MatvecCounter,
}

impl RegularizerOperator {
    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    /// Row ranges of the stacked difference blocks (x, y and, if present, t).
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self.kind {
            RegularizerKind::Identity { n } => vec![0..n],
            RegularizerKind::Tv2d { n_x, n_y } => {
                let bx = n_y * (n_x - 1);
                let by = (n_y - 1) * n_x;
                vec![0..bx, bx..bx + by]
            }
            RegularizerKind::Dynamic { n_x, n_y, n_t } => {
                let bx = n_t * n_y * (n_x - 1);
                let by = n_t * (n_y - 1) * n_x;
                let bt = (n_t - 1) * n_y * n_x;
                vec![0..bx, bx..bx + by, bx + by..bx + by + bt]
            }
        }
    }
}

pub fn make_identity(n: usize) -> RegularizerOperator {
    RegularizerOperator {
        kind: RegularizerKind::Identity { n },
        counter: MatvecCounter::default(),
    }
}

pub fn make_psi_2d(n_x: usize, n_y: usize) -> Result<RegularizerOperator> {
    if n_x < 2 || n_y < 2 {
        return Err(Error::InvalidArgument(format!("image {n_x}x{n_y} too small")));
    }
    Ok(RegularizerOperator {
        kind: RegularizerKind::Tv2d { n_x, n_y },
        counter: MatvecCounter::default(),
    })
}

pub fn make_psi_dynamic(n_x: usize, n_y: usize, n_t: usize) -> Result<RegularizerOperator> {
    if n_x < 2 || n_y < 2 || n_t < 2 {
        return Err(Error::InvalidArgument(format!(
            "volume {n_x}x{n_y}x{n_t} too small"
        )));
    }
    Ok(RegularizerOperator {
        kind: RegularizerKind::Dynamic { n_x, n_y, n_t },
        counter: MatvecCounter::default(),
    })
}

/// Differences along one axis of a `n_x × n_y × n_t` volume, where `stride`
/// is the distance between neighbours and `len` the axis length.
fn axis_forward(dims: [usize; 3], axis: usize, x: &[f64], y: &mut [f64]) {
    let [nx, ny, nt] = dims;
    let mut r = 0;
    match axis {
        0 => {
            for t in 0..nt {
                for j in 0..ny {
                    let base = (t * ny + j) * nx;
                    for i in 0..nx - 1 {
                        y[r] = x[base + i + 1] - x[base + i];
                        r += 1;
                    }
                }
            }
        }
        1 => {
            for t in 0..nt {
                for j in 0..ny - 1 {
                    let base = (t * ny + j) * nx;
                    for i in 0..nx {
                        y[r] = x[base + nx + i] - x[base + i];
                        r += 1;
                    }
                }
            }
        }
        _ => {
            let frame = nx * ny;
            for t in 0..nt - 1 {
                for p in 0..frame {
                    y[r] = x[(t + 1) * frame + p] - x[t * frame + p];
                    r += 1;
                }
            }
        }
    }
}

fn axis_adjoint(dims: [usize; 3], axis: usize, y: &[f64], x: &mut [f64]) {
    let [nx, ny, nt] = dims;
    let mut r = 0;
    match axis {
        0 => {
            for t in 0..nt {
                for j in 0..ny {
                    let base = (t * ny + j) * nx;
                    for i in 0..nx - 1 {
                        x[base + i + 1] += y[r];
                        x[base + i] -= y[r];
                        r += 1;
                    }
                }
            }
        }
        1 => {
            for t in 0..nt {
                for j in 0..ny - 1 {
                    let base = (t * ny + j) * nx;
                    for i in 0..nx {
                        x[base + nx + i] += y[r];
                        x[base + i] -= y[r];
                        r += 1;
                    }
                }
            }
        }
        _ => {
            let frame = nx * ny;
            for t in 0..nt - 1 {
                for p in 0..frame {
                    x[(t + 1) * frame + p] += y[r];
                    x[t * frame + p] -= y[r];
                    r += 1;
                }
            }
        }
    }
}

impl LinearOperator for RegularizerOperator {
    fn rows(&self) -> usize {
        self.block_ranges().last().map_or(0, |r| r.end)
    }

    fn cols(&self) -> usize {
        match self.kind {
            RegularizerKind::Identity { n } => n,
            RegularizerKind::Tv2d { n_x, n_y } => n_x * n_y,
            RegularizerKind::Dynamic { n_x, n_y, n_t } => n_x * n_y * n_t,
        }
    }

    fn forward(&self, x: &[f64], y: &mut [f64]) {
        let (dims, axes) = match self.kind {
            RegularizerKind::Identity { .. } => {
                y.copy_from_slice(x);
                return;
            }
            RegularizerKind::Tv2d { n_x, n_y } => ([n_x, n_y, 1], 2),
            RegularizerKind::Dynamic { n_x, n_y, n_t } => ([n_x, n_y, n_t], 3),
        };
        let ranges = self.block_ranges();
        for axis in 0..axes {
            axis_forward(dims, axis, x, &mut y[ranges[axis].clone()]);
        }
    }

    fn adjoint(&self, y: &[f64], x: &mut [f64]) {
        let (dims, axes) = match self.kind {
            RegularizerKind::Identity { .. } => {
                x.copy_from_slice(y);
                return;
            }
            RegularizerKind::Tv2d { n_x, n_y } => ([n_x, n_y, 1], 2),
            RegularizerKind::Dynamic { n_x, n_y, n_t } => ([n_x, n_y, n_t], 3),
        };
        x.iter_mut().for_each(|v| *v = 0.0);
        let ranges = self.block_ranges();
        for axis in 0..axes {
            axis_adjoint(dims, axis, &y[ranges[axis].clone()], x);
        }
    }

    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

/// Checks on a small instance that `[A; PΨ]` has full column rank, i.e. that
/// `N(AᵀA) ∩ N(ΨᵀP²Ψ) = {0}` and the reweighted normal equations have a
/// unique solution. `weights` holds the diagonal of `P²`.
pub fn has_unique_solution(
    a: &dyn LinearOperator,
    psi: &dyn LinearOperator,
    weights: &[f64],
) -> Result<bool> {
    let da = to_dense(a)?;
    let mut dp = to_dense(psi)?;
    for j in 0..dp.cols() {
        for (v, w) in dp.col_mut(j).iter_mut().zip(weights) {
            *v *= w.sqrt();
        }
    }
    let stacked = da.vstack(&dp);
    Ok(crate::linalg::qr_factor(&stacked).is_ok())
}

/// Dense assembly of `Ψ` for tests and small-scale checks.
pub fn assemble(psi: &RegularizerOperator) -> Result<DenseMatrix> {
    to_dense(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::IdentityOperator;

    #[test]
    fn diff_of_small_vector() {
        let d = make_diff(3).unwrap();
        assert_eq!(d.apply(&[1.0, 2.0, 4.0]), vec![1.0, 2.0]);
        assert_eq!(d.apply(&[5.0; 3]), vec![0.0, 0.0]);
    }

    #[test]
    fn diff_rejects_tiny() {
        assert!(make_diff(1).is_err());
    }

    #[test]
    fn psi_2d_shape_and_nullspace() {
        let psi = make_psi_2d(5, 4).unwrap();
        assert_eq!(psi.rows(), 4 * 4 + 3 * 5);
        assert!(psi.apply(&[3.0; 20]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psi_2d_piecewise_constant_columns() {
        let psi = make_psi_2d(2, 2).unwrap();
        let y = psi.apply(&[0.0, 0.0, 1.0, 1.0]);
        let r = psi.block_ranges();
        assert!(y[r[0].clone()].iter().all(|&v| v == 0.0));
        assert!(y[r[1].clone()].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dynamic_temporal_block() {
        let psi = make_psi_dynamic(3, 2, 2).unwrap();
        let frame: Vec<f64> = (0..6).map(|v| v as f64).collect();
        let same: Vec<f64> = frame.iter().chain(&frame).copied().collect();
        let shifted: Vec<f64> = frame
            .iter()
            .copied()
            .chain(frame.iter().map(|v| v + 0.5))
            .collect();
        let t = psi.block_ranges()[2].clone();
        assert!(psi.apply(&same)[t.clone()].iter().all(|&v| v == 0.0));
        assert!(psi.apply(&shifted)[t].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn unique_solution_check() {
        let a = IdentityOperator::new(4);
        let psi = make_psi_2d(2, 2).unwrap();
        assert!(has_unique_solution(&a, &psi, &vec![1.0; psi.rows()]).unwrap());
        // A = 0 leaves the constant image in both null spaces.
        let zero = crate::operators::DenseOperator::new(DenseMatrix::zeros(4, 4));
        assert!(!has_unique_solution(&zero, &psi, &vec![1.0; psi.rows()]).unwrap());
    }
}
