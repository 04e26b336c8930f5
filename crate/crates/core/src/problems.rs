//! Desk-scale test problems and quality metrics.
//!
//! Images are `n_x × n_y` arrays stored column-major with the `x` (row,
//! vertical) index fastest, matching the operators and regularizers.
//! Sequences of frames are stacked frame after frame.

use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::linalg::{norm, DenseMatrix};
use crate::operators::{blur_make, block_diag, default_detectors, stack, tomo_make, SharedOperator};
use crate::solvers::DataBlock;

/// One ellipse of a Shepp-Logan style phantom: intensity, semi-axes,
/// center and rotation in degrees, in the normalized square `[−1, 1]²`.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

const fn ell(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse { intensity, a, b, x0, y0, phi_deg }
}

/// Modified (high-contrast) Shepp-Logan ellipses.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    ell(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    ell(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    ell(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    ell(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    ell(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    ell(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    ell(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    ell(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    ell(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    ell(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Subsamples per pixel side when rasterizing phantoms.
const SUPERSAMPLE: usize = 4;

fn shepp_value(px: f64, py: f64) -> f64 {
    let mut v = 0.0;
    for e in &SHEPP_LOGAN {
        let (s, c) = e.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (px - e.x0, py - e.y0);
        let u = dx * c + dy * s;
        let w = -dx * s + dy * c;
        if (u / e.a).powi(2) + (w / e.b).powi(2) <= 1.0 {
            v += e.intensity;
        }
    }
    v.clamp(0.0, 1.0)
}

/// Area-averaged rasterization of `f` over the normalized square. Row `i`
/// maps to the vertical coordinate (top row at `+1`), column `j` to the
/// horizontal one.
fn rasterize(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let h = 2.0 / n as f64;
    let ss = SUPERSAMPLE;
    let mut img = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let mut acc = 0.0;
            for sj in 0..ss {
                let px = -1.0 + h * (j as f64 + (sj as f64 + 0.5) / ss as f64);
                for si in 0..ss {
                    let py = 1.0 - h * (i as f64 + (si as f64 + 0.5) / ss as f64);
                    acc += f(px, py);
                }
            }
            img[i + n * j] = acc / (ss * ss) as f64;
        }
    }
    img
}

/// Modified Shepp-Logan phantom on an `n × n` grid, values in `[0, 1]`.
pub fn phantom_shepp(n: usize) -> Result<Vec<f64>> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("phantom size {n} < 16")));
    }
    Ok(rasterize(n, shepp_value))
}

/// A disc moving linearly over the sequence: center at frame `t` is
/// `center + velocity · t/(n_t − 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Circle {
    pub center: (f64, f64),
    pub velocity: (f64, f64),
    pub radius: f64,
    pub intensity: f64,
}

const fn circ(cx: f64, cy: f64, vx: f64, vy: f64, radius: f64, intensity: f64) -> Circle {
    Circle {
        center: (cx, cy),
        velocity: (vx, vy),
        radius,
        intensity,
    }
}

/// Six discs of different sizes and intensities drifting across the field
/// of view. Coordinates are in the normalized square `[−1, 1]²`.
pub const SIX_CIRCLES: [Circle; 6] = [
    circ(-0.5, 0.45, 0.3, -0.1, 0.22, 1.0),
    circ(0.45, 0.5, -0.2, -0.25, 0.15, 0.8),
    circ(0.0, 0.0, 0.0, 0.3, 0.18, 0.6),
    circ(-0.45, -0.45, 0.25, 0.2, 0.12, 0.9),
    circ(0.5, -0.4, -0.15, 0.3, 0.1, 0.5),
    circ(0.1, -0.7, 0.2, 0.05, 0.08, 0.7),
];

/// Frames of moving discs; overlapping discs take the larger intensity.
pub fn phantom_circles_with(n: usize, n_t: usize, circles: &[Circle]) -> Result<Vec<f64>> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("phantom size {n} < 16")));
    }
    if n_t == 0 {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    let mut out = Vec::with_capacity(n * n * n_t);
    for t in 0..n_t {
        let s = if n_t > 1 { t as f64 / (n_t - 1) as f64 } else { 0.0 };
        let frame = rasterize(n, |px, py| {
            circles
                .iter()
                .filter(|c| {
                    let cx = c.center.0 + c.velocity.0 * s;
                    let cy = c.center.1 + c.velocity.1 * s;
                    (px - cx).powi(2) + (py - cy).powi(2) <= c.radius * c.radius
                })
                .map(|c| c.intensity)
                .fold(0.0, f64::max)
        });
        out.extend(frame);
    }
    Ok(out)
}

pub fn phantom_circles(n: usize, n_t: usize) -> Result<Vec<f64>> {
    phantom_circles_with(n, n_t, &SIX_CIRCLES)
}

/// Linear motion blur of `length` pixels at `angle_deg` (counterclockwise
/// from the horizontal), in the smallest odd square that holds it.
pub fn motion_psf(length: usize, angle_deg: f64) -> Result<DenseMatrix> {
    if length == 0 {
        return Err(Error::BadPsf("zero motion length".into()));
    }
    let size = if length % 2 == 1 { length } else { length + 1 };
    let c = (size / 2) as f64;
    let (s, co) = angle_deg.to_radians().sin_cos();
    let mut psf = DenseMatrix::zeros(size, size);
    let samples = 16 * size;
    let half = (length as f64 - 1.0) / 2.0;
    for k in 0..=samples {
        let t = -half + 2.0 * half * k as f64 / samples as f64;
        let col = (c + t * co).round();
        let row = (c - t * s).round();
        if (0.0..size as f64).contains(&row) && (0.0..size as f64).contains(&col) {
            psf[(row as usize, col as usize)] += 1.0;
        }
    }
    let total: f64 = psf.as_slice().iter().sum();
    psf.scale(1.0 / total);
    Ok(psf)
}

/// Normalized Gaussian PSF of odd `size` and standard deviation `sigma`.
pub fn gaussian_psf(size: usize, sigma: f64) -> Result<DenseMatrix> {
    if size.is_multiple_of(2) || !(sigma > 0.0) {
        return Err(Error::BadPsf(format!("gaussian size {size}, sigma {sigma}")));
    }
    let c = (size / 2) as f64;
    let mut psf = DenseMatrix::zeros(size, size);
    for j in 0..size {
        for i in 0..size {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            psf[(i, j)] = (-r2 / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = psf.as_slice().iter().sum();
    psf.scale(1.0 / total);
    Ok(psf)
}

/// White Gaussian noise rescaled so that `‖e‖ / ‖clean‖ = σ`. Returns the
/// noisy data and the noise.
pub fn add_noise(clean: &[f64], sigma: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {sigma}")));
    }
    if sigma == 0.0 {
        return Ok((clean.to_vec(), vec![0.0; clean.len()]));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut e: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scale = sigma * norm(clean) / norm(&e);
    e.iter_mut().for_each(|v| *v *= scale);
    let d = clean.iter().zip(&e).map(|(a, b)| a + b).collect();
    Ok((d, e))
}

/// Relative reconstruction error `‖x − x_true‖ / ‖x_true‖`.
pub fn rre(x: &[f64], x_true: &[f64]) -> f64 {
    let diff: f64 = x.iter().zip(x_true).map(|(a, b)| (a - b) * (a - b)).sum();
    diff.sqrt() / norm(x_true)
}

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;

/// Mean structural similarity over all `8 × 8` windows (stride one) with
/// `K₁ = 0.01`, `K₂ = 0.03` and dynamic range `max − min` of the reference.
pub fn ssim(x: &[f64], x_true: &[f64], n_x: usize, n_y: usize) -> Result<f64> {
    if x.len() != n_x * n_y || x_true.len() != n_x * n_y {
        return Err(Error::DimensionMismatch("ssim image sizes".into()));
    }
    let win = SSIM_WINDOW.min(n_x).min(n_y);
    let hi = x_true.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = x_true.iter().copied().fold(f64::INFINITY, f64::min);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let np = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for j0 in 0..=n_y - win {
        for i0 in 0..=n_x - win {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in j0..j0 + win {
                for i in i0..i0 + win {
                    let a = x[i + n_x * j];
                    let b = x_true[i + n_x * j];
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            }
            let (ma, mb) = (sa / np, sb / np);
            let va = saa / np - ma * ma;
            let vb = sbb / np - mb * mb;
            let cov = sab / np - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// A linear inverse problem with known ground truth.
#[derive(Clone)]
pub struct TestProblem {
    pub operator: SharedOperator,
    pub x_true: Vec<f64>,
    pub n_x: usize,
    pub n_y: usize,
    pub n_t: usize,
    pub data: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
}

/// A sequence of data blocks sharing one unknown, plus the stacked problem.
#[derive(Clone)]
pub struct StreamProblem {
    pub blocks: Vec<DataBlock>,
    pub x_true: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl StreamProblem {
    /// All blocks as one problem with the same (noisy) data.
    pub fn stacked(&self) -> Result<TestProblem> {
        let op = stack(self.blocks.iter().map(|b| b.operator.clone()).collect())?;
        Ok(TestProblem {
            operator: Arc::new(op),
            x_true: self.x_true.clone(),
            n_x: self.n,
            n_y: self.n,
            n_t: 1,
            data: self.blocks.iter().flat_map(|b| b.data.iter().copied()).collect(),
            sigma: self.sigma,
            seed: self.seed,
        })
    }
}

/// Deblurring of the Shepp-Logan phantom.
pub fn deblur_problem(n: usize, psf: &DenseMatrix, sigma: f64, seed: u64) -> Result<TestProblem> {
    let x_true = phantom_shepp(n)?;
    let op: SharedOperator = Arc::new(blur_make(psf, n, n)?);
    let (data, _) = add_noise(&op.apply(&x_true), sigma, seed)?;
    Ok(TestProblem {
        operator: op,
        x_true,
        n_x: n,
        n_y: n,
        n_t: 1,
        data,
        sigma,
        seed,
    })
}

/// Angles `start, start + step, …` strictly below `end`, in degrees.
pub fn angle_range(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step - 1e-9).ceil().max(0.0) as usize;
    (0..count).map(|k| start + step * k as f64).collect()
}

/// Parallel-beam tomography of the Shepp-Logan phantom split into angle
/// blocks. Block `j` gets its own noise stream seeded by `seed + j`.
pub fn tomography_stream(
    n: usize,
    angle_blocks: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<StreamProblem> {
    if angle_blocks.is_empty() {
        return Err(Error::InvalidArgument("no angle blocks".into()));
    }
    let x_true = phantom_shepp(n)?;
    let det = default_detectors(n);
    let mut blocks = Vec::with_capacity(angle_blocks.len());
    for (j, angles) in angle_blocks.iter().enumerate() {
        let op: SharedOperator = Arc::new(tomo_make(n, angles, det)?);
        let (data, _) = add_noise(&op.apply(&x_true), sigma, seed.wrapping_add(j as u64))?;
        blocks.push(DataBlock { operator: op, data });
    }
    Ok(StreamProblem {
        blocks,
        x_true,
        n,
        sigma,
        seed,
    })
}

/// Dynamic tomography: frame `t` of the moving-disc phantom is observed at
/// its own angles, and all frames are reconstructed jointly with a
/// block-diagonal operator.
pub fn dynamic_problem(
    n: usize,
    frame_angles: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> Result<TestProblem> {
    let n_t = frame_angles.len();
    let x_true = phantom_circles(n, n_t)?;
    let det = default_detectors(n);
    let ops = frame_angles
        .iter()
        .map(|a| tomo_make(n, a, det).map(|op| Arc::new(op) as SharedOperator))
        .collect::<Result<Vec<_>>>()?;
    let op: SharedOperator = Arc::new(block_diag(ops)?);
    let (data, _) = add_noise(&op.apply(&x_true), sigma, seed)?;
    Ok(TestProblem {
        operator: op,
        x_true,
        n_x: n,
        n_y: n,
        n_t,
        data,
        sigma,
        seed,
    })
}
