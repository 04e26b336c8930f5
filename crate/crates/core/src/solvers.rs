//! MM-GKS, its memory-bounded recycled variant RMM-GKS, and the streaming
//! driver s-RMM-GKS.
//!
//! All three share one expansion step. The basis `V`, the raw products
//! `A V` and `Ψ V`, and the incremental QR factors of `A V` are cached, so
//! each step costs exactly one application of `A`, `Aᵀ`, `Ψ` and `Ψᵀ`:
//! the adjoints build the residual, the forward maps extend the caches.
//! Compression mixes the cached products with the same coefficients as the
//! basis and needs no operator applications.

use std::time::Instant;

use crate::compression::{chi, reinjection_coefficients, CompressionNote, CompressionStrategy, ProjectedFactors};
use crate::error::{Error, Result};
use crate::linalg::{
    axpy, cgs2, golub_kahan, lstsq_min_norm, norm, qr_factor_lenient, scale_in_place,
    solve_regularized_ls, DenseMatrix, QrFactors,
};
use crate::mm::{
    choose_lambda, compute_weights, objective_lambda, smoothed_penalty, weighting_matrix,
    LambdaRule,
};
use crate::operators::{LinearOperator, SharedOperator};

/// Residual norms below this multiple of `‖Aᵀd‖` end the iteration.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Relative distance below which an iterate counts as lying in the basis.
const SPAN_TOL: f64 = 1e-10;

/// A residual that loses all but this fraction of its norm to
/// reorthogonalization cannot extend the basis.
const DEPENDENT_TOL: f64 = 1e-12;

/// Solver parameters shared by all drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Golub-Kahan steps for the initial space; `None` means `k_min`.
    pub initial_steps: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    /// Enlarge/compress cycles (RMM-GKS only).
    pub outer_cycles: usize,
    /// Total expansion steps allowed per solve.
    pub max_iters: usize,
    /// Relative-change threshold for stopping.
    pub tol: f64,
    pub epsilon: f64,
    pub q: f64,
    pub lambda: LambdaRule,
    pub compression: CompressionStrategy,
    /// Record wall time per row; off by default so logs are reproducible.
    pub record_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            initial_steps: None,
            k_min: 5,
            k_max: 25,
            outer_cycles: 10,
            max_iters: 200,
            tol: 1e-3,
            epsilon: 1e-2,
            q: 1.0,
            lambda: LambdaRule::default(),
            compression: CompressionStrategy::new(crate::compression::CompressionKind::Tsvd),
            record_time: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_min == 0 || self.k_min >= self.k_max {
            return bad(format!("need 1 ≤ k_min < k_max, got {} and {}", self.k_min, self.k_max));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.q > 0.0 && self.q <= 2.0) {
            return bad(format!("q must lie in (0, 2], got {}", self.q));
        }
        if self.initial_steps == Some(0) {
            return bad("initial_steps must be at least 1".into());
        }
        if let LambdaRule::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return bad(format!("fixed lambda must be nonnegative, got {l}"));
            }
        }
        Ok(())
    }

    fn initial(&self) -> usize {
        self.initial_steps.unwrap_or(self.k_min)
    }
}

/// One log row. Matvec counts are cumulative over the whole solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cycle: usize,
    pub basis_k: usize,
    pub lambda: f64,
    pub objective: f64,
    pub t1: f64,
    pub rre: Option<f64>,
    pub ssim: Option<f64>,
    pub mv_a: u64,
    pub mv_at: u64,
    pub mv_psi: u64,
    pub mv_psit: u64,
    pub ms: u64,
}

/// Quality figures reported by a [`Monitor`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quality {
    pub rre: Option<f64>,
    pub ssim: Option<f64>,
}

/// Observes every new iterate. Used for RRE/SSIM columns and by tests; it
/// never influences the iteration.
pub trait Monitor {
    fn observe(&mut self, x: &[f64]) -> Quality;
}

/// Monitor that reports nothing.
pub struct NoMonitor;

impl Monitor for NoMonitor {
    fn observe(&mut self, _x: &[f64]) -> Quality {
        Quality::default()
    }
}

impl<F: FnMut(&[f64]) -> Quality> Monitor for F {
    fn observe(&mut self, x: &[f64]) -> Quality {
        self(x)
    }
}

/// `‖x_k − x_{k−1}‖ / ‖x_{k−1}‖`, or `+∞` for a zero previous iterate.
pub fn stopping_t1(current: &[f64], previous: &[f64]) -> f64 {
    let p = norm(previous);
    if p == 0.0 {
        return f64::INFINITY;
    }
    let diff: f64 = current
        .iter()
        .zip(previous)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    diff.sqrt() / p
}

/// Orthonormal basis of the solution space with the cached products
/// `A V`, `Ψ V` and the QR factors of `A V` and `P Ψ V`.
#[derive(Debug, Clone)]
pub struct SolutionBasis {
    v: DenseMatrix,
    av: DenseMatrix,
    qr_a: QrFactors,
    psiv: DenseMatrix,
    qr_psi: Option<QrFactors>,
    peak: usize,
}

impl SolutionBasis {
    fn new(n: usize, m: usize, s: usize) -> Self {
        Self {
            v: DenseMatrix::zeros(n, 0),
            av: DenseMatrix::zeros(m, 0),
            qr_a: QrFactors::empty(m),
            psiv: DenseMatrix::zeros(s, 0),
            qr_psi: None,
            peak: 0,
        }
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn width(&self) -> usize {
        self.v.cols()
    }

    /// Largest number of basis vectors held at any time.
    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn qr_a(&self) -> &QrFactors {
        &self.qr_a
    }

    /// Factors of `P Ψ V` for the weights of the latest step, if current.
    pub fn qr_psi(&self) -> Option<&QrFactors> {
        self.qr_psi.as_ref()
    }

    fn clear(&mut self) {
        let (n, m, s) = (self.v.rows(), self.av.rows(), self.psiv.rows());
        self.v = DenseMatrix::zeros(n, 0);
        self.av = DenseMatrix::zeros(m, 0);
        self.qr_a = QrFactors::empty(m);
        self.psiv = DenseMatrix::zeros(s, 0);
        self.qr_psi = None;
    }

    fn push(&mut self, v: &[f64], av: &[f64], psiv: &[f64]) -> Result<()> {
        self.v.push_column(v)?;
        self.av.push_column(av)?;
        self.qr_a.push_column_lenient(av)?;
        self.psiv.push_column(psiv)?;
        self.qr_psi = None;
        self.peak = self.peak.max(self.v.cols());
        Ok(())
    }

    /// Appends `v` after applying both operators to it.
    fn push_applied(&mut self, a: &dyn LinearOperator, psi: &dyn LinearOperator, v: &[f64]) -> Result<()> {
        let av = a.apply(v);
        let pv = psi.apply(v);
        self.push(v, &av, &pv)
    }

    /// `V ← V C` together with the cached products.
    fn mix(&mut self, c: &DenseMatrix) -> Result<()> {
        self.v.right_multiply_in_place(c)?;
        self.av.right_multiply_in_place(c)?;
        self.psiv.right_multiply_in_place(c)?;
        self.qr_a = qr_factor_lenient(&self.av).0;
        self.qr_psi = None;
        Ok(())
    }

    /// Recomputes the factors of `P Ψ V` for weights `w`.
    fn refresh_psi(&mut self, w: &[f64]) -> &QrFactors {
        let p = weighting_matrix(w);
        let mut m = self.psiv.clone();
        for j in 0..m.cols() {
            m.col_mut(j).iter_mut().zip(&p).for_each(|(a, b)| *a *= b);
        }
        self.qr_psi = Some(qr_factor_lenient(&m).0);
        self.qr_psi.as_ref().expect("just set")
    }
}

/// Why a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    ResidualBreakdown,
    MaxIterations,
    MaxCycles,
}

/// Result of a single-data solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    /// Final basis (compressed for RMM-GKS).
    pub basis: SolutionBasis,
    pub lambda: f64,
    pub log: Vec<IterationRecord>,
    pub stop: StopReason,
    pub notes: Vec<CompressionNote>,
}

/// Starting point for a seeded solve: an orthonormal basis and an iterate.
#[derive(Debug, Clone)]
pub struct Seed {
    pub basis: DenseMatrix,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Offsets {
    a: u64,
    at: u64,
    psi: u64,
    psit: u64,
}

/// Mutable solver state over one data block.
struct State<'a> {
    a: &'a dyn LinearOperator,
    psi: &'a dyn LinearOperator,
    d: &'a [f64],
    cfg: &'a SolverConfig,
    basis: SolutionBasis,
    x: Vec<f64>,
    /// Coefficients of `x` in `V`; empty when `x` is not known to lie in it.
    z: Vec<f64>,
    /// `Ψ x`
    u: Vec<f64>,
    /// `A x`
    ax: Vec<f64>,
    lambda: f64,
    atd_norm: f64,
    iter: usize,
    cycle: usize,
    /// Set whenever the iterate was produced without a later expansion, so
    /// the next solve may only repeat it.
    resolve_pending: bool,
    log: Vec<IterationRecord>,
    counts_at_start: Offsets,
    carried: Offsets,
    clock: Instant,
}

enum Step {
    /// The iterate moved; the basis grew unless it was already full.
    /// `conclusive` is false for a re-solve over a space that already held
    /// the previous iterate, whose change says nothing about convergence.
    Advanced { t1: f64, conclusive: bool },
    Breakdown,
}

impl<'a> State<'a> {
    fn new(
        a: &'a dyn LinearOperator,
        psi: &'a dyn LinearOperator,
        d: &'a [f64],
        cfg: &'a SolverConfig,
        carried: Offsets,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = a.cols();
        if psi.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator has {n} columns, regularizer {}",
                psi.cols()
            )));
        }
        if d.len() != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "data length {} for {} rows",
                d.len(),
                a.rows()
            )));
        }
        if norm(d) == 0.0 {
            return Err(Error::InvalidArgument("zero data vector".into()));
        }
        let counts_at_start = Offsets {
            a: a.counter().forward(),
            at: a.counter().adjoint(),
            psi: psi.counter().forward(),
            psit: psi.counter().adjoint(),
        };
        Ok(Self {
            a,
            psi,
            d,
            cfg,
            basis: SolutionBasis::new(n, a.rows(), psi.rows()),
            x: vec![0.0; n],
            z: Vec::new(),
            u: vec![0.0; psi.rows()],
            ax: vec![0.0; a.rows()],
            lambda: 0.0,
            atd_norm: 0.0,
            iter: 0,
            cycle: 0,
            resolve_pending: false,
            log: Vec::new(),
            counts_at_start,
            carried,
            clock: Instant::now(),
        })
    }

    fn counts(&self) -> Offsets {
        let s = &self.counts_at_start;
        let c = &self.carried;
        Offsets {
            a: c.a + self.a.counter().forward() - s.a,
            at: c.at + self.a.counter().adjoint() - s.at,
            psi: c.psi + self.psi.counter().forward() - s.psi,
            psit: c.psit + self.psi.counter().adjoint() - s.psit,
        }
    }

    fn projected_rhs(&self) -> Vec<f64> {
        self.basis.qr_a.q.tr_matvec(self.d)
    }

    fn weights(&self) -> Vec<f64> {
        compute_weights(&self.u, self.cfg.epsilon, self.cfg.q)
    }

    /// Current iterate expressed in the basis, padded to its width.
    fn iterate_in_span(&self) -> bool {
        let xn = norm(&self.x);
        if xn == 0.0 {
            return true;
        }
        let mut rest = self.x.clone();
        cgs2(&self.basis.v, &mut rest);
        norm(&rest) <= SPAN_TOL * xn
    }

    fn coefficients(&self) -> Vec<f64> {
        let mut z = self.z.clone();
        z.resize(self.basis.width(), 0.0);
        z
    }

    fn record(&mut self, t1: f64, monitor: &mut dyn Monitor) {
        let misfit: f64 = self
            .ax
            .iter()
            .zip(self.d)
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        let lam_j = objective_lambda(self.lambda, self.cfg.q);
        let objective = misfit + lam_j * smoothed_penalty(&self.u, self.cfg.epsilon, self.cfg.q);
        let quality = monitor.observe(&self.x);
        let c = self.counts();
        let ms = if self.cfg.record_time {
            self.clock.elapsed().as_millis() as u64
        } else {
            0
        };
        self.log.push(IterationRecord {
            iter: self.iter,
            cycle: self.cycle,
            basis_k: self.basis.width(),
            lambda: self.lambda,
            objective,
            t1,
            rre: quality.rre,
            ssim: quality.ssim,
            mv_a: c.a,
            mv_at: c.at,
            mv_psi: c.psi,
            mv_psit: c.psit,
            ms,
        });
    }

    /// Projected solve on the current basis with weights at the current
    /// iterate. Updates `x`, `z`, `u` and `λ`; returns the weights used.
    fn solve_projected(&mut self) -> Result<Vec<f64>> {
        let w = self.weights();
        let rhs = self.projected_rhs();
        let r_psi = self.basis.refresh_psi(&w).r.clone();
        let r_a = &self.basis.qr_a.r;
        let choice = choose_lambda(&self.cfg.lambda, r_a, &r_psi, &rhs);
        if choice.degenerate {
            log::debug!("flat GCV at width {}", self.basis.width());
        }
        let z = match solve_regularized_ls(r_a, &r_psi, &rhs, choice.lambda) {
            Ok(z) => z,
            Err(Error::SingularSystem) => {
                let mut scaled = r_psi.clone();
                scaled.scale(choice.lambda.sqrt());
                let mut full = rhs.clone();
                full.resize(2 * rhs.len(), 0.0);
                lstsq_min_norm(&r_a.vstack(&scaled), &full)
            }
            Err(e) => return Err(e),
        };
        self.x = self.basis.v.matvec(&z);
        self.u = self.basis.psiv.matvec(&z);
        self.ax = self.basis.av.matvec(&z);
        self.z = z;
        self.lambda = choice.lambda;
        Ok(w)
    }

    /// One expansion step: projected solve, residual, basis extension.
    fn step(&mut self, monitor: &mut dyn Monitor) -> Result<Step> {
        let conclusive = !(std::mem::take(&mut self.resolve_pending) && self.iterate_in_span());
        let previous = self.x.clone();
        let w = self.solve_projected()?;
        let t1 = stopping_t1(&self.x, &previous);

        self.iter += 1;
        if self.basis.width() == self.basis.v.rows() {
            // The space is all of ℝⁿ and the residual vanishes by
            // construction; the step is a plain weight update.
            self.record(t1, monitor);
            return Ok(Step::Advanced { t1, conclusive });
        }

        // r = Aᵀ(A V z − d) + λ Ψᵀ P² Ψ V z
        let mut misfit = self.ax.clone();
        axpy(-1.0, self.d, &mut misfit);
        let mut r = self.a.apply_adjoint(&misfit);
        let weighted: Vec<f64> = self.u.iter().zip(&w).map(|(a, b)| a * b).collect();
        axpy(self.lambda, &self.psi.apply_adjoint(&weighted), &mut r);

        let rn = norm(&r);
        if rn <= BREAKDOWN_TOL * self.atd_norm {
            self.record(t1, monitor);
            return Ok(Step::Breakdown);
        }
        cgs2(&self.basis.v, &mut r);
        let rn2 = norm(&r);
        if !(rn2 > DEPENDENT_TOL * rn) {
            // Rounding has left nothing new; later steps reweight in place.
            log::debug!("basis of width {} cannot grow", self.basis.width());
            self.record(t1, monitor);
            return Ok(Step::Advanced { t1, conclusive });
        }
        scale_in_place(1.0 / rn2, &mut r);
        self.basis.push_applied(self.a, self.psi, &r)?;
        self.record(t1, monitor);
        Ok(Step::Advanced { t1, conclusive })
    }

    /// Golub-Kahan space of up to `steps` vectors. Breakdown shortens it.
    fn golub_kahan_start(&mut self, steps: usize) -> Result<()> {
        let mut steps = steps.min(self.a.cols());
        let gk = loop {
            match golub_kahan(self.a, self.d, steps) {
                Ok(gk) => break gk,
                Err(Error::Breakdown { step }) if step >= 1 && steps > 1 => {
                    // a breakdown at the final step means U cannot be completed
                    steps = step.min(steps - 1);
                    log::info!("Golub-Kahan breakdown, initial space shortened to {steps}");
                }
                Err(e) => return Err(e),
            }
        };
        let av = gk.u.matmul(&gk.b);
        self.atd_norm = gk.b[(0, 0)] * norm(self.d);
        self.basis.clear();
        for j in 0..gk.v.cols() {
            let pv = self.psi.apply(gk.v.col(j));
            self.basis.push(gk.v.col(j), av.col(j), &pv)?;
        }
        Ok(())
    }

    /// Least-squares iterate on the initial space (no regularization).
    fn least_squares_start(&mut self) {
        let rhs = self.projected_rhs();
        let z = lstsq_min_norm(&self.basis.qr_a.r, &rhs);
        self.x = self.basis.v.matvec(&z);
        self.u = self.basis.psiv.matvec(&z);
        self.ax = self.basis.av.matvec(&z);
        self.z = z;
        self.resolve_pending = true;
    }

    /// Installs a seed basis and iterate.
    fn seed_start(&mut self, seed: &Seed) -> Result<()> {
        let n = self.a.cols();
        if seed.basis.rows() != n || seed.x.len() != n {
            return Err(Error::DimensionMismatch("seed size".into()));
        }
        if seed.basis.cols() == 0 {
            return Err(Error::InvalidArgument("empty seed basis".into()));
        }
        self.atd_norm = norm(&self.a.apply_adjoint(self.d));
        self.basis.clear();
        for j in 0..seed.basis.cols() {
            self.basis.push_applied(self.a, self.psi, seed.basis.col(j))?;
        }
        self.x = seed.x.clone();
        self.u = self.psi.apply(&seed.x);
        let z = self.basis.v.tr_matvec(&seed.x);
        let mut back = self.basis.v.matvec(&z);
        axpy(-1.0, &seed.x, &mut back);
        if norm(&back) <= 1e-12 * norm(&seed.x).max(f64::MIN_POSITIVE) {
            self.ax = self.basis.av.matvec(&z);
            self.z = z;
        } else {
            self.ax = self.a.apply(&seed.x);
            self.z = Vec::new();
        }
        self.resolve_pending = true;
        Ok(())
    }

    /// Initialization of RMM-GKS: a Golub-Kahan space, one projected MM
    /// solve, then an orthonormal basis of the Krylov space of
    /// `AᵀA + λ ΨᵀP²Ψ` started from `Aᵀd`, with `k_min` vectors.
    fn edge_encoded_start(&mut self, monitor: &mut dyn Monitor) -> Result<()> {
        self.golub_kahan_start(self.cfg.initial())?;
        self.least_squares_start();
        self.solve_projected()?;
        let w = self.weights();
        let start = self.basis.v.col(0).to_vec();
        self.basis.clear();
        self.z.clear();

        let k = self.cfg.k_min.min(self.a.cols());
        let mut v = start;
        for j in 0..k {
            let av = self.a.apply(&v);
            let pv = self.psi.apply(&v);
            self.basis.push(&v, &av, &pv)?;
            if j + 1 == k {
                break;
            }
            let mut next = self.a.apply_adjoint(&av);
            let weighted: Vec<f64> = pv.iter().zip(&w).map(|(a, b)| a * b).collect();
            axpy(self.lambda, &self.psi.apply_adjoint(&weighted), &mut next);
            let before = norm(&next);
            cgs2(&self.basis.v, &mut next);
            let after = norm(&next);
            if !(after > DEPENDENT_TOL * before) {
                log::info!("Krylov breakdown, initial basis truncated to {}", j + 1);
                break;
            }
            scale_in_place(1.0 / after, &mut next);
            v = next;
        }
        self.resolve_pending = true;
        self.record(f64::INFINITY, monitor);
        Ok(())
    }

    /// Expands until the basis holds `k_max` vectors, the iteration budget is
    /// spent, or the relative change drops below `tol`.
    fn enlarge(&mut self, monitor: &mut dyn Monitor) -> Result<Option<StopReason>> {
        while self.basis.width() < self.cfg.k_max {
            if self.iter >= self.cfg.max_iters {
                return Ok(Some(StopReason::MaxIterations));
            }
            match self.step(monitor)? {
                Step::Breakdown => return Ok(Some(StopReason::ResidualBreakdown)),
                Step::Advanced { t1, conclusive: true } if t1 <= self.cfg.tol => {
                    log::debug!("enlarge exited early at iteration {}", self.iter);
                    return Ok(None);
                }
                Step::Advanced { .. } => {}
            }
        }
        Ok(None)
    }

    /// Mixes the basis down to `k_min` vectors that contain the iterate.
    fn compress(&mut self) -> Result<Vec<CompressionNote>> {
        if self.basis.width() < self.cfg.k_min {
            return Ok(Vec::new());
        }
        if self.z.is_empty() {
            // Seeded iterate outside the basis: nothing to compress yet.
            return Ok(Vec::new());
        }
        let w = self.weights();
        let rhs = self.projected_rhs();
        let r_psi = self.basis.refresh_psi(&w).r.clone();
        let factors = ProjectedFactors {
            r_a: &self.basis.qr_a.r,
            r_psi: &r_psi,
            rhs: &rhs,
            lambda: self.lambda,
        };
        let mixing = chi(&self.cfg.compression, &factors, self.cfg.k_min)?;
        for note in &mixing.notes {
            log::info!("compression: {note:?}");
        }
        let z = self.coefficients();
        let (c, contained) = reinjection_coefficients(&mixing.w, &z);
        if contained {
            log::debug!("iterate already in the compressed space");
        }
        self.z = c.tr_matvec(&z);
        self.basis.mix(&c)?;
        self.resolve_pending = true;
        Ok(mixing.notes)
    }

    fn finish(self, stop: StopReason, notes: Vec<CompressionNote>) -> (SolveOutcome, Offsets) {
        let counts = self.counts();
        (
            SolveOutcome {
                x: self.x,
                basis: self.basis,
                lambda: self.lambda,
                log: self.log,
                stop,
                notes,
            },
            counts,
        )
    }
}

/// MM-GKS: grows the basis by one residual direction per iteration until
/// `max_iters` steps, a relative change below `tol`, or breakdown. Without a
/// seed it starts from a Golub-Kahan space and its least-squares iterate.
pub fn mm_gks(
    a: &dyn LinearOperator,
    psi: &dyn LinearOperator,
    d: &[f64],
    cfg: &SolverConfig,
    seed: Option<&Seed>,
    monitor: &mut dyn Monitor,
) -> Result<SolveOutcome> {
    let mut st = State::new(a, psi, d, cfg, Offsets::default())?;
    match seed {
        Some(s) => st.seed_start(s)?,
        None => {
            st.golub_kahan_start(cfg.initial())?;
            st.least_squares_start();
        }
    }
    let mut stop = StopReason::MaxIterations;
    while st.iter < cfg.max_iters {
        match st.step(monitor)? {
            Step::Breakdown => {
                stop = StopReason::ResidualBreakdown;
                break;
            }
            Step::Advanced { t1, conclusive: true } if t1 <= cfg.tol => {
                stop = StopReason::Converged;
                break;
            }
            Step::Advanced { .. } => {}
        }
    }
    Ok(st.finish(stop, Vec::new()).0)
}

fn rmm_gks_inner(
    a: &dyn LinearOperator,
    psi: &dyn LinearOperator,
    d: &[f64],
    cfg: &SolverConfig,
    seed: Option<&Seed>,
    monitor: &mut dyn Monitor,
    carried: Offsets,
) -> Result<(SolveOutcome, Offsets)> {
    let mut st = State::new(a, psi, d, cfg, carried)?;
    match seed {
        Some(s) => st.seed_start(s)?,
        None => st.edge_encoded_start(monitor)?,
    }
    let mut notes = Vec::new();
    let mut stop = StopReason::MaxCycles;
    for cycle in 1..=cfg.outer_cycles {
        st.cycle = cycle;
        let start = st.x.clone();
        let exit = st.enlarge(monitor)?;
        notes.extend(st.compress()?);
        if let Some(reason) = exit {
            stop = reason;
            break;
        }
        if stopping_t1(&st.x, &start) <= cfg.tol {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(st.finish(stop, notes))
}

/// RMM-GKS: alternates enlarge (up to `k_max` vectors) and compress (down to
/// `k_min`) for `outer_cycles` cycles. Without a seed it builds the initial
/// basis from the edge-encoded Krylov space; with a seed it uses the given
/// basis and iterate directly.
pub fn rmm_gks(
    a: &dyn LinearOperator,
    psi: &dyn LinearOperator,
    d: &[f64],
    cfg: &SolverConfig,
    seed: Option<&Seed>,
    monitor: &mut dyn Monitor,
) -> Result<SolveOutcome> {
    Ok(rmm_gks_inner(a, psi, d, cfg, seed, monitor, Offsets::default())?.0)
}

/// One data block of a streaming problem.
#[derive(Clone)]
pub struct DataBlock {
    pub operator: SharedOperator,
    pub data: Vec<f64>,
}

/// State handed from one block to the next.
#[derive(Debug, Clone)]
pub struct BlockResult {
    pub block: usize,
    pub x: Vec<f64>,
    pub basis: DenseMatrix,
    pub lambda: f64,
    pub stop: StopReason,
}

/// Result of a streaming solve.
#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub log: Vec<IterationRecord>,
    /// Largest basis width over all blocks.
    pub peak: usize,
}

/// s-RMM-GKS: solves the blocks in order, each seeded by the compressed
/// basis and iterate of its predecessor. `on_block` sees the hand-off state
/// after every block.
pub fn s_rmm_gks<I>(
    blocks: I,
    psi: &dyn LinearOperator,
    cfg: &SolverConfig,
    monitor: &mut dyn Monitor,
    mut on_block: impl FnMut(&BlockResult) -> Result<()>,
) -> Result<StreamOutcome>
where
    I: IntoIterator<Item = DataBlock>,
{
    let mut carried = Offsets::default();
    let mut log = Vec::new();
    let mut handoff: Option<Seed> = None;
    let mut lambda = 0.0;
    let mut peak = 0;
    let mut iter_base = 0;
    for (j, block) in blocks.into_iter().enumerate() {
        let (mut out, counts) = rmm_gks_inner(
            block.operator.as_ref(),
            psi,
            &block.data,
            cfg,
            handoff.as_ref(),
            monitor,
            carried,
        )?;
        carried = counts;
        for r in &mut out.log {
            r.iter += iter_base;
        }
        iter_base = out.log.last().map_or(iter_base, |r| r.iter);
        log.append(&mut out.log);
        peak = peak.max(out.basis.peak());
        lambda = out.lambda;
        let result = BlockResult {
            block: j,
            x: out.x,
            basis: out.basis.v,
            lambda: out.lambda,
            stop: out.stop,
        };
        on_block(&result)?;
        handoff = Some(Seed {
            basis: result.basis,
            x: result.x,
        });
    }
    let last = handoff.ok_or_else(|| Error::InvalidArgument("no data blocks".into()))?;
    Ok(StreamOutcome {
        x: last.x,
        lambda,
        log,
        peak,
    })
}
