//! Config-driven experiment runner.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! output = "out/deblur"          # overridden by $RMMGKS_OUTPUT_DIR
//!
//! [problem]
//! kind = "deblur"                # identity | deblur | tomography | stream | dynamic
//! n = 64
//! sigma = 0.01
//! seed = 7
//! psf = { kind = "motion", length = 9, angle = 30.0 }
//!
//! [solver]
//! method = "rmm-gks"             # mm-gks | rmm-gks | s-rmm-gks
//! psi = "tv2d"                   # tv2d | tv2d+t | identity
//! epsilon = 1e-2
//! q = 1.0
//! k_min = 5
//! k_max = 25
//! max_iters = 200
//! compression = "tsvd"           # tsvd | rbd | soc | sec
//! lambda = { mode = "gcv", grid = [1e-12, 1e2, 60] }
//! ```
//!
//! Outputs: `log.csv`, `reconstruction.{rimg,pgm}`, `truth.{rimg,pgm}`, and
//! checkpoints (`block_NN.rgks` per streaming block, `final.rgks` for
//! RMM-GKS). Identical configs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::compression::{CompressionKind, CompressionParams, CompressionStrategy};
use crate::error::{Error, Result};
use crate::formats::{save_image, Checkpoint, RawImage};
use crate::linalg::DenseMatrix;
use crate::mm::{LambdaGrid, LambdaRule};
use crate::operators::{IdentityOperator, LinearOperator, SharedOperator};
use crate::problems::{
    add_noise, angle_range, deblur_problem, dynamic_problem, gaussian_psf, motion_psf,
    phantom_shepp, rre, ssim, tomography_stream, StreamProblem, TestProblem,
};
use crate::regularizers::{make_identity, make_psi_2d, make_psi_dynamic, RegularizerOperator};
use crate::solvers::{
    mm_gks, rmm_gks, s_rmm_gks, IterationRecord, Monitor, Quality, SolverConfig, StopReason,
};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_ENV: &str = "RMMGKS_OUTPUT_DIR";

/// Pinned column order of `log.csv`.
pub const LOG_HEADER: [&str; 13] = [
    "iter", "cycle", "basis_k", "lambda", "objective", "t1", "rre", "ssim", "mv_a", "mv_at",
    "mv_psi", "mv_psit", "ms",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub verbosity: Option<String>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Identity,
    Deblur,
    Tomography,
    Stream,
    Dynamic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PsfSpec {
    Motion { length: usize, angle: f64 },
    Gaussian { size: usize, sigma: f64 },
}

impl Default for PsfSpec {
    fn default() -> Self {
        PsfSpec::Motion {
            length: 9,
            angle: 30.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub psf: PsfSpec,
    /// `[start, end, step]` in degrees (tomography).
    #[serde(default)]
    pub angles: Option<[f64; 3]>,
    /// One `[start, end, step]` per data block (stream).
    #[serde(default)]
    pub blocks: Option<Vec<[f64; 3]>>,
    /// Solve only this block (1-based) of a stream problem.
    #[serde(default)]
    pub only_block: Option<usize>,
    /// Number of frames and projection angles per frame (dynamic).
    #[serde(default)]
    pub frames: Option<usize>,
    #[serde(default)]
    pub angles_per_frame: Option<usize>,
}

fn default_n() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Method {
    #[serde(rename = "mm-gks")]
    MmGks,
    #[serde(rename = "rmm-gks")]
    RmmGks,
    #[serde(rename = "s-rmm-gks")]
    SRmmGks,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::MmGks => "mm-gks",
            Method::RmmGks => "rmm-gks",
            Method::SRmmGks => "s-rmm-gks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum PsiSpec {
    #[serde(rename = "tv2d")]
    Tv2d,
    #[serde(rename = "tv2d+t")]
    Tv2dTime,
    #[serde(rename = "identity")]
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Gcv,
    Fixed,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSpec {
    pub mode: LambdaMode,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    grid: Option<[Number; 3]>,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self {
            mode: LambdaMode::Gcv,
            value: None,
            grid: None,
        }
    }
}

impl LambdaSpec {
    pub fn rule(&self) -> Result<LambdaRule> {
        match self.mode {
            LambdaMode::Fixed => self
                .value
                .map(LambdaRule::Fixed)
                .ok_or_else(|| Error::Config("lambda.mode = \"fixed\" needs lambda.value".into())),
            LambdaMode::Gcv => {
                let grid = match self.grid {
                    None => LambdaGrid::default(),
                    Some([lo, hi, count]) => {
                        let count = count.as_f64();
                        if count.fract() != 0.0 || count < 2.0 {
                            return Err(Error::Config(format!("lambda.grid count {count}")));
                        }
                        let (min, max) = (lo.as_f64(), hi.as_f64());
                        if !(min > 0.0 && max > min) {
                            return Err(Error::Config(format!("lambda.grid range [{min}, {max}]")));
                        }
                        LambdaGrid {
                            min,
                            max,
                            count: count as usize,
                        }
                    }
                };
                Ok(LambdaRule::Gcv(grid))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbdSpec {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_dim: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecSpec {
    #[serde(default)]
    pub iters: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_psi")]
    pub psi: PsiSpec,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default = "default_compression")]
    pub compression: CompressionKind,
    #[serde(default)]
    pub rbd: Option<RbdSpec>,
    #[serde(default)]
    pub soc: Option<RbdSpec>,
    #[serde(default)]
    pub sec: Option<SecSpec>,
    #[serde(default)]
    pub initial_steps: Option<usize>,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_cycles")]
    pub outer_cycles: usize,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub record_time: bool,
}

fn default_method() -> Method {
    Method::RmmGks
}
fn default_psi() -> PsiSpec {
    PsiSpec::Tv2d
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_q() -> f64 {
    1.0
}
fn default_compression() -> CompressionKind {
    CompressionKind::Tsvd
}
fn default_k_min() -> usize {
    5
}
fn default_k_max() -> usize {
    25
}
fn default_cycles() -> usize {
    100
}
fn default_iters() -> usize {
    200
}
fn default_tol() -> f64 {
    1e-3
}

impl Default for SolverSpec {
    fn default() -> Self {
        toml::from_str("").expect("all solver fields have defaults")
    }
}

impl SolverSpec {
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut params = CompressionParams::default();
        if let Some(r) = &self.rbd {
            params.rbd_tol = r.tol.unwrap_or(params.rbd_tol);
            params.rbd_max_dim = r.max_dim;
        }
        if let Some(s) = &self.soc {
            params.soc_tol = s.tol.unwrap_or(params.soc_tol);
            params.soc_max_dim = s.max_dim;
        }
        if let Some(s) = &self.sec {
            params.sec_inner_iters = s.iters.unwrap_or(params.sec_inner_iters);
            params.sec_epsilon = s.epsilon.unwrap_or(params.sec_epsilon);
        }
        let cfg = SolverConfig {
            initial_steps: self.initial_steps,
            k_min: self.k_min,
            k_max: self.k_max,
            outer_cycles: self.outer_cycles,
            max_iters: self.max_iters,
            tol: self.tol,
            epsilon: self.epsilon,
            q: self.q,
            lambda: self.lambda.rule()?,
            compression: CompressionStrategy {
                kind: self.compression,
                params,
            },
            record_time: self.record_time,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.solver.solver_config()?;
        if cfg.solver.method == Method::SRmmGks && cfg.problem.kind != ProblemKind::Stream {
            return Err(Error::Config("s-rmm-gks needs a stream problem".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Output directory after applying the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.clone(),
        }
    }

    /// Short label used in comparison tables.
    pub fn label(&self) -> String {
        let s = &self.solver;
        match s.method {
            Method::MmGks => format!("mm-gks (k={})", s.max_iters + s.initial_steps.unwrap_or(s.k_min)),
            m => format!("{} {}", m.name(), s.compression.name()),
        }
    }
}

/// Problem data ready for a solver.
pub enum Instance {
    Single(TestProblem),
    Stream(StreamProblem),
}

fn angles_of(spec: &[f64; 3]) -> Vec<f64> {
    angle_range(spec[0], spec[1], spec[2])
}

/// Interleaved angle sets: frame `t` sees angles `(t + k·n_t)·Δ` with
/// `Δ = 180 / (n_t · per_frame)`.
pub fn dynamic_angles(frames: usize, per_frame: usize) -> Vec<Vec<f64>> {
    let step = 180.0 / (frames * per_frame) as f64;
    (0..frames)
        .map(|t| (0..per_frame).map(|k| (t + k * frames) as f64 * step).collect())
        .collect()
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Instance> {
    let n = spec.n;
    match spec.kind {
        ProblemKind::Identity => {
            let x_true = phantom_shepp(n)?;
            let op: SharedOperator = Arc::new(IdentityOperator::new(n * n));
            let (data, _) = add_noise(&x_true, spec.sigma, spec.seed)?;
            Ok(Instance::Single(TestProblem {
                operator: op,
                x_true,
                n_x: n,
                n_y: n,
                n_t: 1,
                data,
                sigma: spec.sigma,
                seed: spec.seed,
            }))
        }
        ProblemKind::Deblur => {
            let psf: DenseMatrix = match spec.psf {
                PsfSpec::Motion { length, angle } => motion_psf(length, angle)?,
                PsfSpec::Gaussian { size, sigma } => gaussian_psf(size, sigma)?,
            };
            Ok(Instance::Single(deblur_problem(n, &psf, spec.sigma, spec.seed)?))
        }
        ProblemKind::Tomography => {
            let angles = angles_of(&spec.angles.unwrap_or([0.0, 180.0, 2.0]));
            let s = tomography_stream(n, &[angles], spec.sigma, spec.seed)?;
            Ok(Instance::Single(s.stacked()?))
        }
        ProblemKind::Stream => {
            let blocks: Vec<Vec<f64>> = spec
                .blocks
                .as_ref()
                .ok_or_else(|| Error::Config("stream problem needs problem.blocks".into()))?
                .iter()
                .map(angles_of)
                .collect();
            let s = tomography_stream(n, &blocks, spec.sigma, spec.seed)?;
            match spec.only_block {
                None => Ok(Instance::Stream(s)),
                Some(j) if (1..=s.blocks.len()).contains(&j) => {
                    let only = StreamProblem {
                        blocks: vec![s.blocks[j - 1].clone()],
                        ..s
                    };
                    Ok(Instance::Single(only.stacked()?))
                }
                Some(j) => Err(Error::Config(format!("only_block = {j} out of range"))),
            }
        }
        ProblemKind::Dynamic => {
            let frames = spec.frames.unwrap_or(4);
            let per = spec.angles_per_frame.unwrap_or(15);
            Ok(Instance::Single(dynamic_problem(n, &dynamic_angles(frames, per), spec.sigma, spec.seed)?))
        }
    }
}

pub fn build_regularizer(psi: PsiSpec, n_x: usize, n_y: usize, n_t: usize) -> Result<RegularizerOperator> {
    match (psi, n_t) {
        (PsiSpec::Identity, _) => Ok(make_identity(n_x * n_y * n_t)),
        (PsiSpec::Tv2d, 1) => make_psi_2d(n_x, n_y),
        (PsiSpec::Tv2d, _) => Err(Error::Config("psi = \"tv2d\" needs a single frame; use \"tv2d+t\"".into())),
        (PsiSpec::Tv2dTime, 1) => Err(Error::Config("psi = \"tv2d+t\" needs several frames".into())),
        (PsiSpec::Tv2dTime, _) => make_psi_dynamic(n_x, n_y, n_t),
    }
}

/// Reports RRE and frame-averaged SSIM against the ground truth.
pub struct TruthMonitor<'a> {
    pub x_true: &'a [f64],
    pub n_x: usize,
    pub n_y: usize,
}

impl TruthMonitor<'_> {
    pub fn quality(&self, x: &[f64]) -> Quality {
        let f = self.n_x * self.n_y;
        let frames = self.x_true.len() / f;
        let s: f64 = (0..frames)
            .map(|t| {
                ssim(&x[t * f..(t + 1) * f], &self.x_true[t * f..(t + 1) * f], self.n_x, self.n_y)
                    .expect("frame sizes match")
            })
            .sum();
        Quality {
            rre: Some(rre(x, self.x_true)),
            ssim: Some(s / frames as f64),
        }
    }
}

impl Monitor for TruthMonitor<'_> {
    fn observe(&mut self, x: &[f64]) -> Quality {
        self.quality(x)
    }
}

/// Writes the iteration log with the pinned header.
pub fn write_log(w: impl Write, log: &[IterationRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LOG_HEADER).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in log {
        out.write_record([
            r.iter.to_string(),
            r.cycle.to_string(),
            r.basis_k.to_string(),
            r.lambda.to_string(),
            r.objective.to_string(),
            r.t1.to_string(),
            opt(r.rre),
            opt(r.ssim),
            r.mv_a.to_string(),
            r.mv_at.to_string(),
            r.mv_psi.to_string(),
            r.mv_psit.to_string(),
            r.ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Final figures of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub sigma: f64,
    pub iterations: usize,
    pub peak_basis: usize,
    pub rre: f64,
    pub ssim: f64,
    pub stop: Option<StopReason>,
    pub output: PathBuf,
}

/// Executes one configuration and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    run_in(cfg, &cfg.output_dir())
}

/// Like [`run`] with an explicit output directory.
pub fn run_in(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let solver = cfg.solver.solver_config()?;
    let instance = build_problem(&cfg.problem)?;
    let (x_true, n_x, n_y, n_t) = match &instance {
        Instance::Single(p) => (p.x_true.clone(), p.n_x, p.n_y, p.n_t),
        Instance::Stream(s) => (s.x_true.clone(), s.n, s.n, 1),
    };
    let psi = build_regularizer(cfg.solver.psi, n_x, n_y, n_t)?;
    let mut monitor = TruthMonitor {
        x_true: &x_true,
        n_x,
        n_y,
    };
    log::info!("running {} on {:?} n = {}", cfg.label(), cfg.problem.kind, cfg.problem.n);

    let (x, log, peak, stop) = match (&instance, cfg.solver.method) {
        (Instance::Stream(s), Method::SRmmGks) => {
            let out_ref = out;
            let outcome = s_rmm_gks(s.blocks.clone(), &psi, &solver, &mut monitor, |b| {
                log::info!("block {} done: {:?}", b.block + 1, b.stop);
                Checkpoint {
                    basis: b.basis.clone(),
                    x: b.x.clone(),
                    lambda: b.lambda,
                }
                .save(&out_ref.join(format!("block_{:02}.rgks", b.block + 1)))
            })?;
            (outcome.x, outcome.log, outcome.peak, None)
        }
        (inst, method) => {
            let p;
            let (a, d): (&dyn LinearOperator, &[f64]) = match inst {
                Instance::Single(t) => (t.operator.as_ref(), &t.data),
                Instance::Stream(s) => {
                    p = s.stacked()?;
                    (p.operator.as_ref(), &p.data)
                }
            };
            let o = match method {
                Method::MmGks => mm_gks(a, &psi, d, &solver, None, &mut monitor)?,
                _ => {
                    let o = rmm_gks(a, &psi, d, &solver, None, &mut monitor)?;
                    Checkpoint {
                        basis: o.basis.v().clone(),
                        x: o.x.clone(),
                        lambda: o.lambda,
                    }
                    .save(&out.join("final.rgks"))?;
                    o
                }
            };
            (o.x, o.log, o.basis.peak(), Some(o.stop))
        }
    };

    let mut f = std::io::BufWriter::new(fs::File::create(out.join("log.csv"))?);
    write_log(&mut f, &log)?;
    f.flush()?;
    save_image(out, "reconstruction", &RawImage::new(n_x, n_y, n_t, x.clone())?)?;
    save_image(out, "truth", &RawImage::new(n_x, n_y, n_t, x_true.clone())?)?;

    let q = monitor.quality(&x);
    Ok(RunSummary {
        label: cfg.label(),
        sigma: cfg.problem.sigma,
        iterations: log.iter().filter(|r| r.cycle > 0 || cfg.solver.method == Method::MmGks).count(),
        peak_basis: peak,
        rre: q.rre.unwrap_or(f64::NAN),
        ssim: q.ssim.unwrap_or(f64::NAN),
        stop,
        output: out.to_path_buf(),
    })
}

/// Runs several configurations and tabulates final RRE and SSIM.
pub fn compare(configs: &[(String, RunConfig)]) -> Result<Vec<RunSummary>> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    let seed = configs[0].1.problem.seed;
    if configs.iter().any(|(_, c)| c.problem.seed != seed) {
        return Err(Error::Config("compared configs must share the problem seed".into()));
    }
    let override_dir = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty());
    configs
        .iter()
        .map(|(name, cfg)| {
            let dir = match &override_dir {
                Some(root) => Path::new(root).join(name),
                None => cfg.output.clone(),
            };
            run_in(cfg, &dir)
        })
        .collect()
}

/// Long-form CSV: one row per run.
pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut s = String::from("label,sigma,iterations,peak_basis,rre,ssim\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.label, r.sigma, r.iterations, r.peak_basis, r.rre, r.ssim
        ));
    }
    s
}

/// Markdown table with one row per method and one column per noise level;
/// cells hold `RRE / SSIM`.
pub fn summary_markdown(rows: &[RunSummary]) -> String {
    let mut sigmas: Vec<f64> = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !sigmas.contains(&r.sigma) {
            sigmas.push(r.sigma);
        }
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let mut s = String::from("| method |");
    for sg in &sigmas {
        s.push_str(&format!(" σ = {sg} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(sigmas.len()));
    s.push('\n');
    for l in labels {
        s.push_str(&format!("| {l} |"));
        for sg in &sigmas {
            match rows.iter().find(|r| r.label == l && r.sigma == *sg) {
                Some(r) => s.push_str(&format!(" {:.4} / {:.4} |", r.rre, r.ssim)),
                None => s.push_str(" |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Human-readable description of a checkpoint file.
pub fn describe_checkpoint(c: &Checkpoint) -> String {
    let v = &c.basis;
    let xn = crate::linalg::norm(&c.x);
    let mut resid = c.x.clone();
    crate::linalg::cgs2(v, &mut resid);
    let outside = if xn > 0.0 { crate::linalg::norm(&resid) / xn } else { 0.0 };
    format!(
        "n = {}\nk = {}\nlambda = {:e}\n‖x‖ = {:e}\northonormality error = {:e}\nrelative part of x outside span = {:e}\n",
        v.rows(),
        v.cols(),
        c.lambda,
        xn,
        v.orthonormality_error(),
        outside
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [problem]
        kind = "identity"
        n = 16
        [solver]
        method = "mm-gks"
        psi = "identity"
        q = 2.0
        lambda = { mode = "fixed", value = 0.1 }
    "#;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.problem.kind, ProblemKind::Identity);
        assert_eq!(c.solver.method, Method::MmGks);
        assert_eq!(c.solver.solver_config().unwrap().lambda, LambdaRule::Fixed(0.1));
    }

    #[test]
    fn lambda_grid_accepts_integer_count() {
        let c = RunConfig::parse(
            "[problem]\nkind = \"identity\"\n[solver]\nlambda = { mode = \"gcv\", grid = [1e-8, 10, 30] }\n",
        )
        .unwrap();
        let rule = c.solver.solver_config().unwrap().lambda;
        assert_eq!(
            rule,
            LambdaRule::Gcv(LambdaGrid {
                min: 1e-8,
                max: 10.0,
                count: 30
            })
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::parse("[problem]\nkind = \"nope\"\n").is_err());
        assert!(RunConfig::parse("[problem]\nkind = \"identity\"\n[solver]\nbogus = 1\n").is_err());
        assert!(RunConfig::parse(
            "[problem]\nkind = \"identity\"\n[solver]\nlambda = { mode = \"fixed\" }\n"
        )
        .is_err());
        assert!(RunConfig::parse(
            "[problem]\nkind = \"identity\"\n[solver]\nmethod = \"s-rmm-gks\"\n"
        )
        .is_err());
        assert!(RunConfig::parse("[problem]\nkind = \"identity\"\n[solver]\nk_min = 9\nk_max = 9\n").is_err());
    }

    #[test]
    fn compression_parameters_reach_strategy() {
        let c = RunConfig::parse(
            "[problem]\nkind = \"identity\"\n[solver]\ncompression = \"rbd\"\nrbd = { tol = 1e-3, max_dim = 3 }\n",
        )
        .unwrap();
        let s = c.solver.solver_config().unwrap().compression;
        assert_eq!(s.kind, CompressionKind::Rbd);
        assert_eq!(s.params.rbd_tol, 1e-3);
        assert_eq!(s.params.rbd_max_dim, Some(3));
    }

    #[test]
    fn interleaved_dynamic_angles() {
        let a = dynamic_angles(2, 3);
        assert_eq!(a[0], vec![0.0, 60.0, 120.0]);
        assert_eq!(a[1], vec![30.0, 90.0, 150.0]);
    }

    #[test]
    fn log_header_is_pinned() {
        let mut buf = Vec::new();
        write_log(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iter,cycle,basis_k,lambda,objective,t1,rre,ssim,mv_a,mv_at,mv_psi,mv_psit,ms\n"
        );
    }

    #[test]
    fn markdown_pivots_on_noise() {
        let row = |label: &str, sigma: f64| RunSummary {
            label: label.into(),
            sigma,
            iterations: 1,
            peak_basis: 1,
            rre: 0.1,
            ssim: 0.9,
            stop: None,
            output: PathBuf::new(),
        };
        let md = summary_markdown(&[row("a", 0.001), row("a", 0.01), row("b", 0.001)]);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("σ = 0.001") && lines[0].contains("σ = 0.01"));
    }
}
