//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p rmmgks --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rmmgks::compression::{chi, CompressionKind, CompressionStrategy, ProjectedFactors};
use rmmgks::harness::{run_in, RunConfig};
use rmmgks::linalg::{axpy, DenseMatrix};
use rmmgks::mm::{eval_majorant, eval_objective, objective_lambda, LambdaRule};
use rmmgks::operators::DenseOperator;
use rmmgks::problems::{deblur_problem, motion_psf};
use rmmgks::regularizers::make_psi_2d;
use rmmgks::solvers::{mm_gks, rmm_gks, Monitor, NoMonitor, Quality, Seed, SolverConfig};

type Outcome = Result<String, String>;

/// Name, check and time budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Recorder(Vec<Vec<f64>>);

impl Monitor for Recorder {
    fn observe(&mut self, x: &[f64]) -> Quality {
        self.0.push(x.to_vec());
        Quality::default()
    }
}

fn conditioned(g: &mut TestRng, n: usize) -> DenseMatrix {
    let mut a = rand_matrix(g, n, n);
    a.scale(0.3);
    for i in 0..n {
        a[(i, i)] += 2.0;
    }
    a
}

fn majorant_suite() -> Outcome {
    let n = 32;
    let p = deblur_problem(n, &motion_psf(9, 30.0).unwrap(), 0.01, 7).unwrap();
    let a = p.operator.as_ref();
    let psi = make_psi_2d(n, n).unwrap();
    let d = &p.data;
    let (lambda, eps, q) = (0.05, 1e-2, 1.0);
    let mut g = rng(1);
    let mut v = p.x_true.clone();
    axpy(0.05, &randn(&mut g, n * n), &mut v);

    let jv = eval_objective(a, &psi, d, &v, lambda, eps, q).total;
    let qv = eval_majorant(a, &psi, d, &v, &v, lambda, eps, q);
    let touch = (qv - jv).abs() / jv;
    ensure!(touch <= 1e-10, "Q(v,v) differs from J(v) by {touch:e}");

    // Central differences of J and Q(·, v) along random directions at v.
    let mut tangency: f64 = 0.0;
    for _ in 0..5 {
        let dir = randn(&mut g, n * n);
        let h = 1e-5;
        let shifted = |s: f64| {
            let mut x = v.clone();
            axpy(s, &dir, &mut x);
            x
        };
        let (xp, xm) = (shifted(h), shifted(-h));
        let dj = (eval_objective(a, &psi, d, &xp, lambda, eps, q).total
            - eval_objective(a, &psi, d, &xm, lambda, eps, q).total)
            / (2.0 * h);
        let dq = (eval_majorant(a, &psi, d, &xp, &v, lambda, eps, q)
            - eval_majorant(a, &psi, d, &xm, &v, lambda, eps, q))
            / (2.0 * h);
        tangency = tangency.max((dj - dq).abs() / dj.abs().max(1.0));
    }
    ensure!(tangency <= 1e-5, "directional derivatives differ by {tangency:e}");

    let mut worst = f64::INFINITY;
    for s in 0..200 {
        let mut x = v.clone();
        axpy(10f64.powf(-3.0 + 3.0 * (s as f64) / 200.0), &randn(&mut g, n * n), &mut x);
        let gap = eval_majorant(a, &psi, d, &x, &v, lambda, eps, q) - eval_objective(a, &psi, d, &x, lambda, eps, q).total;
        worst = worst.min(gap / jv);
    }
    ensure!(worst >= -1e-12, "Q(x,v) < J(x) by {:e} relative", -worst);
    Ok(format!("touch {touch:.1e}, tangency {tangency:.1e}, min Q−J {worst:.1e}"))
}

fn irls_descent() -> Outcome {
    let mut g = rng(2);
    let n = 49;
    let a = DenseOperator::new(conditioned(&mut g, n));
    let psi = make_psi_2d(7, 7).unwrap();
    let d = randn(&mut g, n);
    let mut detail = Vec::new();
    for q in [1.0, 0.5] {
        let (mu, eps) = (0.5, 1e-2);
        let cfg = SolverConfig {
            initial_steps: Some(n),
            max_iters: 60,
            tol: 1e-300,
            epsilon: eps,
            q,
            lambda: LambdaRule::Fixed(mu),
            ..Default::default()
        };
        let mut rec = Recorder(Vec::new());
        let out = mm_gks(&a, &psi, &d, &cfg, None, &mut rec).unwrap();
        let first = out.log.iter().position(|r| r.basis_k == n).ok_or("basis never filled ℝⁿ")?;
        let lam = objective_lambda(mu, q);
        let values: Vec<f64> = rec.0[first..]
            .iter()
            .map(|x| eval_objective(&a, &psi, &d, x, lam, eps, q).total)
            .collect();
        ensure!(values.len() > 50, "only {} full-space updates", values.len() - 1);
        let uphill = values.windows(2).map(|w| (w[1] - w[0]) / w[0].abs()).fold(f64::NEG_INFINITY, f64::max);
        ensure!(uphill <= 1e-12, "q = {q}: J rose by {uphill:e}");
        detail.push(format!("q={q} max step {uphill:.1e}"));
    }
    Ok(detail.join(", "))
}

fn equivalence() -> Outcome {
    let mut g = rng(3);
    let n = 30;
    let a = DenseOperator::new(conditioned(&mut g, n));
    let psi = make_psi_2d(5, 6).unwrap();
    let d = randn(&mut g, n);
    let basis = orth(&rand_matrix(&mut g, n, 3));
    let x = basis.matvec(&randn(&mut g, 3));
    let seed = Seed { basis, x };
    let cfg = SolverConfig {
        k_min: 3,
        k_max: 40,
        outer_cycles: 1,
        max_iters: 20,
        tol: 1e-300,
        ..Default::default()
    };
    let (mut mm, mut rmm) = (Recorder(Vec::new()), Recorder(Vec::new()));
    mm_gks(&a, &psi, &d, &cfg, Some(&seed), &mut mm).unwrap();
    rmm_gks(&a, &psi, &d, &cfg, Some(&seed), &mut rmm).unwrap();
    ensure!(mm.0.len() == 20 && rmm.0.len() == 20, "iterate counts {} and {}", mm.0.len(), rmm.0.len());
    let gap = mm.0.iter().zip(&rmm.0).map(|(p, q)| rel_diff(p, q)).fold(0.0, f64::max);
    ensure!(gap <= 1e-10, "iterates differ by {gap:e}");
    Ok(format!("20 iterates, max relative gap {gap:.1e}"))
}

fn compression_contracts() -> Outcome {
    let (k_max, k_min) = (25, 5);
    let mut g = rng(4);
    let mut eckart_young: f64 = 0.0;
    let mut worst = (0.0f64, 0.0f64);
    for kind in [CompressionKind::Tsvd, CompressionKind::Rbd, CompressionKind::Soc, CompressionKind::Sec] {
        let strategy = CompressionStrategy::new(kind);
        for i in 0..10 {
            let inst = random_projected(&mut g, k_max);
            let r = check_contract(&strategy, &inst, k_min);
            ensure!(
                r.width == k_min || (r.contained && r.width == k_min - 1),
                "{} instance {i}: width {}",
                kind.name(),
                r.width
            );
            ensure!(r.orthonormality <= 1e-10, "{} instance {i}: orthonormality {:e}", kind.name(), r.orthonormality);
            ensure!(r.containment <= 1e-10, "{} instance {i}: containment {:e}", kind.name(), r.containment);
            worst = (worst.0.max(r.orthonormality), worst.1.max(r.containment));

            if kind == CompressionKind::Tsvd {
                let f = ProjectedFactors {
                    r_a: &inst.r_a,
                    r_psi: &inst.r_psi,
                    rhs: &inst.rhs,
                    lambda: inst.lambda,
                };
                let keep = k_min - 1;
                let w = to_na(&chi(&strategy, &f, k_min).unwrap().w);
                let h = to_na(&f.stacked());
                let tail = (&h - &h * &w * w.transpose()).norm();
                let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
                sv.sort_by(|p, q| q.total_cmp(p));
                let oracle = sv[keep..].iter().map(|s| s * s).sum::<f64>().sqrt();
                let err = (tail - oracle).abs() / oracle;
                ensure!(err <= 1e-9, "tsvd instance {i}: tail {tail} vs {oracle}");
                eckart_young = eckart_young.max(err);
            }
        }
    }
    Ok(format!(
        "40 instances, orthonormality {:.1e}, containment {:.1e}, tSVD tail {eckart_young:.1e}",
        worst.0, worst.1
    ))
}

const DEBLUR: &str = r#"
[problem]
kind = "deblur"
n = 64
sigma = 0.01
seed = 7
psf = { kind = "motion", length = 9, angle = 30.0 }

[solver]
psi = "tv2d"
k_min = 5
k_max = 25
tol = 1e-12
"#;

fn run_toml(text: &str, dir: &Path) -> rmmgks::harness::RunSummary {
    let cfg = RunConfig::parse(text).unwrap();
    run_in(&cfg, dir).unwrap()
}

fn memory_bound() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let reference = run_toml(
        &format!("{DEBLUR}method = \"mm-gks\"\ninitial_steps = 5\nmax_iters = 20\n"),
        &tmp.path().join("mm"),
    );
    ensure!(reference.peak_basis == 25, "reference MM-GKS held {} vectors", reference.peak_basis);
    let mut cells = vec![format!("MM-GKS@25 {:.4}", reference.rre)];
    let mut failures = Vec::new();
    for kind in ["tsvd", "rbd", "soc", "sec"] {
        let s = run_toml(
            &format!("{DEBLUR}method = \"rmm-gks\"\nmax_iters = 200\ncompression = \"{kind}\"\n"),
            &tmp.path().join(kind),
        );
        cells.push(format!("{kind} {:.4}", s.rre));
        if s.peak_basis != 25 {
            failures.push(format!("{kind} peak {}", s.peak_basis));
        }
        if s.iterations != 200 {
            failures.push(format!("{kind} ran {} iterations", s.iterations));
        }
        if s.rre > 1.05 * reference.rre {
            failures.push(format!("{kind} RRE {:.4} > 1.05 × {:.4}", s.rre, reference.rre));
        }
    }
    let detail = format!("peak 25 of 200, RRE {}", cells.join(", "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn stream_toml(sigma: f64, method: &str, only_block: Option<usize>) -> String {
    let only = only_block.map(|b| format!("only_block = {b}\n")).unwrap_or_default();
    format!(
        r#"
[problem]
kind = "stream"
n = 64
sigma = {sigma}
seed = 11
blocks = [[0, 45, 1], [45, 90, 1], [90, 180, 2]]
{only}
[solver]
method = "{method}"
psi = "tv2d"
k_min = 5
k_max = 25
max_iters = 200
tol = 1e-12
"#
    )
}

/// RRE of block 1 alone, s-RMM-GKS over all blocks, and RMM-GKS on the
/// stacked data.
fn stream_orderings(sigma: f64) -> Result<(f64, f64, f64), String> {
    let tmp = tempfile::tempdir().unwrap();
    let first = run_toml(&stream_toml(sigma, "rmm-gks", Some(1)), &tmp.path().join("first"));
    let streamed = run_toml(&stream_toml(sigma, "s-rmm-gks", None), &tmp.path().join("stream"));
    let stacked = run_toml(&stream_toml(sigma, "rmm-gks", None), &tmp.path().join("stacked"));
    let (b1, s, st) = (first.rre, streamed.rre, stacked.rre);
    let summary = format!("σ={sigma}: block1 {b1:.4}, streamed {s:.4}, stacked {st:.4}");
    ensure!(s < b1 / 2.0, "streaming gain under 2 ({summary})");
    ensure!(st <= s, "stacked worse than streamed ({summary})");
    Ok((b1, s, st))
}

fn streaming() -> Outcome {
    let (b1, s, st) = stream_orderings(0.001)?;
    Ok(format!("block1 {b1:.4}, streamed {s:.4} (gain {:.2}), stacked {st:.4}", b1 / s))
}

fn noise_sweep() -> Outcome {
    let mut cells = Vec::new();
    for sigma in [0.001, 0.005, 0.01] {
        let (b1, s, st) = stream_orderings(sigma)?;
        cells.push(format!("σ={sigma} {b1:.3}/{s:.3}/{st:.3}"));
    }
    Ok(format!("block1/streamed/stacked {}", cells.join(", ")))
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Outcome {
    let configs = [
        ("rmm-gks", DEBLUR.replace("n = 64", "n = 32") + "method = \"rmm-gks\"\nmax_iters = 60\ncompression = \"rbd\"\n"),
        ("s-rmm-gks", stream_toml(0.005, "s-rmm-gks", None).replace("n = 64", "n = 32").replace("max_iters = 200", "max_iters = 60")),
    ];
    let mut checked = 0;
    for (name, text) in configs {
        let tmp = tempfile::tempdir().unwrap();
        let (p, q) = (tmp.path().join("a"), tmp.path().join("b"));
        run_toml(&text, &p);
        run_toml(&text, &q);
        let (fa, fb) = (read_dir(&p), read_dir(&q));
        ensure!(fa.keys().eq(fb.keys()), "{name}: different file sets");
        ensure!(fa.contains_key("log.csv"), "{name}: no log.csv");
        ensure!(fa.keys().any(|k| k.ends_with(".rgks")), "{name}: no checkpoint");
        for (file, bytes) in &fa {
            ensure!(bytes == &fb[file], "{name}: {file} differs between runs");
            checked += 1;
        }
    }
    Ok(format!("{checked} files byte-identical across repeated runs"))
}

fn cost_ledger() -> Outcome {
    let n = 32;
    let p = deblur_problem(n, &motion_psf(9, 30.0).unwrap(), 0.01, 7).unwrap();
    let psi = make_psi_2d(n, n).unwrap();
    let cfg = SolverConfig {
        k_min: 5,
        k_max: 25,
        max_iters: 100,
        tol: 1e-12,
        ..Default::default()
    };
    let s = (cfg.k_max - cfg.k_min) as u64;
    let out = rmm_gks(p.operator.as_ref(), &psi, &p.data, &cfg, None, &mut NoMonitor).unwrap();
    let last = out.log.iter().map(|r| r.cycle).max().unwrap_or(0);
    let mut full = 0;
    for c in 1..=last {
        let before = out.log.iter().rev().find(|r| r.cycle < c).ok_or("no row before cycle")?;
        let rows: Vec<_> = out.log.iter().filter(|r| r.cycle == c).collect();
        let end = rows.last().unwrap();
        if rows.len() as u64 != s || end.basis_k != cfg.k_max {
            continue;
        }
        let delta = [
            end.mv_a - before.mv_a,
            end.mv_at - before.mv_at,
            end.mv_psi - before.mv_psi,
            end.mv_psit - before.mv_psit,
        ];
        ensure!(delta == [s; 4], "cycle {c}: A, Aᵀ, Ψ, Ψᵀ counts {delta:?}, expected {s} each");
        full += 1;
    }
    ensure!(full >= 3, "only {full} full cycles");
    Ok(format!("{full} full cycles, {s} applications each of A, Aᵀ, Ψ, Ψᵀ per cycle"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("majorant conditions", majorant_suite, 10),
        ("IRLS descent", irls_descent, 5),
        ("MM-GKS/RMM-GKS equivalence", equivalence, 5),
        ("compression contracts", compression_contracts, 10),
        ("memory bound and RRE ordering", memory_bound, 180),
        ("streaming ordering", streaming, 300),
        ("noise robustness sweep", noise_sweep, 900),
        ("determinism", determinism, 300),
        ("cost ledger", cost_ledger, 60),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t.elapsed();
        let result = match result {
            Ok(detail) if elapsed > Duration::from_secs(budget) => {
                Err(format!("over the {budget} s budget; {detail}"))
            }
            r => r,
        };
        let secs = elapsed.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
