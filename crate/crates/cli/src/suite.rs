//! Fixed batteries run in parallel; results are sorted by case id.

use locclab::decomp::{self, Branch, DecompParams};
use locclab::isolation::{fourqubit_witness, theorem5_auto, weakly_isolated_seeded, ClassState};
use locclab::protocols::permute_sites;
use locclab::qtensor::linalg::det;
use locclab::qtensor::{apply_local, random, LocalOperator};
use locclab::sep::{
    build_system, feasible, feasible_exact, lemma4_boundary, lemma4_boundary_exact, scan_boundary, BigRational,
    ExactSystem, Mode, Verdict,
};
use locclab::states::{self, classify_literal, levi_civita, DiagonalFamilyParams, MA3Type};
use locclab::symmetry::{quasi_commute_residual, sample_family, solve_quasi_commuting, FourQubitCase, SymmetryFamily};
use locclab::{rng_from_seed, Rng};
use rayon::prelude::*;
use serde::Serialize;

use crate::inputs::Ctx;
use crate::report::{CliError, Outcome};
use crate::SuiteName;

type CaseFn = Box<dyn Fn(u64, usize, f64) -> Result<String, String> + Send + Sync>;

struct Case {
    id: String,
    draws: usize,
    run: CaseFn,
}

#[derive(Serialize)]
struct CaseResult {
    id: String,
    pass: bool,
    draws: usize,
    detail: String,
}

#[derive(Serialize)]
struct SuiteReport {
    suite: &'static str,
    seed: u64,
    cases: Vec<CaseResult>,
    passed: usize,
    failed: usize,
}

fn case(id: impl Into<String>, draws: usize, f: impl Fn(u64, usize, f64) -> Result<String, String> + Send + Sync + 'static) -> Case {
    Case { id: id.into(), draws, run: Box::new(f) }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Per-case seed derived from the suite seed and the case id.
fn case_seed(seed: u64, id: &str) -> u64 {
    id.bytes().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn run(name: SuiteName, draws: Option<usize>, ctx: &Ctx) -> Result<Outcome, CliError> {
    let seed = ctx.seed()?;
    let (label, cases) = match name {
        SuiteName::PaperIdentities => ("paper-identities", identities()),
        SuiteName::IsolationSurvey => ("isolation-survey", isolation_survey()),
        SuiteName::SepScan => ("sep-scan", sep_scan()),
        SuiteName::DecompSweep => ("decomp-sweep", decomp_sweep()),
    };
    let tol = ctx.tol;
    let mut results: Vec<CaseResult> = cases
        .par_iter()
        .map(|c| {
            let n = draws.unwrap_or(c.draws);
            let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| (c.run)(case_seed(seed, &c.id), n, tol)))
                .unwrap_or_else(|_| Err("panicked".into()));
            let (pass, detail) = match out {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CaseResult { id: c.id.clone(), pass, draws: n, detail }
        })
        .collect();
    results.sort_by(|a, b| a.id.cmp(&b.id));
    let passed = results.iter().filter(|r| r.pass).count();
    let failed = results.len() - passed;
    Outcome::new(SuiteReport { suite: label, seed, cases: results, passed, failed }, failed == 0)
}

fn identities() -> Vec<Case> {
    let mut cases = Vec::new();
    for n in 2..=5usize {
        cases.push(case(format!("antisymmetric-n{n}"), 100, move |seed, draws, _tol| {
            let a = states::antisymmetric(n).map_err(e)?;
            let scale = (1..=n).map(|k| k as f64).product::<f64>().sqrt();
            let mut lc = 0.0f64;
            for k in 0..a.len() {
                let got = a.amps()[k] * scale;
                lc = lc.max((got.re - levi_civita(&a.multi_index(k)) as f64).abs() + got.im.abs());
            }
            let mut swap = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.swap(i, j);
                    let b = permute_sites(&a, &perm).map_err(e)?;
                    swap = swap.max(b.amps().iter().zip(a.amps()).map(|(x, y)| (x + y).norm_sqr()).sum::<f64>().sqrt());
                }
            }
            let mut rng = rng_from_seed(seed);
            let mut dev = 0.0f64;
            for _ in 0..draws {
                let s = random::gaussian_matrix(&mut rng, n);
                let dt = det(&s);
                let out = apply_local(&LocalOperator::tensor_power(&s, n).map_err(e)?, &a).map_err(e)?;
                let d = out.amps().iter().zip(a.amps()).map(|(x, y)| (x - dt * y).norm_sqr()).sum::<f64>().sqrt();
                dev = dev.max(d / dt.norm().max(1.0));
            }
            ensure(lc <= 1e-14, || format!("Levi-Civita deviation {lc:e}"))?;
            ensure(swap < 1e-12, || format!("transposition residual {swap:e}"))?;
            ensure(dev < 1e-8, || format!("determinant identity residual {dev:e}"))?;
            Ok(format!("lc={lc:.1e} swap={swap:.1e} det={dev:.1e}"))
        }));
    }
    for (tag, ghz) in [("ghz", true), ("w", false)] {
        for n in 2..=6usize {
            let fam = if ghz { SymmetryFamily::Ghz { n } } else { SymmetryFamily::W { n } };
            let f2 = fam.clone();
            cases.push(case(format!("{tag}-n{n}-stabilizer"), 200, move |seed, draws, tol| {
                let s = fam.reference_state().ok_or("no reference state")?;
                let mut worst = 0.0f64;
                for k in 0..draws as u64 {
                    let op = sample_family(&fam, seed.wrapping_add(k)).map_err(e)?;
                    worst = worst.max(apply_local(&op, &s).map_err(e)?.distance(&s).map_err(e)?);
                }
                ensure(worst < tol, || format!("stabilizer residual {worst:e}"))?;
                Ok(format!("residual={worst:.1e}"))
            }));
            cases.push(case(format!("{tag}-n{n}-closed-form"), 100, move |seed, draws, tol| {
                let mut rng = rng_from_seed(seed);
                let required: Vec<usize> = (0..n - 1).collect();
                let mut worst = 0.0f64;
                for k in 0..draws as u64 {
                    let h: Vec<_> = (0..n).map(|_| random::positive_definite(&mut rng, 2)).collect();
                    let sols = solve_quasi_commuting(&f2, &h, &required, tol, k).map_err(e)?;
                    ensure(!sols.is_empty(), || "no closed-form solution".into())?;
                    for sol in &sols {
                        for &i in &required {
                            worst = worst.max(quasi_commute_residual(sol.symmetry.factor(i), &h[i]));
                        }
                    }
                }
                ensure(worst < tol, || format!("proportionality residual {worst:e}"))?;
                Ok(format!("residual={worst:.1e}"))
            }));
        }
    }
    cases
}

fn isolation_survey() -> Vec<Case> {
    let mut cases = Vec::new();
    let families: Vec<(String, SymmetryFamily, usize)> = (2..=6)
        .map(|n| (format!("free-ghz-n{n}"), SymmetryFamily::Ghz { n }, 200))
        .chain((2..=6).map(|n| (format!("free-w-n{n}"), SymmetryFamily::W { n }, 200)))
        .chain((2..=4).map(|d| (format!("free-tp-n3-d{d}"), SymmetryFamily::TensorPower { n: 3, d }, 1000)))
        .collect();
    for (id, fam, n) in families {
        cases.push(case(id, n, move |seed, draws, tol| {
            let mut rng = rng_from_seed(seed);
            let mut worst = 0.0f64;
            for k in 0..draws as u64 {
                let g: Vec<_> = fam.dims().iter().map(|&d| random::positive_definite(&mut rng, d)).collect();
                let cs = ClassState::new(fam.clone(), "random", g.clone()).map_err(e)?;
                let v = weakly_isolated_seeded(&cs, tol, k).map_err(e)?;
                ensure(!v.weakly_isolated, || format!("draw {k} is isolated"))?;
                let w = v.witness.ok_or("missing witness")?;
                for &i in &w.sites_satisfied {
                    worst = worst.max(quasi_commute_residual(w.symmetry.factor(i), &g[i]));
                }
            }
            ensure(worst < tol, || format!("witness residual {worst:e}"))?;
            Ok(format!("witness_residual={worst:.1e}"))
        }));
    }
    for d in [2usize, 3] {
        cases.push(case(format!("generic-n4-d{d}"), 10_000, move |seed, draws, tol| {
            let out = theorem5_auto(4, d, 0.5, tol, draws, seed).map_err(e)?;
            let r = &out.report;
            let probe = r.probe.as_ref();
            ensure(r.pass, || format!("conditions fail: c1={} c2={}", r.condition1, r.condition2))?;
            Ok(format!(
                "eps={:.2e} gapY={:.2e} gapZ={:.2e} best_probe={:.1e}",
                out.epsilon,
                r.y_min_gap,
                r.z_min_gap,
                probe.map_or(f64::NAN, |p| p.best_nontrivial_residual)
            ))
        }));
    }
    for c in [FourQubitCase::GabcdA, FourQubitCase::GabcdB, FourQubitCase::Labc2, FourQubitCase::La2b2] {
        cases.push(case(format!("fourqubit-{c:?}"), 1, move |seed, _draws, tol| {
            let (_, v) = fourqubit_witness(c, seed, tol).map_err(e)?;
            ensure(v.weakly_isolated, || "not isolated".into())?;
            Ok(format!("isolated reachable={}", v.reachable))
        }));
    }
    cases
}

fn log_param(rng: &mut Rng) -> f64 {
    random::log_uniform(rng, 0.1, 10.0)
}

fn rational(rng: &mut Rng) -> BigRational {
    use rand::Rng as _;
    BigRational::new(rng.random_range(1..60i64).into(), rng.random_range(1..20i64).into())
}

fn rational_params(rng: &mut Rng, kind: MA3Type) -> [BigRational; 4] {
    use num::{One, ToPrimitive};
    loop {
        let p = match kind {
            MA3Type::TypeII => [rational(rng), BigRational::one(), rational(rng), BigRational::one()],
            _ => [rational(rng), rational(rng), rational(rng), rational(rng)],
        };
        let f = |x: &BigRational| x.to_f64().unwrap_or(f64::NAN);
        let q = DiagonalFamilyParams { alpha1: f(&p[0]), beta1: f(&p[1]), alpha2: f(&p[2]), beta2: f(&p[3]) };
        if classify_literal(&q, 1e-12) == kind {
            return p;
        }
    }
}

fn sep_scan() -> Vec<Case> {
    use num::One;
    let mut cases = Vec::new();
    for (k, (target, a1p)) in [((2.0, 3.0), 4.0), ((3.0, 0.5), 2.0), ((0.5, 0.25), 3.0)].into_iter().enumerate() {
        // `draws` grid points on each side of the boundary, spaced 1e-3.
        cases.push(case(format!("boundary-scan-{k}"), 250, move |_seed, draws, tol| {
            let b = lemma4_boundary(target.0, target.1, a1p).map_err(e)?;
            let step = 1e-3;
            let half = step * draws.max(1) as f64;
            let centre = (b / step).round() * step;
            let s = scan_boundary(target, a1p, centre - half, centre + half, step, tol).map_err(e)?;
            ensure(s.pass, || format!("scan failed: {s:?}"))?;
            Ok(format!("boundary={} grid={}", s.exact_boundary, s.grid_points))
        }));
    }
    cases.push(case("exact-iii-to-ii", 200, |seed, draws, _tol| {
        let mut rng = rng_from_seed(seed);
        for _ in 0..draws {
            let init = rational_params(&mut rng, MA3Type::TypeIII);
            let t = rational_params(&mut rng, MA3Type::TypeII);
            let sys = ExactSystem::literal([t[0].clone(), t[2].clone()], init, BigRational::one()).map_err(e)?;
            ensure(feasible_exact(&sys).verdict == Verdict::Inconsistent, || "consistent instance".into())?;
        }
        Ok("all inconsistent".into())
    }));
    cases.push(case("exact-a3-target", 200, |seed, draws, _tol| {
        let mut rng = rng_from_seed(seed);
        let one = BigRational::one();
        for k in 0..draws {
            let kind = if k % 2 == 0 { MA3Type::TypeII } else { MA3Type::TypeIII };
            let init = rational_params(&mut rng, kind);
            let sys = ExactSystem::literal([one.clone(), one.clone()], init, one.clone()).map_err(e)?;
            ensure(feasible_exact(&sys).verdict == Verdict::Inconsistent, || "consistent instance".into())?;
        }
        Ok("all inconsistent".into())
    }));
    cases.push(case("exact-ii-off-boundary", 200, |seed, draws, _tol| {
        let mut rng = rng_from_seed(seed);
        let one = BigRational::one();
        let mut checked = 0;
        for _ in 0..draws {
            let t = rational_params(&mut rng, MA3Type::TypeII);
            let i = rational_params(&mut rng, MA3Type::TypeII);
            if lemma4_boundary_exact(&t[0], &t[2], &i[0]).map_err(e)? == i[2] {
                continue;
            }
            let fwd = ExactSystem::literal([t[0].clone(), t[2].clone()], i.clone(), one.clone()).map_err(e)?;
            let rev = ExactSystem::literal([i[0].clone(), i[2].clone()], t.clone(), one.clone()).map_err(e)?;
            ensure(feasible_exact(&fwd).verdict == Verdict::Inconsistent, || "forward consistent".into())?;
            ensure(feasible_exact(&rev).verdict == Verdict::Inconsistent, || "reverse consistent".into())?;
            checked += 1;
        }
        Ok(format!("checked={checked}"))
    }));
    cases.push(case("float-exact-agreement", 1000, |seed, draws, tol| {
        let mut rng = rng_from_seed(seed);
        for _ in 0..draws {
            let a = [log_param(&mut rng), log_param(&mut rng)];
            let i = [0; 4].map(|_| log_param(&mut rng));
            let p = DiagonalFamilyParams { alpha1: i[0], beta1: i[1], alpha2: i[2], beta2: i[3] };
            let sys = build_system((a[0], a[1]), &p, 1.0).map_err(e)?;
            let fl = feasible(&sys, Mode::Float { tol }).map_err(e)?.verdict;
            let ex = feasible_exact(&ExactSystem::from_float(&sys).map_err(e)?).verdict;
            ensure(fl == ex, || format!("disagree at {a:?} {i:?}"))?;
        }
        Ok("agree".into())
    }));
    cases
}

const CROSSOVER_TOL: f64 = 1e-7;

fn decomp_sweep() -> Vec<Case> {
    let mut cases = Vec::new();
    for (k, (lo, hi)) in [(1e-2, 1e2), (0.5, 2.0), (1e-2, 1e-1), (10.0, 1e2)].into_iter().enumerate() {
        cases.push(case(format!("log-uniform-{k}"), 250, move |seed, draws, tol| {
            let mut rng = rng_from_seed(seed);
            let (mut worst, mut branches) = (0.0f64, [0usize; 2]);
            for j in 0..draws {
                let mut v = [0.0; 4].map(|_| random::log_uniform(&mut rng, lo, hi));
                if j % 10 == 0 {
                    v[3] = v[2];
                }
                let p = DecompParams::new(v[0], v[1], v[2], v[3]).map_err(e)?;
                let r = decomp::verify_decomposition(&p, tol.max(1e-8)).map_err(e)?;
                ensure(r.pass, || format!("{v:?}: residual {:e}", r.residual))?;
                branches[(r.data.branch == Branch::BetaEqual) as usize] += 1;
                worst = worst.max(r.residual);
            }
            Ok(format!("generic={} equal={} residual={worst:.1e}", branches[0], branches[1]))
        }));
    }
    // Residual floor near 1e-8 where the generic and equal-beta branches cross.
    cases.push(case("near-equal-continuity", 20, |seed, draws, _tol| {
        let mut rng = rng_from_seed(seed);
        let mut worst = 0.0f64;
        for _ in 0..draws {
            let v = [0.0; 3].map(|_| random::log_uniform(&mut rng, 0.1, 10.0));
            for gap in [1e-4, 1e-7, 1e-9, 1e-12] {
                let p = DecompParams::new(v[0], v[1], v[2], v[2] * (1.0 + gap)).map_err(e)?;
                let r = decomp::verify_decomposition(&p, CROSSOVER_TOL).map_err(e)?;
                ensure(r.pass, || format!("{p:?}: residual {:e}", r.residual))?;
                worst = worst.max(r.residual);
            }
        }
        Ok(format!("residual={worst:.1e}"))
    }));
    cases
}
