//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num::{BigRational, One};
use rand::Rng as _;

use locclab::decomp::{self, Branch, DecompParams};
use locclab::isolation::{
    diagonal_class_state, loccn_reachable_seeded, theorem5_auto, weakly_isolated_seeded, ClassState,
};
use locclab::protocols::{self, observation4_chain, permute_sites, BUILTINS};
use locclab::qtensor::linalg::{det, eye};
use locclab::qtensor::{apply_local, proportional_states, random, LocalOperator};
use locclab::sep::{
    self, build_system, expansion_matrix, feasible, feasible_exact, lemma4_boundary, lemma4_boundary_exact,
    literal_matrix, scan_boundary, ExactSystem, Mode, Verdict,
};
use locclab::states::{self, classify_literal, levi_civita, DiagonalFamilyParams, MA3Type};
use locclab::symmetry::{quasi_commute_residual, sample_family, solve_quasi_commuting, SymmetryFamily};
use locclab::{rng_from_seed, Rng};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Debug>(err: E) -> String {
    format!("{err:?}")
}

fn antisymmetric_identities() -> Outcome {
    let mut worst_lc = 0.0f64;
    let mut worst_swap = 0.0f64;
    let mut worst_det = 0.0f64;
    let mut rng = rng_from_seed(101);
    for n in 2..=5usize {
        let a = states::antisymmetric(n).map_err(e)?;
        let scale = (1..=n).map(|k| k as f64).product::<f64>().sqrt();
        for k in 0..a.len() {
            let idx = a.multi_index(k);
            let want = levi_civita(&idx) as f64;
            let got = a.amps()[k] * scale;
            worst_lc = worst_lc.max((got.re - want).abs() + got.im.abs());
        }
        for i in 0..n {
            for j in i + 1..n {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.swap(i, j);
                let swapped = permute_sites(&a, &perm).map_err(e)?;
                let d: f64 =
                    swapped.amps().iter().zip(a.amps()).map(|(x, y)| (x + y).norm_sqr()).sum::<f64>().sqrt();
                worst_swap = worst_swap.max(d);
            }
        }
        for _ in 0..100 {
            let s = random::gaussian_matrix(&mut rng, n);
            let dt = det(&s);
            let out = apply_local(&LocalOperator::tensor_power(&s, n).map_err(e)?, &a).map_err(e)?;
            let d: f64 = out
                .amps()
                .iter()
                .zip(a.amps())
                .map(|(x, y)| (x - dt * y).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / dt.norm().max(1.0);
            worst_det = worst_det.max(d);
        }
    }
    ensure(worst_lc <= 1e-14, || format!("Levi-Civita deviation {worst_lc:e}"))?;
    ensure(worst_swap < 1e-12, || format!("transposition residual {worst_swap:e}"))?;
    ensure(worst_det < 1e-8, || format!("determinant identity residual {worst_det:e}"))?;
    Ok(format!("lc_dev={worst_lc:.1e} swap={worst_swap:.1e} det={worst_det:.1e}"))
}

fn stabilizer_families() -> Outcome {
    let mut worst = 0.0f64;
    let mut samples = 0;
    for (fi, make) in [|n| SymmetryFamily::Ghz { n }, |n| SymmetryFamily::W { n }].iter().enumerate() {
        for k in 0..1000u64 {
            let n = 2 + (k as usize % 5);
            let fam = make(n);
            let s = fam.reference_state().ok_or("no reference state")?;
            let op = sample_family(&fam, 10_000 * fi as u64 + k).map_err(e)?;
            let img = apply_local(&op, &s).map_err(e)?;
            let d: f64 = img.amps().iter().zip(s.amps()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(d);
            samples += 1;
        }
    }
    ensure(worst < 1e-9, || format!("stabilizer residual {worst:e}"))?;

    let mut rng = rng_from_seed(202);
    let mut worst_qc = 0.0f64;
    let mut solved = 0;
    for fam_kind in 0..2 {
        for k in 0..500u64 {
            let n = 2 + (k as usize % 5);
            let fam = if fam_kind == 0 { SymmetryFamily::Ghz { n } } else { SymmetryFamily::W { n } };
            let h: Vec<_> = (0..n).map(|_| random::positive_definite(&mut rng, 2)).collect();
            let required: Vec<usize> = (0..n - 1).collect();
            let sols = solve_quasi_commuting(&fam, &h, &required, 1e-9, k).map_err(e)?;
            ensure(!sols.is_empty(), || format!("{fam:?}: no closed-form solution"))?;
            for sol in &sols {
                for &i in &required {
                    worst_qc = worst_qc.max(quasi_commute_residual(sol.symmetry.factor(i), &h[i]));
                }
            }
            solved += 1;
        }
    }
    ensure(worst_qc < 1e-9, || format!("closed-form proportionality residual {worst_qc:e}"))?;
    Ok(format!("samples={samples} stab={worst:.1e} qc_instances={solved} qc={worst_qc:.1e}"))
}

fn isolation_free() -> Outcome {
    let mut rng = rng_from_seed(303);
    let mut worst = 0.0f64;
    let mut count = 0;
    let families: Vec<SymmetryFamily> = (2..=6)
        .map(|n| SymmetryFamily::Ghz { n })
        .chain((2..=6).map(|n| SymmetryFamily::W { n }))
        .chain((2..=4).map(|d| SymmetryFamily::TensorPower { n: 3, d }))
        .collect();
    for fam in &families {
        let draws = match fam {
            SymmetryFamily::TensorPower { .. } => 1000,
            _ => 200,
        };
        for k in 0..draws {
            let dims = fam.dims();
            let g: Vec<_> = dims.iter().map(|&d| random::positive_definite(&mut rng, d)).collect();
            let cs = ClassState::new(fam.clone(), "random", g.clone()).map_err(e)?;
            let v = weakly_isolated_seeded(&cs, 1e-9, k).map_err(e)?;
            ensure(!v.weakly_isolated, || format!("{fam:?} draw {k}: isolated"))?;
            let w = v.witness.ok_or("missing witness")?;
            ensure(w.nontrivial && w.sites_satisfied.len() + 1 >= dims.len(), || format!("{fam:?}: weak witness"))?;
            for &i in &w.sites_satisfied {
                worst = worst.max(quasi_commute_residual(w.symmetry.factor(i), &g[i]));
            }
            count += 1;
        }
    }
    ensure(worst < 1e-9, || format!("witness residual {worst:e}"))?;
    Ok(format!("draws={count} witness_residual={worst:.1e}"))
}

fn theorem5_witnesses() -> Outcome {
    let mut parts = Vec::new();
    for d in [2usize, 3] {
        let out = theorem5_auto(4, d, 0.5, 1e-9, 10_000, 4040 + d as u64).map_err(e)?;
        let r = &out.report;
        let probe = r.probe.as_ref().ok_or("no probe summary")?;
        ensure(r.condition1 && r.y_min_gap > 0.0 && r.z_min_gap > 0.0, || format!("d={d}: condition 1 {r:?}"))?;
        ensure(r.condition2 && r.designated_min_overlap > 0.0, || format!("d={d}: condition 2"))?;
        ensure(probe.probes == 10_000 && !probe.found, || format!("d={d}: probe found a solution"))?;
        ensure(r.pass, || format!("d={d}: report fails"))?;
        parts.push(format!(
            "d={d} eps={:.2e} gapY={:.2e} gapZ={:.2e} overlap={:.2e} best_probe={:.1e}",
            out.epsilon, r.y_min_gap, r.z_min_gap, r.designated_min_overlap, probe.best_nontrivial_residual
        ));
    }
    Ok(parts.join("; "))
}

fn random_type_two(rng: &mut Rng) -> DiagonalFamilyParams {
    loop {
        let p = DiagonalFamilyParams { alpha1: rng.random_range(0.1..10.0), beta1: 1.0, alpha2: rng.random_range(0.1..10.0), beta2: 1.0 };
        if classify_literal(&p, 1e-6) == MA3Type::TypeII {
            return p;
        }
    }
}

fn random_type_three(rng: &mut Rng) -> DiagonalFamilyParams {
    loop {
        let p = DiagonalFamilyParams {
            alpha1: rng.random_range(0.1..10.0),
            beta1: rng.random_range(0.1..10.0),
            alpha2: rng.random_range(0.1..10.0),
            beta2: rng.random_range(0.1..10.0),
        };
        if classify_literal(&p, 1e-6) == MA3Type::TypeIII {
            return p;
        }
    }
}

fn observation4() -> Outcome {
    let mut rng = rng_from_seed(505);
    let mut unreachable = 0;
    for kind in 0..3 {
        for k in 0..100u64 {
            let p = match kind {
                0 => DiagonalFamilyParams { alpha1: 1.0, beta1: 1.0, alpha2: 1.0, beta2: 1.0 },
                1 => random_type_two(&mut rng),
                _ => random_type_three(&mut rng),
            };
            let cs = diagonal_class_state(&p).map_err(e)?;
            let v = loccn_reachable_seeded(&cs, 1e-9, k).map_err(e)?;
            ensure(!v.reachable, || format!("{p:?} reported reachable"))?;
            unreachable += 1;
        }
    }
    let mut worst = 0.0f64;
    let mut max_rounds = 0;
    for _ in 0..100 {
        let a = random::gaussian_matrix(&mut rng, 3);
        let d2 = [random::log_uniform(&mut rng, 0.1, 10.0), random::log_uniform(&mut rng, 0.1, 10.0), 1.0];
        let chain = observation4_chain(&a, d2).map_err(e)?;
        max_rounds = max_rounds.max(chain.protocol.rounds.len());
        ensure(chain.protocol.rounds.len() <= 3, || "chain longer than three rounds".into())?;
        ensure(chain.source_residual < 1e-8, || format!("source residual {:e}", chain.source_residual))?;
        let input = chain.protocol.input.clone().ok_or("chain without input")?;
        let r = protocols::run(&chain.protocol, &input, 1e-8).map_err(e)?;
        let res = r.target_residual.ok_or("no target residual")?;
        worst = worst.max(res).max(r.leaf_residual);
        ensure(r.deterministic && res < 1e-8, || format!("leaf-vs-target residual {res:e}"))?;
    }
    Ok(format!("unreachable={unreachable} chains=100 max_rounds={max_rounds} residual={worst:.1e}"))
}

fn protocol_corpus() -> Outcome {
    let mut worst_c = 0.0f64;
    let mut worst_t = 0.0f64;
    for name in BUILTINS {
        let p = protocols::builtin(name, &serde_json::json!({})).map_err(e)?;
        let v = protocols::validate(&p, 1e-10).map_err(e)?;
        ensure(v.pass, || format!("{name}: validation failed"))?;
        worst_c = v.rounds.iter().map(|r| r.completeness_residual).fold(worst_c, f64::max);
        let input = p.input.clone().ok_or("builtin without input")?;
        let r = protocols::run(&p, &input, 1e-9).map_err(e)?;
        ensure(r.deterministic && r.matches_target == Some(true), || format!("{name}: {:?}", r.target_residual))?;
        worst_t = worst_t.max(r.target_residual.unwrap_or(f64::INFINITY));
    }
    let sec4 = protocols::sec4_threeround().map_err(e)?;
    let expected = apply_local(
        &LocalOperator::new(vec![
            protocols::sec4_h1(),
            locclab::qtensor::linalg::diag_real(&[5.0, 3.0, 1.0]),
            eye(3),
        ])
        .map_err(e)?,
        &states::antisymmetric(3).map_err(e)?,
    )
    .map_err(e)?;
    let declared = sec4.target.ok_or("sec4 without target")?;
    ensure(proportional_states(&declared, &expected, 1e-12).is_some(), || "sec4 target is not h1 (x) sqrt(D2)".into())?;
    Ok(format!("builtins={} completeness={worst_c:.1e} target={worst_t:.1e}", BUILTINS.len()))
}

fn rational(rng: &mut Rng) -> BigRational {
    BigRational::new(rng.random_range(1i64..60).into(), rng.random_range(1i64..12).into())
}

fn rational_params(rng: &mut Rng, kind: MA3Type) -> [BigRational; 4] {
    use num::ToPrimitive;
    loop {
        let one = BigRational::one();
        let v: [BigRational; 4] = match kind {
            MA3Type::TypeII => [rational(rng), one.clone(), rational(rng), one],
            _ => [rational(rng), rational(rng), rational(rng), rational(rng)],
        };
        let f = v.clone().map(|x| x.to_f64().unwrap());
        let p = DiagonalFamilyParams { alpha1: f[0], beta1: f[1], alpha2: f[2], beta2: f[3] };
        if classify_literal(&p, 1e-12) == kind {
            return v;
        }
    }
}

fn lemma4() -> Outcome {
    let mut rng = rng_from_seed(707);
    let one = BigRational::one();
    for _ in 0..200 {
        let init = rational_params(&mut rng, MA3Type::TypeIII);
        let t = rational_params(&mut rng, MA3Type::TypeII);
        let sys = ExactSystem::literal([t[0].clone(), t[2].clone()], init, one.clone()).map_err(e)?;
        ensure(feasible_exact(&sys).verdict == Verdict::Inconsistent, || "type-(iii) -> type-(ii) consistent".into())?;
    }
    for k in 0..200 {
        let kind = if k % 2 == 0 { MA3Type::TypeII } else { MA3Type::TypeIII };
        let init = rational_params(&mut rng, kind);
        let sys = ExactSystem::literal([one.clone(), one.clone()], init, one.clone()).map_err(e)?;
        ensure(feasible_exact(&sys).verdict == Verdict::Inconsistent, || "A_3 target consistent".into())?;
    }
    let mut off = 0;
    for _ in 0..200 {
        let t = rational_params(&mut rng, MA3Type::TypeII);
        let i = rational_params(&mut rng, MA3Type::TypeII);
        let b = lemma4_boundary_exact(&t[0], &t[2], &i[0]).map_err(e)?;
        if b == i[2] {
            continue;
        }
        let fwd = ExactSystem::literal([t[0].clone(), t[2].clone()], i.clone(), one.clone()).map_err(e)?;
        let rev = ExactSystem::literal([i[0].clone(), i[2].clone()], t.clone(), one.clone()).map_err(e)?;
        ensure(feasible_exact(&fwd).verdict == Verdict::Inconsistent, || "forward off-boundary consistent".into())?;
        ensure(feasible_exact(&rev).verdict == Verdict::Inconsistent, || "reverse off-boundary consistent".into())?;
        off += 1;
    }
    let mut scans = 0;
    for (target, a1p) in [((2.0, 3.0), 4.0), ((3.0, 0.5), 2.0), ((0.5, 0.25), 3.0)] {
        let b = lemma4_boundary(target.0, target.1, a1p).map_err(e)?;
        let lo = (b * 1000.0).round() / 1000.0 - 0.25;
        let s = scan_boundary(target, a1p, lo, lo + 0.5, 1e-3, 1e-9).map_err(e)?;
        ensure(s.pass, || format!("scan {target:?}, {a1p}: {s:?}"))?;
        scans += 1;
    }
    let mut agree = 0;
    for _ in 0..1000 {
        let t = [rational(&mut rng), rational(&mut rng)];
        let i = [rational(&mut rng), rational(&mut rng), rational(&mut rng), rational(&mut rng)];
        let ex = ExactSystem::literal(t.clone(), i.clone(), one.clone()).map_err(e)?;
        let f = |x: &BigRational| num::ToPrimitive::to_f64(x).unwrap();
        let fl = build_system(
            (f(&t[0]), f(&t[1])),
            &DiagonalFamilyParams { alpha1: f(&i[0]), beta1: f(&i[1]), alpha2: f(&i[2]), beta2: f(&i[3]) },
            1.0,
        )
        .map_err(e)?;
        let v = feasible(&fl, Mode::Float { tol: 1e-9 }).map_err(e)?.verdict;
        ensure(v == feasible_exact(&ex).verdict, || format!("float/exact disagree at {t:?} {i:?}"))?;
        agree += 1;
    }
    Ok(format!("iii_to_ii=200 a3_target=200 ii_off_boundary={off} scans={scans} float_exact_agree={agree}"))
}

fn decomposition() -> Outcome {
    let mut rng = rng_from_seed(808);
    let (mut worst_res, mut worst_sum, mut worst_u, mut worst_comm) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut branches = [0usize; 2];
    for k in 0..1000 {
        let mut v = [0.0; 4].map(|_| random::log_uniform(&mut rng, 1e-2, 1e2));
        if k % 10 == 0 {
            v[3] = v[2];
        }
        let p = DecompParams::new(v[0], v[1], v[2], v[3]).map_err(e)?;
        let r = decomp::verify_decomposition(&p, 1e-8).map_err(e)?;
        if let Some(chi) = r.data.chi {
            ensure(2.0 * chi - 1.0 >= -1e-12, || format!("{p:?}: 2chi-1 = {:e}", 2.0 * chi - 1.0))?;
        }
        ensure(r.pass, || format!("{p:?}: residual {:e}", r.residual))?;
        branches[(r.data.branch == Branch::BetaEqual) as usize] += 1;
        worst_res = worst_res.max(r.residual);
        worst_sum = worst_sum.max(r.lambda_sum_residual);
        worst_u = worst_u.max(r.u2_unitarity).max(r.u3_unitarity);
        worst_comm = worst_comm.max(r.gate_commutator);
    }
    ensure(branches[0] > 0 && branches[1] > 0, || "a branch was not exercised".into())?;
    ensure(worst_sum < 1e-12, || format!("lambda sum {worst_sum:e}"))?;
    ensure(worst_u < 1e-9, || format!("unitarity {worst_u:e}"))?;
    ensure(worst_comm < 1e-12, || format!("commutator {worst_comm:e}"))?;
    Ok(format!(
        "generic={} equal={} residual={worst_res:.1e} lambda_sum={worst_sum:.1e} unitarity={worst_u:.1e} commutator={worst_comm:.1e}",
        branches[0], branches[1]
    ))
}

fn expansion_oracle() -> Outcome {
    let mut rng = rng_from_seed(909);
    for _ in 0..20 {
        let (a1, a2) = (rng.random_range(0.01..50.0), rng.random_range(0.01..50.0));
        let lit = literal_matrix(&a1, &a2);
        let exp = expansion_matrix(&[a1, 1.0, 1.0], &[a2, 1.0, 1.0]);
        ensure(lit == exp, || format!("mismatch at ({a1}, {a2})"))?;
        let (q1, q2) = (rational(&mut rng), rational(&mut rng));
        let one = BigRational::one();
        ensure(
            literal_matrix(&q1, &q2) == expansion_matrix(&[q1.clone(), one.clone(), one.clone()], &[q2, one.clone(), one]),
            || "exact mismatch".into(),
        )?;
    }
    let mut worst = 0.0f64;
    for k in 0..20 {
        let s = sample_family(&SymmetryFamily::TensorPower { n: 3, d: 3 }, 9000 + k).map_err(e)?;
        worst = worst.max(sep::aggregation_defect(&s).map_err(e)?);
    }
    ensure(worst < 1e-12, || format!("aggregation defect {worst:e}"))?;
    Ok(format!("draws=20 entrywise_equal=true aggregation_defect={worst:.1e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("antisymmetric identities", antisymmetric_identities),
        ("stabilizer families", stabilizer_families),
        ("isolation-free families", isolation_free),
        ("weak-isolation witnesses", theorem5_witnesses),
        ("diagonal family reachability and chains", observation4),
        ("protocol corpus", protocol_corpus),
        ("separable-map feasibility", lemma4),
        ("preparation circuit", decomposition),
        ("coefficient matrix vs expansion", expansion_oracle),
    ];
    let results: Vec<(Outcome, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(_, f)| {
                let f = *f;
                scope.spawn(move || {
                    let t = Instant::now();
                    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
                        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
                    });
                    (out, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread")).collect()
    });
    let mut failed = 0;
    for (k, ((name, _), (out, secs))) in criteria.iter().zip(results).enumerate() {
        match out {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}) [{secs:.1}s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({why}) [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
