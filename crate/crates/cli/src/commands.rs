use locclab::decomp::{self, DecompParams};
use locclab::isolation::{
    fourqubit_witness, theorem5_auto, theorem5_witness, verify_theorem5_conditions, weakly_isolated_seeded, ClassState,
};
use locclab::protocols::{self, Protocol};
use locclab::qtensor::json::matrix_list;
use locclab::qtensor::linalg::herm_eig;
use locclab::qtensor::{apply_local, is_fully_entangled, reduced_density};
use locclab::sep::{
    self, build_system, feasible, feasible_exact, lemma4_boundary, lemma4_boundary_exact, parse_rational,
    rational_to_string, scan_boundary, BigRational, ExactSystem, Mode, SepCertificate, SepVerdict,
};
use locclab::states::{canonicalize_m_a3, m_a3_state, parse_state_spec, DiagonalFamilyParams, MA3Type, CLASSIFY_TOL};
use locclab::symmetry::{sample_family, solve_quasi_commuting, verify_symmetry, FourQubitCase, SymmetryFamily};
use locclab::{CMat, PureState};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::inputs::{floats, sites, Ctx};
use crate::report::{CliError, Outcome};
use crate::{Command, DecompArgs, DecompCmd, IsolationCmd, ProtocolCmd, SepCmd, StateCmd, SymmetryCmd};

type Res = Result<Outcome, CliError>;

pub fn dispatch(cmd: &Command, ctx: &Ctx) -> Res {
    match cmd {
        Command::State(c) => state(c, ctx),
        Command::Symmetry(c) => symmetry(c, ctx),
        Command::Isolation(c) => isolation(c, ctx),
        Command::Protocol(c) => protocol(c, ctx),
        Command::Sep(c) => sep_cmd(c, ctx),
        Command::Decomp(c) => decomp_cmd(c, ctx),
        Command::Suite(a) => crate::suite::run(a.name, a.draws, ctx),
    }
}

fn family_params(s: &str) -> Result<DiagonalFamilyParams, CliError> {
    let v = floats(s, 4)?;
    Ok(DiagonalFamilyParams::new(v[0], v[1], v[2], v[3])?)
}

fn state(cmd: &StateCmd, ctx: &Ctx) -> Res {
    match cmd {
        StateCmd::Build { spec } => {
            let s = ctx.state(spec)?;
            let spectra = (0..s.n_sites())
                .map(|k| Ok(herm_eig(&reduced_density(&s, k)?)?.values))
                .collect::<Result<Vec<_>, CliError>>()?;
            Outcome::new(
                json!({
                    "state": s,
                    "norm": s.norm(),
                    "local_spectra": spectra,
                    "fully_entangled": is_fully_entangled(&s, ctx.tol),
                }),
                true,
            )
        }
        StateCmd::Classify { params } => {
            let p = family_params(params)?;
            let c = canonicalize_m_a3(&p, CLASSIFY_TOL);
            Outcome::new(
                json!({
                    "params": p,
                    "kind": c.kind,
                    "canonical_params": c.params,
                    "basis_perm": c.perm,
                    "state": m_a3_state(&p)?,
                }),
                c.kind != MA3Type::NotInM,
            )
        }
    }
}

#[derive(Deserialize)]
struct MatrixList(#[serde(with = "matrix_list")] Vec<CMat>);

#[derive(Deserialize)]
struct GField {
    #[serde(rename = "G", alias = "H", with = "matrix_list")]
    g: Vec<CMat>,
}

/// A JSON list of matrices or an object carrying one under `G`/`H`.
fn matrices(ctx: &Ctx, arg: &str) -> Result<Vec<CMat>, CliError> {
    let v = ctx.json(arg)?;
    let parsed = if v.is_object() {
        serde_json::from_value::<GField>(v).map(|g| g.g)
    } else {
        serde_json::from_value::<MatrixList>(v).map(|m| m.0)
    };
    parsed.map_err(|e| CliError::usage(format!("matrix list: {e}")))
}

fn family(desc: &str, ctx: &Ctx) -> Result<SymmetryFamily, CliError> {
    let t = desc.trim();
    if !t.starts_with('{') && std::path::Path::new(t).is_file() {
        let v = ctx.json(t)?;
        let f: SymmetryFamily = serde_json::from_value(v).map_err(|e| CliError::usage(format!("family: {e}")))?;
        f.validate()?;
        return Ok(f);
    }
    Ok(SymmetryFamily::parse(t)?)
}

fn symmetry(cmd: &SymmetryCmd, ctx: &Ctx) -> Res {
    match cmd {
        SymmetryCmd::Verify { op, state } => {
            let op = ctx.operator(op)?;
            let s = ctx.state(state)?;
            if op.dims() != s.dims() {
                return Err(CliError::usage(format!("operator dims {:?}, state dims {:?}", op.dims(), s.dims())));
            }
            let image = apply_local(&op, &s)?;
            let residual = image.distance(&s)?;
            let factor = verify_symmetry(&op, &s, ctx.tol);
            let stabilizes = residual <= ctx.tol;
            Outcome::new(
                json!({ "eigen_factor": factor.map(|c| [c.re, c.im]), "residual": residual, "stabilizes": stabilizes }),
                stabilizes,
            )
        }
        SymmetryCmd::Sample { family: desc, count } => {
            let fam = family(desc, ctx)?;
            let seed = ctx.seed()?;
            let reference = fam.reference_state();
            let mut samples = Vec::with_capacity(*count);
            let mut worst = 0.0f64;
            for k in 0..*count as u64 {
                let op = sample_family(&fam, seed.wrapping_add(k))?;
                let residual = match &reference {
                    Some(s) => Some(apply_local(&op, s)?.distance(s)?),
                    None => None,
                };
                worst = worst.max(residual.unwrap_or(0.0));
                samples.push(json!({ "operator": op, "residual": residual }));
            }
            Outcome::new(
                json!({ "family": fam, "reference_state": reference.is_some(), "max_residual": worst, "samples": samples }),
                worst <= ctx.tol,
            )
        }
        SymmetryCmd::Solve { family: desc, h, required } => {
            let fam = family(desc, ctx)?;
            let h = matrices(ctx, h)?;
            let required = match required {
                Some(r) => sites(r)?,
                None => (0..fam.n_sites()).collect(),
            };
            let sols = solve_quasi_commuting(&fam, &h, &required, ctx.tol, ctx.seed()?)?;
            let found = !sols.is_empty();
            Outcome::new(
                json!({
                    "family": fam,
                    "required": required.iter().map(|s| s + 1).collect::<Vec<_>>(),
                    "solutions": sols,
                }),
                found,
            )
        }
    }
}

fn isolation(cmd: &IsolationCmd, ctx: &Ctx) -> Res {
    match cmd {
        IsolationCmd::Check { family: desc, g } => {
            let fam = family(desc, ctx)?;
            let cs = ClassState::new(fam, "input", matrices(ctx, g)?)?;
            let v = weakly_isolated_seeded(&cs, ctx.tol, ctx.seed()?)?;
            let isolated = v.weakly_isolated;
            Outcome::new(json!({ "class_state": cs, "verdict": v }), isolated)
        }
        IsolationCmd::Theorem5 { n, d, r, eps, probes } => {
            let seed = ctx.seed()?;
            match eps {
                Some(eps) => {
                    let cs = theorem5_witness(*n, *d, *r, *eps)?;
                    let report = verify_theorem5_conditions(&cs, ctx.tol, *probes, seed)?;
                    let pass = report.pass;
                    Outcome::new(
                        json!({ "class_state": cs, "epsilon": eps, "halvings": 0, "report": report }),
                        pass,
                    )
                }
                None => {
                    let out = theorem5_auto(*n, *d, *r, ctx.tol, *probes, seed)?;
                    let pass = out.report.pass;
                    Outcome::new(out, pass)
                }
            }
        }
        IsolationCmd::Fourqubit { case } => {
            let case: FourQubitCase = case.parse()?;
            let (cs, v) = fourqubit_witness(case, ctx.seed()?, ctx.tol)?;
            let isolated = v.weakly_isolated;
            Outcome::new(json!({ "case": case, "class_state": cs, "verdict": v }), isolated)
        }
    }
}

/// A bare protocol, or a report whose result carries one under `protocol`.
fn load_protocol(ctx: &Ctx, file: &str) -> Result<Protocol, CliError> {
    let mut v = ctx.json(file)?;
    if let Some(inner) = v.pointer("/result/protocol") {
        v = inner.clone();
    }
    serde_json::from_value(v).map_err(|e| CliError::usage(format!("protocol: {e}")))
}

fn protocol(cmd: &ProtocolCmd, ctx: &Ctx) -> Res {
    match cmd {
        ProtocolCmd::Validate { file } => {
            let p = load_protocol(ctx, file)?;
            let v = protocols::validate(&p, ctx.tol)?;
            let pass = v.pass;
            Outcome::new(v, pass)
        }
        ProtocolCmd::Run { file, input } => {
            let p = load_protocol(ctx, file)?;
            let input: PureState = match (input, &p.input) {
                (Some(s), _) => ctx.state(s)?,
                (None, Some(s)) => s.clone(),
                (None, None) => return Err(CliError::usage("protocol has no input; pass --input")),
            };
            let validation = protocols::validate(&p, ctx.tol)?;
            let run = protocols::run(&p, &input, ctx.tol)?;
            let pass = validation.pass && run.deterministic && run.matches_target != Some(false);
            Outcome::new(json!({ "validation": validation, "run": run }), pass)
        }
        ProtocolCmd::Builtin { name, params, out } => {
            let params = match params {
                Some(p) => ctx.json(p)?,
                None => json!({}),
            };
            let p = protocols::builtin(name, &params).map_err(|e| match e {
                locclab::Error::Parse(_) => CliError::usage(format!("{e}; known: {}", protocols::BUILTINS.join(", "))),
                other => other.into(),
            })?;
            let validation = protocols::validate(&p, ctx.tol)?;
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&p).map_err(|e| CliError::numerical(e.to_string()))?;
                std::fs::write(path, text + "\n").map_err(|e| CliError::usage(format!("cannot write {path}: {e}")))?;
            }
            let pass = validation.pass;
            Outcome::new(json!({ "name": name, "protocol": p, "validation": validation }), pass)
        }
    }
}

fn sep_cmd(cmd: &SepCmd, ctx: &Ctx) -> Res {
    match cmd {
        SepCmd::Feasibility { initial, target, r, exact } => {
            if *exact {
                let q = |s: &str, n: usize| -> Result<Vec<_>, CliError> {
                    let v = s.split(',').map(|x| parse_rational(x.trim())).collect::<Result<Vec<_>, _>>()?;
                    if v.len() != n {
                        return Err(CliError::usage(format!("expected {n} comma-separated values in {s:?}")));
                    }
                    Ok(v)
                };
                let i = q(initial, 4)?;
                let t = q(target, 2)?;
                let r = parse_rational(r.as_deref().unwrap_or("1"))?;
                let sys = ExactSystem::literal(
                    [t[0].clone(), t[1].clone()],
                    [i[0].clone(), i[1].clone(), i[2].clone(), i[3].clone()],
                    r.clone(),
                )?;
                let f = feasible_exact(&sys);
                let consistent = f.is_consistent();
                let text = |v: &[BigRational]| v.iter().map(rational_to_string).collect::<Vec<_>>();
                Outcome::new(
                    json!({
                        "initial": text(&i),
                        "target": text(&t),
                        "r": rational_to_string(&r),
                        "matrix": sys.m.iter().map(|row| text(row)).collect::<Vec<_>>(),
                        "rhs": text(&sys.rhs),
                        "feasibility": f,
                    }),
                    consistent,
                )
            } else {
                let init = family_params(initial)?;
                let t = floats(target, 2)?;
                let r = match r {
                    Some(s) => s.trim().parse::<f64>().map_err(|e| CliError::usage(format!("--r: {e}")))?,
                    None => 1.0,
                };
                let sys = build_system((t[0], t[1]), &init, r)?;
                let f = feasible(&sys, Mode::Float { tol: ctx.tol })?;
                let consistent = f.is_consistent();
                Outcome::new(json!({ "system": sys, "feasibility": f }), consistent)
            }
        }
        SepCmd::Report { initial, target } => {
            let rep = sep::lemma4_report(&family_params(initial)?, &family_params(target)?, ctx.tol)?;
            let allowed = rep.forward.verdict == SepVerdict::NecessaryConditionPasses;
            Outcome::new(rep, allowed)
        }
        SepCmd::Boundary { target, alpha1p, scan } => {
            let t = floats(target, 2)?;
            let a1p: f64 = alpha1p.trim().parse().map_err(|e| CliError::usage(format!("--alpha1p: {e}")))?;
            let boundary = lemma4_boundary(t[0], t[1], a1p)?;
            let exact = {
                let parts: Vec<&str> = target.split(',').map(str::trim).collect();
                let a1 = parse_rational(parts[0])?;
                let a2 = parse_rational(parts[1])?;
                rational_to_string(&lemma4_boundary_exact(&a1, &a2, &parse_rational(alpha1p.trim())?)?)
            };
            let scan = match scan {
                Some(s) => {
                    let v = floats(s, 3)?;
                    Some(scan_boundary((t[0], t[1]), a1p, v[0], v[1], v[2], ctx.tol)?)
                }
                None => None,
            };
            let pass = scan.as_ref().is_none_or(|s| s.pass);
            Outcome::new(
                json!({
                    "target": [t[0], t[1]],
                    "alpha1p": a1p,
                    "boundary": boundary,
                    "exact_boundary": exact,
                    "scan": scan,
                }),
                pass,
            )
        }
        SepCmd::VerifyCert { file, g, h, seed_state } => {
            let cert: SepCertificate = serde_json::from_value(ctx.json(file)?)
                .map_err(|e| CliError::usage(format!("certificate: {e}")))?;
            let label = seed_state.as_deref().or(ctx.seed_label()).unwrap_or("A3");
            let seed = parse_state_spec(label).or_else(|_| ctx.state(label))?;
            let g = ctx.operator(g)?;
            let h = ctx.operator(h)?;
            let rep = sep::verify_certificate(&cert, &g, &h, &seed, ctx.tol)?;
            let pass = rep.pass;
            Outcome::new(json!({ "seed_state": label, "report": rep }), pass)
        }
    }
}

fn decomp_params(a: &DecompArgs) -> Result<DecompParams, CliError> {
    let v = floats(&a.params, 4)?;
    if a.family_order {
        let fam = DiagonalFamilyParams::new(v[0], v[1], v[2], v[3])?;
        return Ok(DecompParams::from_family(&fam));
    }
    Ok(DecompParams::new(v[0], v[1], v[2], v[3])?)
}

fn decomp_cmd(cmd: &DecompCmd, ctx: &Ctx) -> Res {
    match cmd {
        DecompCmd::Verify(a) => {
            let rep = decomp::verify_decomposition(&decomp_params(a)?, ctx.tol)?;
            let pass = rep.pass;
            Outcome::new(rep, pass)
        }
        DecompCmd::Show(a) => {
            let p = decomp_params(a)?;
            let data = decomp::decompose(&p)?;
            let v: Value = json!({
                "params": p,
                "family_params": p.to_family(),
                "data": data,
                "state": p.state()?,
                "circuit_state": decomp::circuit_state(&data)?,
            });
            Outcome::new(v, true)
        }
    }
}
