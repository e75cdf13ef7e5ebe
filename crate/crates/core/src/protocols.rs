//! Finite-round LOCC protocols: model, validator, simulator and built-ins.
//!
//! Parties are 0-indexed in memory and 1-indexed in JSON. Each round has one
//! acting party with a Kraus list; outcome `k` is followed by the unitaries
//! `corrections[k][j]` on every site `j` (the acting site normally holds the
//! identity). Leaves are compared up to proportionality.

use serde::{Deserialize, Serialize};

use crate::qtensor::json::MatrixRepr;
use crate::qtensor::linalg::{
    self, clock, cr, dagger, diag_real, eye, fro, matrix_power, phase_aligned_distance, shift, unitarity_residual,
    CMat, C64,
};
use crate::qtensor::{apply_local, apply_site, LocalOperator, PureState};
use crate::states::{self, canonicalize_m_a3, diagonal_a3_state, m_a3_state, Canonical, DiagonalFamilyParams, MA3Type};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Round {
    pub party: usize,
    pub kraus: Vec<CMat>,
    /// Per outcome, one matrix per site; empty means no corrections.
    pub corrections: Vec<Vec<CMat>>,
}

#[derive(Serialize, Deserialize)]
struct RoundRepr {
    party: usize,
    kraus: Vec<MatrixRepr>,
    #[serde(default)]
    corrections: Vec<Vec<MatrixRepr>>,
}

impl Serialize for Round {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RoundRepr {
            party: self.party + 1,
            kraus: self.kraus.iter().map(MatrixRepr::from).collect(),
            corrections: self.corrections.iter().map(|c| c.iter().map(MatrixRepr::from).collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Round {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = RoundRepr::deserialize(d)?;
        if r.party == 0 {
            return Err(D::Error::custom("parties are numbered from 1"));
        }
        let kraus = r.kraus.into_iter().map(MatrixRepr::into_square).collect::<Result<Vec<_>>>();
        let corrections = r
            .corrections
            .into_iter()
            .map(|c| c.into_iter().map(MatrixRepr::into_square).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>();
        Ok(Round {
            party: r.party - 1,
            kraus: kraus.map_err(D::Error::custom)?,
            corrections: corrections.map_err(D::Error::custom)?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    #[serde(default)]
    pub dims: Vec<usize>,
    pub rounds: Vec<Round>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PureState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PureState>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundReport {
    pub party: usize,
    pub outcomes: usize,
    pub completeness_residual: f64,
    pub unitarity_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rounds: Vec<RoundReport>,
    pub pass: bool,
}

fn check_structure(p: &Protocol, dims: &[usize]) -> Result<()> {
    for (r, round) in p.rounds.iter().enumerate() {
        let Some(&d) = dims.get(round.party) else {
            return Err(Error::Dimension(format!("round {r}: party {} of {}", round.party + 1, dims.len())));
        };
        if round.kraus.is_empty() {
            return Err(Error::InvalidParameter(format!("round {r} has no Kraus operators")));
        }
        if round.kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::Dimension(format!("round {r}: Kraus operators must be {d}x{d}")));
        }
        if !round.corrections.is_empty() {
            if round.corrections.len() != round.kraus.len() {
                return Err(Error::InvalidParameter(format!(
                    "round {r}: {} correction lists for {} outcomes",
                    round.corrections.len(),
                    round.kraus.len()
                )));
            }
            for corr in &round.corrections {
                if corr.len() != dims.len()
                    || corr.iter().zip(dims).any(|(m, &dj)| m.nrows() != dj || m.ncols() != dj)
                {
                    return Err(Error::Dimension(format!("round {r}: corrections must match site dimensions")));
                }
            }
        }
    }
    Ok(())
}

impl Protocol {
    /// Site dimensions, taken from `dims`, corrections or the attached input.
    pub fn resolved_dims(&self) -> Option<Vec<usize>> {
        if !self.dims.is_empty() {
            return Some(self.dims.clone());
        }
        if let Some(corr) = self.rounds.iter().flat_map(|r| r.corrections.first()).next() {
            return Some(corr.iter().map(|m| m.nrows()).collect());
        }
        self.input.as_ref().or(self.target.as_ref()).map(|s| s.dims().to_vec())
    }
}

pub fn validate(p: &Protocol, tol: f64) -> Result<ValidationReport> {
    let dims = p
        .resolved_dims()
        .ok_or_else(|| Error::InvalidParameter("cannot infer site dimensions".into()))?;
    check_structure(p, &dims)?;
    let rounds: Vec<RoundReport> = p
        .rounds
        .iter()
        .map(|r| {
            let d = dims[r.party];
            let sum = r.kraus.iter().fold(CMat::zeros(d, d), |acc, k| acc + dagger(k) * k);
            let unitarity = r.corrections.iter().flatten().map(unitarity_residual).fold(0.0, f64::max);
            RoundReport {
                party: r.party + 1,
                outcomes: r.kraus.len(),
                completeness_residual: fro(&(sum - eye(d))),
                unitarity_residual: unitarity,
            }
        })
        .collect();
    let pass = rounds.iter().all(|r| r.completeness_residual < tol && r.unitarity_residual < tol);
    Ok(ValidationReport { rounds, pass })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Leaf {
    /// Outcome index per round.
    pub outcomes: Vec<usize>,
    pub probability: f64,
    pub zero_probability: bool,
    /// Normalized post-correction state; absent for zero-probability leaves.
    pub state: Option<PureState>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub leaves: Vec<Leaf>,
    pub total_probability: f64,
    pub probability_residual: f64,
    /// Largest distance between normalized, phase-aligned nonzero leaves and the first one.
    pub leaf_residual: f64,
    pub deterministic: bool,
    pub target_residual: Option<f64>,
    pub matches_target: Option<bool>,
    pub output: Option<PureState>,
}

/// Probability below which a branch counts as impossible.
pub const ZERO_BRANCH: f64 = 1e-20;

pub fn run(p: &Protocol, input: &PureState, tol: f64) -> Result<RunReport> {
    let dims = if p.dims.is_empty() { input.dims().to_vec() } else { p.dims.clone() };
    if dims != input.dims() {
        return Err(Error::Dimension(format!("protocol dims {:?}, input dims {:?}", dims, input.dims())));
    }
    if input.is_zero() {
        return Err(Error::InvalidState("zero input".into()));
    }
    check_structure(p, &dims)?;
    let norm0 = input.norm_sqr();
    let mut branches: Vec<(Vec<usize>, PureState)> = vec![(vec![], input.clone())];
    for round in &p.rounds {
        let mut next = Vec::with_capacity(branches.len() * round.kraus.len());
        for (path, s) in &branches {
            for (k, kr) in round.kraus.iter().enumerate() {
                let mut t = apply_site(kr, round.party, s)?;
                if let Some(corr) = round.corrections.get(k) {
                    t = apply_local(&LocalOperator::new(corr.clone())?, &t)?;
                }
                let mut path = path.clone();
                path.push(k);
                next.push((path, t));
            }
        }
        branches = next;
    }
    let leaves: Vec<Leaf> = branches
        .into_iter()
        .map(|(outcomes, s)| {
            let probability = s.norm_sqr() / norm0;
            let zero = probability <= ZERO_BRANCH;
            Leaf { outcomes, probability, zero_probability: zero, state: (!zero).then(|| s.normalized()) }
        })
        .collect();
    let total_probability: f64 = leaves.iter().map(|l| l.probability).sum();
    let live: Vec<&PureState> = leaves.iter().filter_map(|l| l.state.as_ref()).collect();
    let output = live.first().map(|s| (*s).clone());
    let leaf_residual = match live.split_first() {
        Some((first, rest)) => rest.iter().map(|s| phase_aligned_distance(first.amps(), s.amps())).fold(0.0, f64::max),
        None => f64::INFINITY,
    };
    let deterministic = leaf_residual <= tol;
    let target_residual = match &p.target {
        Some(t) => {
            if t.dims() != dims.as_slice() {
                return Err(Error::Dimension("target dims differ from protocol dims".into()));
            }
            Some(live.iter().map(|s| phase_aligned_distance(t.amps(), s.amps())).fold(0.0, f64::max))
        }
        None => None,
    };
    Ok(RunReport {
        leaves,
        total_probability,
        probability_residual: (total_probability - 1.0).abs(),
        leaf_residual,
        deterministic,
        matches_target: target_residual.map(|r| r <= tol && deterministic),
        target_residual,
        output,
    })
}

/// Round `{c h S_k^{(site)}}` with corrections `S_k^{(j)}` on the other sites.
///
/// `c` is fixed by completeness, which holds iff `sum_k S_k^dagger H S_k ~ 1`.
pub fn symmetrized_round(h: &CMat, site: usize, syms: &[LocalOperator], tol: f64) -> Result<Round> {
    let first = syms.first().ok_or_else(|| Error::InvalidParameter("no symmetries".into()))?;
    let dims = first.dims();
    if site >= dims.len() || h.nrows() != dims[site] || h.ncols() != dims[site] {
        return Err(Error::Dimension(format!("h does not act on site {}", site + 1)));
    }
    if syms.iter().any(|s| s.dims() != dims) {
        return Err(Error::Dimension("symmetries disagree on dimensions".into()));
    }
    let d = dims[site];
    let hh = dagger(h) * h;
    let m = syms
        .iter()
        .fold(CMat::zeros(d, d), |acc, s| acc + dagger(s.factor(site)) * &hh * s.factor(site));
    let t = linalg::trace(&m).re / d as f64;
    if t.is_nan() || t <= 0.0 || fro(&(&m - eye(d) * cr(t))) > tol * t {
        return Err(Error::InvalidParameter(
            "completeness cannot be met: sum of S^dagger H S is not proportional to the identity".into(),
        ));
    }
    let scale = cr(1.0 / t.sqrt());
    let mut kraus = Vec::with_capacity(syms.len());
    let mut corrections = Vec::with_capacity(syms.len());
    for s in syms {
        kraus.push(h * s.factor(site) * scale);
        let mut corr = Vec::with_capacity(dims.len());
        for (j, f) in s.factors().iter().enumerate() {
            if j == site {
                corr.push(eye(d));
                continue;
            }
            if unitarity_residual(f) > tol {
                return Err(Error::InvalidParameter(format!("symmetry factor on site {} is not unitary", j + 1)));
            }
            corr.push(f.clone());
        }
        corrections.push(corr);
    }
    Ok(Round { party: site, kraus, corrections })
}

pub const BUILTINS: [&str; 6] = ["sec4_threeround", "appE_KDND", "appE_a", "appE_b", "appE_c", "one_round_sigma_z"];

/// `1 (+) [[0,-1],[1,0]]`.
pub fn u_tilde_swap() -> CMat {
    signed_transposition(1, 2)
}

/// Determinant-one transposition of slots `k < l` in dimension 3.
fn signed_transposition(k: usize, l: usize) -> CMat {
    let mut t = eye(3);
    t[(k, k)] = cr(0.0);
    t[(l, l)] = cr(0.0);
    t[(k, l)] = cr(-1.0);
    t[(l, k)] = cr(1.0);
    t
}

/// The `h_1` of the three-round example; `diag(h_1^2) = (5, 1, 1)`.
pub fn sec4_h1() -> CMat {
    let s3 = 3f64.sqrt();
    let k = 1.0 / 6f64.sqrt();
    let off = (3.0 - s3).sqrt() * k;
    linalg::from_rows(
        3,
        3,
        &[
            cr((27.0 + s3).sqrt() * k),
            cr(off),
            cr(0.0),
            cr(off),
            cr((3.0 + s3).sqrt() * k),
            cr(0.0),
            cr(0.0),
            cr(0.0),
            cr(1.0),
        ],
    )
}

fn sqrt_diag(v: &[f64; 3]) -> CMat {
    diag_real(&[v[0].sqrt(), v[1].sqrt(), v[2].sqrt()])
}

fn inv_sqrt_diag(v: &[f64; 3]) -> CMat {
    diag_real(&[1.0 / v[0].sqrt(), 1.0 / v[1].sqrt(), 1.0 / v[2].sqrt()])
}

/// `U^{(x)3}` corrections on every site but `party`.
fn tensor_corrections(u: &CMat, party: usize, n: usize) -> Vec<CMat> {
    (0..n).map(|j| if j == party { eye(u.nrows()) } else { u.clone() }).collect()
}

fn cyclic_round(party: usize, pre: &CMat, post: &CMat, gen: &CMat, outcomes: usize, scale: f64) -> Round {
    let mut kraus = Vec::with_capacity(outcomes);
    let mut corrections = Vec::with_capacity(outcomes);
    for j in 0..outcomes {
        let g = matrix_power(gen, j);
        kraus.push(pre * &g * post * cr(scale));
        corrections.push(tensor_corrections(&g, party, 3));
    }
    Round { party, kraus, corrections }
}

fn local_a3(factors: [CMat; 3]) -> Result<PureState> {
    Ok(apply_local(&LocalOperator::new(factors.to_vec())?, &states::antisymmetric(3)?)?.normalized())
}

fn positive_diag(v: [f64; 3], what: &str) -> Result<[f64; 3]> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{what} must have positive entries")))
    }
}

pub fn sec4_threeround() -> Result<Protocol> {
    let x = shift(3);
    let z = clock(3);
    let ut = u_tilde_swap();
    let shrink = diag_real(&[1.0 / 5f64.sqrt(), 1.0, 1.0]);
    let d2 = diag_real(&[5.0, 3.0, 1.0]);
    let h1 = sec4_h1();
    let rounds = vec![
        cyclic_round(2, &shrink, &eye(3), &x, 3, (5.0f64 / 11.0).sqrt()),
        cyclic_round(1, &d2, &shrink, &ut, 2, 1.0 / 10f64.sqrt()),
        cyclic_round(0, &(&h1 * &shrink), &eye(3), &z, 3, 1.0 / 3f64.sqrt()),
    ];
    Ok(Protocol {
        dims: vec![3; 3],
        rounds,
        target: Some(local_a3([h1, d2, eye(3)])?),
        input: Some(states::antisymmetric(3)?),
    })
}

/// `{(1/sqrt 3) h_1 U sqrt(D_1)^{-1} Z^j}` with `D_1 = diag(U^dagger H_1 U)`.
pub fn kdnd_round(a: &CMat) -> Result<(Round, [f64; 3])> {
    if a.nrows() != 3 || a.ncols() != 3 {
        return Err(Error::Dimension("h1 U must be 3x3".into()));
    }
    let aa = dagger(a) * a;
    let d1 = positive_diag([aa[(0, 0)].re, aa[(1, 1)].re, aa[(2, 2)].re], "diag(U^dagger H_1 U)")?;
    let round = cyclic_round(0, &(a * inv_sqrt_diag(&d1)), &eye(3), &clock(3), 3, 1.0 / 3f64.sqrt());
    Ok((round, d1))
}

pub fn app_e_kdnd(h1: &CMat, u: &CMat, d2: [f64; 3]) -> Result<Protocol> {
    let d2 = positive_diag(d2, "D2")?;
    let a = h1 * u;
    let (round, d1) = kdnd_round(&a)?;
    Ok(Protocol {
        dims: vec![3; 3],
        rounds: vec![round],
        target: Some(local_a3([a, sqrt_diag(&d2), eye(3)])?),
        input: Some(local_a3([sqrt_diag(&d1), sqrt_diag(&d2), eye(3)])?),
    })
}

fn app_e_a_round(d1: &[f64; 3], party: usize) -> Round {
    let tr: f64 = d1.iter().sum();
    cyclic_round(party, &sqrt_diag(d1), &eye(3), &shift(3), 3, 1.0 / tr.sqrt())
}

/// `{(1/sqrt Tr D_1) sqrt(D_1) X^j}` at `party`, from `|A_3>`.
pub fn app_e_a(d1: [f64; 3], party: usize) -> Result<Protocol> {
    let d1 = positive_diag(d1, "D1")?;
    if party > 2 {
        return Err(Error::InvalidParameter(format!("party {} out of range", party + 1)));
    }
    let mut f = [eye(3), eye(3), eye(3)];
    f[party] = sqrt_diag(&d1);
    Ok(Protocol {
        dims: vec![3; 3],
        rounds: vec![app_e_a_round(&d1, party)],
        target: Some(local_a3(f)?),
        input: Some(states::antisymmetric(3)?),
    })
}

fn app_e_b_round(alpha: f64, beta: f64) -> Round {
    let a1 = 2.0 * alpha / (beta + 1.0);
    cyclic_round(
        0,
        &sqrt_diag(&[alpha, beta, 1.0]),
        &diag_real(&[1.0 / a1.sqrt(), 1.0, 1.0]),
        &u_tilde_swap(),
        2,
        1.0 / (beta + 1.0).sqrt(),
    )
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Two outcomes from `psi_2(2 alpha / (beta + 1); delta)`.
pub fn app_e_b(alpha: f64, beta: f64, delta: f64) -> Result<Protocol> {
    positive_diag([alpha, beta, delta], "alpha, beta, delta")?;
    let a1 = 2.0 * alpha / (beta + 1.0);
    if same(delta, a1) {
        return Err(Error::InvalidParameter("delta = 2 alpha / (beta + 1): use appE_c".into()));
    }
    if same(beta, 1.0) || same(delta, 1.0) {
        return Err(Error::InvalidParameter("beta and delta must differ from 1".into()));
    }
    let sd = sqrt_diag(&[delta, 1.0, 1.0]);
    Ok(Protocol {
        dims: vec![3; 3],
        rounds: vec![app_e_b_round(alpha, beta)],
        target: Some(local_a3([sqrt_diag(&[alpha, beta, 1.0]), sd.clone(), eye(3)])?),
        input: Some(local_a3([sqrt_diag(&[a1, 1.0, 1.0]), sd, eye(3)])?),
    })
}

/// Party 3 runs the `X^j` protocol, then party 1 the `U~^j` protocol.
pub fn app_e_c(alpha: f64, beta: f64) -> Result<Protocol> {
    positive_diag([alpha, beta, 1.0], "alpha, beta")?;
    let a1 = 2.0 * alpha / (beta + 1.0);
    if same(beta, 1.0) || same(a1, 1.0) {
        return Err(Error::InvalidParameter("beta and 2 alpha / (beta + 1) must differ from 1".into()));
    }
    Ok(Protocol {
        dims: vec![3; 3],
        rounds: vec![app_e_a_round(&[1.0 / a1, 1.0, 1.0], 2), app_e_b_round(alpha, beta)],
        target: Some(local_a3([sqrt_diag(&[alpha, beta, 1.0]), sqrt_diag(&[a1, 1.0, 1.0]), eye(3)])?),
        input: Some(states::antisymmetric(3)?),
    })
}

/// `{sqrt(2/5) h_1 sigma_z^m}` on a `sigma_z^{(x)3}`-symmetric seed.
pub fn one_round_sigma_z(h1: &CMat) -> Result<Protocol> {
    let syms = [LocalOperator::identity(&[2, 2, 2]), LocalOperator::tensor_power(&linalg::pauli_z(), 3)?];
    let round = symmetrized_round(h1, 0, &syms, 1e-10)?;
    let seed = states::even_parity(3)?;
    let target = apply_site(h1, 0, &seed)?;
    if target.is_zero() {
        return Err(Error::InvalidParameter("h1 annihilates the seed".into()));
    }
    Ok(Protocol { dims: vec![2; 3], rounds: vec![round], target: Some(target.normalized()), input: Some(seed) })
}

pub fn default_sigma_z_h1() -> CMat {
    eye(2) * cr(0.5) + linalg::pauli_x()
}

fn param_f64(params: &serde_json::Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| Error::Parse(format!("parameter '{key}' must be a number"))),
    }
}

fn param_matrix(params: &serde_json::Value, key: &str, default: CMat) -> Result<CMat> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => serde_json::from_value::<MatrixRepr>(v.clone())
            .map_err(|e| Error::Parse(format!("parameter '{key}': {e}")))?
            .into_square(),
    }
}

fn param_diag(params: &serde_json::Value, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
    match params.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => {
            let xs: Vec<f64> =
                serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("parameter '{key}': {e}")))?;
            xs.try_into().map_err(|_| Error::Parse(format!("parameter '{key}' needs 3 entries")))
        }
    }
}

/// Looks up a built-in by name; `params` is a JSON object, missing keys take defaults.
pub fn builtin(name: &str, params: &serde_json::Value) -> Result<Protocol> {
    match name {
        "sec4_threeround" => sec4_threeround(),
        "appE_KDND" => app_e_kdnd(
            &param_matrix(params, "h1", sec4_h1())?,
            &param_matrix(params, "U", eye(3))?,
            param_diag(params, "D2", [25.0, 9.0, 1.0])?,
        ),
        "appE_a" => {
            let party = param_f64(params, "party", 1.0)?;
            if party.fract() != 0.0 || !(1.0..=3.0).contains(&party) {
                return Err(Error::InvalidParameter("party must be 1, 2 or 3".into()));
            }
            app_e_a(param_diag(params, "D1", [4.0, 2.0, 1.0])?, party as usize - 1)
        }
        "appE_b" => app_e_b(
            param_f64(params, "alpha", 2.0)?,
            param_f64(params, "beta", 3.0)?,
            param_f64(params, "delta", 5.0)?,
        ),
        "appE_c" => app_e_c(param_f64(params, "alpha", 3.0)?, param_f64(params, "beta", 2.0)?),
        "one_round_sigma_z" => one_round_sigma_z(&param_matrix(params, "h1", default_sigma_z_h1())?),
        _ => Err(Error::InvalidParameter(format!("unknown builtin '{name}'; expected one of {BUILTINS:?}"))),
    }
}

/// Diagonals of `sqrt(D_1) (x) sqrt(D_2) (x) sqrt(D_3) |A_3>`.
pub type Triple = [[f64; 3]; 3];

const PLAN_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= PLAN_TOL * a.abs().max(b.abs())
}

fn others3(i: usize) -> (usize, usize) {
    match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

fn scale_all(t: &Triple, w: &[f64; 3]) -> Triple {
    let mut out = *t;
    for site in out.iter_mut() {
        for (x, wx) in site.iter_mut().zip(w) {
            *x *= wx;
        }
    }
    out
}

/// Rounds that end in `t`, paired with the diagonal state they start from.
fn backward_moves(t: &Triple) -> Vec<(Triple, Round)> {
    let mut out = Vec::new();
    for i in 0..3 {
        let (a, b) = others3(i);
        if (0..3).all(|x| close(t[a][x] / t[b][x], t[a][0] / t[b][0])) {
            let w = [1.0 / t[a][0], 1.0 / t[a][1], 1.0 / t[a][2]];
            let tp = scale_all(t, &w);
            if !(close(tp[i][0], tp[i][1]) && close(tp[i][1], tp[i][2])) {
                out.push(([[1.0; 3]; 3], app_e_a_round(&tp[i], i)));
            }
        }
        for (k, l) in [(0, 1), (0, 2), (1, 2)] {
            if !close(t[a][k] / t[a][l], t[b][k] / t[b][l]) {
                continue;
            }
            let mut w = [1.0; 3];
            w[l] = t[a][k] / t[a][l];
            let tp = scale_all(t, &w);
            if close(tp[i][k], tp[i][l]) {
                continue;
            }
            let mut s = tp;
            let avg = 0.5 * (tp[i][k] + tp[i][l]);
            s[i][k] = avg;
            s[i][l] = avg;
            let round = cyclic_round(i, &sqrt_diag(&tp[i]), &inv_sqrt_diag(&s[i]), &signed_transposition(k, l), 2, 0.5f64.sqrt());
            out.push((s, round));
        }
    }
    out
}

/// Membership of a diagonal state in `M_A3` up to local unitaries and site relabeling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembershipWitness {
    pub canonical: Canonical,
    /// Canonical site `x` is original site `site_perm[x]`.
    pub site_perm: [usize; 3],
}

pub fn m_a3_membership(t: &Triple) -> Option<MembershipWitness> {
    for perm in states::permutations(3) {
        let site_perm = [perm[0], perm[1], perm[2]];
        let base = t[site_perm[2]];
        let u: Vec<[f64; 3]> = (0..2)
            .map(|x| {
                let v = t[site_perm[x]];
                [v[0] / base[0], v[1] / base[1], v[2] / base[2]]
            })
            .collect();
        let p = DiagonalFamilyParams {
            alpha1: u[0][0] / u[0][2],
            beta1: u[0][1] / u[0][2],
            alpha2: u[1][0] / u[1][2],
            beta2: u[1][1] / u[1][2],
        };
        let canonical = canonicalize_m_a3(&p, PLAN_TOL);
        if canonical.kind != MA3Type::NotInM {
            return Some(MembershipWitness { canonical, site_perm });
        }
    }
    None
}

/// Reorders tensor factors: canonical site `x` moves to `site_perm[x]`.
pub fn permute_sites(s: &PureState, site_perm: &[usize]) -> Result<PureState> {
    let dims = s.dims();
    if site_perm.len() != dims.len() {
        return Err(Error::Dimension("permutation length differs from site count".into()));
    }
    let mut new_dims = vec![0; dims.len()];
    for (x, &p) in site_perm.iter().enumerate() {
        new_dims[p] = dims[x];
    }
    let mut out = PureState::from_raw(new_dims.clone(), vec![C64::default(); s.len()])?;
    let mut amps = out.amps().to_vec();
    for k in 0..s.len() {
        let idx = s.multi_index(k);
        let mut j = vec![0; idx.len()];
        for (x, &p) in site_perm.iter().enumerate() {
            j[p] = idx[x];
        }
        amps[out.flat_index(&j)?] = s.amps()[k];
    }
    out = PureState::from_raw(new_dims, amps)?;
    Ok(out)
}

/// Distance between the diagonal state and the canonical `M_A3` member after
/// undoing the slot and site relabelings.
pub fn membership_residual(t: &Triple, w: &MembershipWitness) -> Result<f64> {
    let canon = m_a3_state(&w.canonical.params)?;
    let mut p = CMat::zeros(3, 3);
    for (k, &old) in w.canonical.perm.iter().enumerate() {
        p[(old, k)] = cr(1.0);
    }
    let relabeled = apply_local(&LocalOperator::tensor_power(&p, 3)?, &canon)?;
    let moved = permute_sites(&relabeled, &w.site_perm)?;
    let direct = diagonal_a3_state(t)?;
    Ok(phase_aligned_distance(moved.amps(), direct.amps()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Obs4Chain {
    pub source: Triple,
    pub source_kind: MA3Type,
    pub source_params: DiagonalFamilyParams,
    pub source_site_perm: [usize; 3],
    pub source_slot_perm: [usize; 3],
    pub source_residual: f64,
    pub diagonal_rounds: usize,
    pub protocol: Protocol,
}

/// At most three rounds from an `M_A3` member to `a (x) sqrt(D_2) (x) 1 |A_3>`, `a = h_1 U`.
///
/// Searches backwards over diagonal states up to two rounds deep, then appends
/// the round taking `sqrt(D_1) (x) sqrt(D_2) (x) 1 |A_3>` to the target.
pub fn observation4_chain(a: &CMat, d2: [f64; 3]) -> Result<Obs4Chain> {
    let d2 = positive_diag(d2, "D2")?;
    let (kdnd, d1) = kdnd_round(a)?;
    let target: Triple = [d1, d2, [1.0; 3]];
    let mut frontier: Vec<(Triple, Vec<Round>)> = vec![(target, vec![])];
    for depth in 0..=2 {
        for (t, rounds) in &frontier {
            if let Some(w) = m_a3_membership(t) {
                let mut all: Vec<Round> = rounds.iter().rev().cloned().collect();
                all.push(kdnd.clone());
                let protocol = Protocol {
                    dims: vec![3; 3],
                    rounds: all,
                    target: Some(local_a3([a.clone(), sqrt_diag(&d2), eye(3)])?),
                    input: Some(diagonal_a3_state(t)?),
                };
                return Ok(Obs4Chain {
                    source: *t,
                    source_kind: w.canonical.kind,
                    source_params: w.canonical.params,
                    source_site_perm: w.site_perm,
                    source_slot_perm: w.canonical.perm,
                    source_residual: membership_residual(t, &w)?,
                    diagonal_rounds: depth,
                    protocol,
                });
            }
        }
        if depth == 2 {
            break;
        }
        frontier = frontier
            .iter()
            .flat_map(|(t, rounds)| {
                backward_moves(t).into_iter().map(move |(s, r)| {
                    let mut rs = rounds.clone();
                    rs.push(r);
                    (s, rs)
                })
            })
            .collect();
    }
    Err(Error::Numerical(format!("no M_A3 source within two diagonal rounds of {target:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtensor::random;
    use crate::rng_from_seed;

    fn assert_builtin(p: &Protocol) {
        let v = validate(p, 1e-10).unwrap();
        assert!(v.pass, "{v:?}");
        let r = run(p, p.input.as_ref().unwrap(), 1e-9).unwrap();
        assert!(r.deterministic && r.matches_target == Some(true), "{r:?}");
        assert!(r.probability_residual < 1e-10);
    }

    #[test]
    fn builtins_are_deterministic() {
        for name in BUILTINS {
            assert_builtin(&builtin(name, &serde_json::json!({})).unwrap());
        }
    }

    #[test]
    fn sec4_structure() {
        let p = sec4_threeround().unwrap();
        let parties: Vec<usize> = p.rounds.iter().map(|r| r.party + 1).collect();
        assert_eq!(parties, vec![3, 2, 1]);
        let h1 = sec4_h1();
        assert!((h1[(0, 0)].re - (27.0 + 3f64.sqrt()).sqrt() / 6f64.sqrt()).abs() < 1e-15);
        let hh = dagger(&h1) * &h1;
        assert!((hh[(0, 0)].re - 5.0).abs() < 1e-12 && (hh[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_z_round_scale() {
        let p = one_round_sigma_z(&default_sigma_z_h1()).unwrap();
        let k0 = &p.rounds[0].kraus[0];
        assert!((k0[(0, 0)].re - (0.4f64).sqrt() * 0.5).abs() < 1e-14);
    }

    #[test]
    fn app_e_b_rejects_boundary() {
        assert!(app_e_b(2.0, 3.0, 1.0).is_err());
        assert!(app_e_b(2.0, 1.0, 5.0).is_err());
        assert!(app_e_b(2.0, 3.0, 1.0 + 1e-3).is_ok());
        assert!(app_e_b(3.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn empty_protocol_is_identity() {
        let s = states::antisymmetric(3).unwrap();
        let p = Protocol { dims: vec![3; 3], rounds: vec![], target: Some(s.clone()), input: None };
        let r = run(&p, &s, 1e-12).unwrap();
        assert_eq!(r.leaves.len(), 1);
        assert_eq!(r.matches_target, Some(true));
    }

    #[test]
    fn zero_branches_are_flagged() {
        let p0 = linalg::diag_real(&[1.0, 0.0]);
        let p1 = linalg::diag_real(&[0.0, 1.0]);
        let p = Protocol {
            dims: vec![2, 2],
            rounds: vec![Round { party: 0, kraus: vec![p0, p1], corrections: vec![] }],
            target: None,
            input: None,
        };
        let s = PureState::basis(vec![2, 2], &[0, 1]).unwrap();
        let r = run(&p, &s, 1e-12).unwrap();
        assert_eq!(r.leaves.iter().filter(|l| l.zero_probability).count(), 1);
        assert!(r.deterministic);
    }

    #[test]
    fn round_json_uses_one_based_parties() {
        let p = app_e_a([4.0, 2.0, 1.0], 2).unwrap();
        let txt = serde_json::to_string(&p).unwrap();
        assert!(txt.contains("\"party\":3"));
        let back: Protocol = serde_json::from_str(&txt).unwrap();
        assert_eq!(back.rounds[0].party, 2);
        assert!(serde_json::from_str::<Round>(r#"{"party":0,"kraus":[[1]]}"#).is_err());
    }

    #[test]
    fn symmetrized_round_rejects_incomplete() {
        let syms = [LocalOperator::identity(&[2, 2])];
        let h = linalg::diag_real(&[2.0, 1.0]);
        assert!(symmetrized_round(&h, 0, &syms, 1e-10).is_err());
        let r = symmetrized_round(&eye(2), 0, &syms, 1e-10).unwrap();
        assert!(fro(&(&r.kraus[0] - eye(2))) < 1e-14);
    }

    #[test]
    fn planner_handles_special_cases() {
        let mut rng = rng_from_seed(9);
        let cases: [([f64; 3], [f64; 3]); 6] = [
            ([2.0, 5.0, 1.0], [3.0, 7.0, 1.0]),
            ([2.0, 3.0, 1.0], [1.0, 1.0, 1.0]),
            ([2.0, 3.0, 1.0], [5.0, 1.0, 1.0]),
            ([3.0, 2.0, 1.0], [2.0, 1.0, 1.0]),
            ([2.0, 6.0, 1.0], [5.0, 15.0, 1.0]),
            ([2.0, 1.0, 1.0], [2.0, 1.0, 1.0]),
        ];
        for (d1, d2) in cases {
            let mut a = random::gaussian_matrix(&mut rng, 3);
            for (k, dk) in d1.iter().enumerate() {
                let n = a.column(k).norm();
                a.column_mut(k).scale_mut(dk.sqrt() / n);
            }
            let chain = observation4_chain(&a, d2).unwrap();
            assert!(chain.protocol.rounds.len() <= 3);
            assert!(chain.source_residual < 1e-10, "{chain:?}");
            let r = run(&chain.protocol, chain.protocol.input.as_ref().unwrap(), 1e-8).unwrap();
            assert_eq!(r.matches_target, Some(true), "{d1:?} {d2:?} {:?}", r.target_residual);
        }
    }
}
