//! Separable-map necessary conditions.
//!
//! Two pieces live here. [`verify_certificate`] checks a proposed
//! `{p_k, S_k, N_q}` certificate against the separable-map equation
//! `(1/r) sum_k p_k S_k^+ H S_k + g^+ (sum_q N_q^+ N_q) g = G`.
//! The rest builds and decides the 6x6 linear systems obtained by taking
//! the overlap of that equation with `<j1 j2 j3|` and `|A_3>` when both
//! states are diagonal-family members of the `A_3` class.
//!
//! Unknown `x_sigma` aggregates `sum_k p_k prod_m [S_k^+]_{j_m, sigma(j_m)}`.
//! Rows are indexed by `j` in [`ROW_ORDER`], columns by `sigma` in
//! [`COLUMN_ORDER`].

use std::fmt;
use std::str::FromStr;

pub use num::BigRational;
use num::{BigInt, FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::qtensor::json;
use crate::qtensor::linalg::{cr, dagger, fro, herm_eig, kron, CMat, C64};
use crate::qtensor::{apply_local, LocalOperator, PureState};
use crate::states::{canonicalize_m_a3, levi_civita, DiagonalFamilyParams, MA3Type};
use crate::symmetry::verify_symmetry;
use crate::{Error, Result};

/// Row labels `j`, 0-based one-line notation.
pub const ROW_ORDER: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Column labels `sigma`, 0-based one-line notation.
pub const COLUMN_ORDER: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [2, 1, 0], [1, 0, 2], [1, 2, 0], [2, 0, 1]];

/// Ratios used to confirm that a verdict does not depend on `r`.
pub const R_PROBES: [f64; 3] = [0.5, 1.0, 2.0];

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// The printed coefficient matrix for target `(a1, a2)`.
pub fn literal_matrix<T: Clone + Zero + One + std::ops::Neg<Output = T>>(a1: &T, a2: &T) -> Vec<Vec<T>> {
    let (a, b, o) = (a1.clone(), a2.clone(), T::one());
    vec![
        vec![a.clone(), -a.clone(), -o.clone(), -b.clone(), o.clone(), b.clone()],
        vec![-a.clone(), a.clone(), b.clone(), o.clone(), -b.clone(), -o.clone()],
        vec![-b.clone(), b.clone(), o.clone(), a.clone(), -o.clone(), -a.clone()],
        vec![o.clone(), -o.clone(), -b.clone(), -a.clone(), b.clone(), a.clone()],
        vec![b.clone(), -b.clone(), -a.clone(), -o.clone(), a.clone(), o.clone()],
        vec![-o.clone(), o.clone(), a.clone(), b.clone(), -a.clone(), -b],
    ]
}

/// `r * (a1' b2', -a1', -a2' b1', b1', a2', -b2')`.
pub fn literal_rhs<T>(initial: &[T; 4], r: &T) -> Vec<T>
where
    T: Clone + std::ops::Mul<Output = T> + std::ops::Neg<Output = T>,
{
    let [a1, b1, a2, b2] = initial.clone();
    vec![a1.clone() * b2.clone(), -a1, -(a2.clone() * b1.clone()), b1, a2, -b2]
        .into_iter()
        .map(|v| r.clone() * v)
        .collect()
}

/// One of the 36 `(j, i)` index patterns of the overlap equation.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionTerm {
    pub row: usize,
    pub j: [usize; 3],
    pub i: [usize; 3],
    pub column: usize,
    pub coefficient: f64,
}

fn sigma_column(j: &[usize; 3], i: &[usize; 3]) -> usize {
    let mut sigma = [0usize; 3];
    for m in 0..3 {
        sigma[j[m]] = i[m];
    }
    COLUMN_ORDER.iter().position(|s| *s == sigma).expect("sigma is a permutation")
}

fn pattern_coefficient<T>(i: &[usize; 3], delta: &[T; 3], d: &[T; 3]) -> T
where
    T: Clone + std::ops::Mul<Output = T> + std::ops::Neg<Output = T>,
{
    let v = delta[i[0]].clone() * d[i[1]].clone();
    if levi_civita(i) < 0 {
        -v
    } else {
        v
    }
}

/// All 36 patterns for target diagonals `delta` (site 1) and `d` (site 2).
pub fn expansion_terms(delta: &[f64; 3], d: &[f64; 3]) -> Vec<ExpansionTerm> {
    let mut out = Vec::with_capacity(36);
    for (row, j) in ROW_ORDER.iter().enumerate() {
        for i in ROW_ORDER.iter() {
            out.push(ExpansionTerm {
                row,
                j: *j,
                i: *i,
                column: sigma_column(j, i),
                coefficient: pattern_coefficient(i, delta, d),
            });
        }
    }
    out
}

/// Aggregates the 36 patterns into the 6x6 matrix over `sigma`.
pub fn expansion_matrix<T>(delta: &[T; 3], d: &[T; 3]) -> Vec<Vec<T>>
where
    T: Clone + Zero + std::ops::Mul<Output = T> + std::ops::Neg<Output = T>,
{
    let mut m = vec![vec![T::zero(); 6]; 6];
    for (row, j) in ROW_ORDER.iter().enumerate() {
        for i in ROW_ORDER.iter() {
            let col = sigma_column(j, i);
            m[row][col] = m[row][col].clone() + pattern_coefficient(i, delta, d);
        }
    }
    m
}

/// Largest deviation between a raw pattern product and its aggregated unknown.
///
/// Zero for every stabilizer of `|A_3>`; generally nonzero for arbitrary
/// products `A (x) B (x) C`.
pub fn aggregation_defect(s: &LocalOperator) -> Result<f64> {
    if s.dims() != [3, 3, 3] {
        return Err(Error::Dimension("aggregation needs three qutrit factors".into()));
    }
    let sd: Vec<CMat> = s.factors().iter().map(dagger).collect();
    let raw = |j: &[usize; 3], i: &[usize; 3]| -> C64 { (0..3).map(|m| sd[m][(j[m], i[m])]).product() };
    let mut worst = 0.0f64;
    for sigma in COLUMN_ORDER.iter() {
        let reference = raw(&[0, 1, 2], sigma);
        for j in ROW_ORDER.iter() {
            let i = [sigma[j[0]], sigma[j[1]], sigma[j[2]]];
            worst = worst.max((raw(j, &i) - reference).norm());
        }
    }
    Ok(worst)
}

/// The 6x6 system for one transformation direction.
#[derive(Clone, Debug, Serialize)]
pub struct SepSystem {
    pub m: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// Target diagonals `(a1, b1, a2, b2)`; the literal system has `b1 = b2 = 1`.
    pub target: [f64; 4],
    pub initial: [f64; 4],
    pub r: f64,
}

/// Literal system for target `(a1, a2)` and initial `(a1', b1', a2', b2')`.
pub fn build_system(target: (f64, f64), initial: &DiagonalFamilyParams, r: f64) -> Result<SepSystem> {
    positive("alpha1", target.0)?;
    positive("alpha2", target.1)?;
    positive("r", r)?;
    initial.validate()?;
    let init = initial.as_array();
    Ok(SepSystem {
        m: literal_matrix(&target.0, &target.1),
        rhs: literal_rhs(&init, &r),
        target: [target.0, 1.0, target.1, 1.0],
        initial: init,
        r,
    })
}

/// System for an arbitrary diagonal target, assembled by the expansion.
pub fn build_expanded_system(target: &DiagonalFamilyParams, initial: &DiagonalFamilyParams, r: f64) -> Result<SepSystem> {
    target.validate()?;
    initial.validate()?;
    positive("r", r)?;
    let t = target.as_array();
    let init = initial.as_array();
    Ok(SepSystem {
        m: expansion_matrix(&[t[0], t[1], 1.0], &[t[2], t[3], 1.0]),
        rhs: literal_rhs(&init, &r),
        target: t,
        initial: init,
        r,
    })
}

/// Reverse-direction literal system: a type-(ii) `initial` as target and vice versa.
pub fn build_reverse_system(target: (f64, f64), initial: (f64, f64), r: f64) -> Result<SepSystem> {
    build_system(initial, &DiagonalFamilyParams::type_two(target.0, target.1)?, r)
}

/// Exact-rational counterpart of [`SepSystem`].
#[derive(Clone, Debug)]
pub struct ExactSystem {
    pub m: Vec<Vec<BigRational>>,
    pub rhs: Vec<BigRational>,
}

impl ExactSystem {
    pub fn literal(target: [BigRational; 2], initial: [BigRational; 4], r: BigRational) -> Result<Self> {
        if target.iter().chain(initial.iter()).chain(std::iter::once(&r)).any(|v| !v.is_positive()) {
            return Err(Error::InvalidParameter("exact parameters must be positive".into()));
        }
        Ok(Self { m: literal_matrix(&target[0], &target[1]), rhs: literal_rhs(&initial, &r) })
    }

    pub fn expanded(target: [BigRational; 4], initial: [BigRational; 4], r: BigRational) -> Result<Self> {
        if target.iter().chain(initial.iter()).chain(std::iter::once(&r)).any(|v| !v.is_positive()) {
            return Err(Error::InvalidParameter("exact parameters must be positive".into()));
        }
        let [a1, b1, a2, b2] = target;
        let one = BigRational::one();
        Ok(Self {
            m: expansion_matrix(&[a1, b1, one.clone()], &[a2, b2, one]),
            rhs: literal_rhs(&initial, &r),
        })
    }

    /// Exact binary values of a float system.
    pub fn from_float(sys: &SepSystem) -> Result<Self> {
        let conv = |v: f64| {
            BigRational::from_float(v).ok_or_else(|| Error::InvalidParameter(format!("{v} is not finite")))
        };
        Ok(Self {
            m: sys.m.iter().map(|row| row.iter().map(|&v| conv(v)).collect()).collect::<Result<_>>()?,
            rhs: sys.rhs.iter().map(|&v| conv(v)).collect::<Result<_>>()?,
        })
    }
}

/// Parses `p`, `p/q` or a finite decimal such as `2.75` or `-1e-3` exactly.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let err = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| err())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(k) => (&s[..k], s[k + 1..].parse::<i32>().map_err(|_| err())?),
        None => (s, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if frac_part.chars().any(|ch| !ch.is_ascii_digit()) {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}");
    let n = BigInt::from_str(&digits).map_err(|_| err())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let factor = num::pow::pow(ten, scale.unsigned_abs() as usize);
    let v = BigRational::from_integer(n);
    Ok(if scale >= 0 { v * factor } else { v / factor })
}

pub fn rational_to_string(v: &BigRational) -> String {
    v.to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Inconsistent,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "Consistent",
            Verdict::Inconsistent => "Inconsistent",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Float { tol: f64 },
    Exact,
}

/// Multipliers `y` over the original rows with `y^T M = 0` and `y^T rhs = value != 0`.
#[derive(Clone, Debug, Serialize)]
pub struct InconsistencyRow {
    pub multipliers: Vec<f64>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_multipliers: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_value: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Feasibility {
    pub verdict: Verdict,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_witness: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<InconsistencyRow>,
}

impl Feasibility {
    pub fn is_consistent(&self) -> bool {
        self.verdict == Verdict::Consistent
    }
}

enum Elim<T> {
    Consistent { x: Vec<T>, rank: usize },
    Inconsistent { y: Vec<T>, value: T, rank: usize },
}

/// Row reduction of `[M | rhs | I]` with partial pivoting.
///
/// `negligible` decides when a pivot candidate counts as zero and
/// `nonzero_rhs` when a reduced right-hand side signals inconsistency.
fn eliminate<T>(
    m: &[Vec<T>],
    rhs: &[T],
    negligible: impl Fn(&T) -> bool,
    nonzero_rhs: impl Fn(&T, &[T]) -> bool,
) -> Elim<T>
where
    T: Clone + Signed + PartialOrd,
{
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<T>> = (0..rows)
        .map(|r| {
            let mut row = m[r].clone();
            row.push(rhs[r].clone());
            row.extend((0..rows).map(|k| if k == r { T::one() } else { T::zero() }));
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..cols {
        if r == rows {
            break;
        }
        let (best, best_abs) = (r..rows)
            .map(|k| (k, a[k][col].abs()))
            .fold((r, T::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if negligible(&best_abs) {
            for row in a.iter_mut().skip(r) {
                row[col] = T::zero();
            }
            continue;
        }
        a.swap(r, best);
        let p = a[r][col].clone();
        for v in a[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let pivot_row = a[r].clone();
        for (k, row) in a.iter_mut().enumerate() {
            if k != r && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x = x.clone() - f.clone() * p.clone();
                }
                row[col] = T::zero();
            }
        }
        pivots.push(col);
        r += 1;
    }
    let rank = pivots.len();
    for row in a.iter().skip(rank) {
        let y = &row[cols + 1..];
        if nonzero_rhs(&row[cols], y) {
            return Elim::Inconsistent { y: y.to_vec(), value: row[cols].clone(), rank };
        }
    }
    let mut x = vec![T::zero(); cols];
    for (k, &col) in pivots.iter().enumerate() {
        x[col] = a[k][cols].clone();
    }
    Elim::Consistent { x, rank }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Decides consistency of `M x = rhs`; nonnegativity of `x` is not imposed.
pub fn feasible(sys: &SepSystem, mode: Mode) -> Result<Feasibility> {
    match mode {
        Mode::Exact => Ok(feasible_exact(&ExactSystem::from_float(sys)?)),
        Mode::Float { tol } => Ok(feasible_float(&sys.m, &sys.rhs, tol)),
    }
}

fn feasible_float(m: &[Vec<f64>], rhs: &[f64], tol: f64) -> Feasibility {
    let scale_m = max_abs(m.iter().flatten().copied()).max(f64::MIN_POSITIVE);
    let scale_b = max_abs(rhs.iter().copied());
    let pivot_floor = tol * scale_m;
    let elim = eliminate(
        m,
        rhs,
        |v| *v <= pivot_floor,
        |c, y| c.abs() > tol * scale_b.max(scale_m) * max_abs(y.iter().copied()).max(1.0),
    );
    match elim {
        Elim::Consistent { x, rank } => Feasibility {
            verdict: Verdict::Consistent,
            mode: "float".into(),
            tol: Some(tol),
            rank,
            witness: Some(x),
            exact_witness: None,
            certificate: None,
        },
        Elim::Inconsistent { y, value, rank } => Feasibility {
            verdict: Verdict::Inconsistent,
            mode: "float".into(),
            tol: Some(tol),
            rank,
            witness: None,
            exact_witness: None,
            certificate: Some(InconsistencyRow { multipliers: y, value, exact_multipliers: None, exact_value: None }),
        },
    }
}

fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

pub fn feasible_exact(sys: &ExactSystem) -> Feasibility {
    match eliminate(&sys.m, &sys.rhs, |v| v.is_zero(), |c, _| !c.is_zero()) {
        Elim::Consistent { x, rank } => Feasibility {
            verdict: Verdict::Consistent,
            mode: "exact".into(),
            tol: None,
            rank,
            witness: Some(x.iter().map(to_f64).collect()),
            exact_witness: Some(x.iter().map(rational_to_string).collect()),
            certificate: None,
        },
        Elim::Inconsistent { y, value, rank } => Feasibility {
            verdict: Verdict::Inconsistent,
            mode: "exact".into(),
            tol: None,
            rank,
            witness: None,
            exact_witness: None,
            certificate: Some(InconsistencyRow {
                multipliers: y.iter().map(to_f64).collect(),
                value: to_f64(&value),
                exact_multipliers: Some(y.iter().map(rational_to_string).collect()),
                exact_value: Some(rational_to_string(&value)),
            }),
        },
    }
}

/// `||M x - rhs||_inf` for a claimed solution.
pub fn solution_residual(sys: &SepSystem, x: &[f64]) -> f64 {
    max_abs(sys.m.iter().zip(&sys.rhs).map(|(row, b)| row.iter().zip(x).map(|(m, v)| m * v).sum::<f64>() - b))
}

/// Critical `a2'` for a type-(ii) pair: `(a1'(a2 - 1) + a1 - a2) / (a1 - 1)`.
pub fn lemma4_boundary(alpha1: f64, alpha2: f64, alpha1p: f64) -> Result<f64> {
    if alpha1 == 1.0 {
        return Err(Error::InvalidParameter("boundary undefined for alpha1 = 1".into()));
    }
    Ok((alpha1p * (alpha2 - 1.0) + alpha1 - alpha2) / (alpha1 - 1.0))
}

pub fn lemma4_boundary_exact(alpha1: &BigRational, alpha2: &BigRational, alpha1p: &BigRational) -> Result<BigRational> {
    let one = BigRational::one();
    if *alpha1 == one {
        return Err(Error::InvalidParameter("boundary undefined for alpha1 = 1".into()));
    }
    Ok((alpha1p * (alpha2 - &one) + alpha1 - alpha2) / (alpha1 - &one))
}

/// Grid scan of `a2'` for a type-(ii) pair.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryScan {
    pub target: (f64, f64),
    pub alpha1p: f64,
    pub step: f64,
    pub grid_points: usize,
    pub boundary: f64,
    pub consistent_at: Vec<f64>,
    pub flip_located: bool,
    pub exact_boundary: String,
    pub exact_consistent_at_boundary: bool,
    pub exact_inconsistent_off_boundary: bool,
    pub pass: bool,
}

/// Scans `a2' = lo + k step` and confirms the flip point in exact arithmetic.
///
/// Exact confirmation uses the rationals closest to the float inputs with
/// denominators up to `10^6`.
pub fn scan_boundary(target: (f64, f64), alpha1p: f64, lo: f64, hi: f64, step: f64, tol: f64) -> Result<BoundaryScan> {
    positive("step", step)?;
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::InvalidParameter("scan needs hi > lo".into()));
    }
    let boundary = lemma4_boundary(target.0, target.1, alpha1p)?;
    let n = ((hi - lo) / step).round() as usize + 1;
    let mut consistent_at = Vec::new();
    for k in 0..n {
        let a2p = lo + k as f64 * step;
        if a2p <= 0.0 {
            continue;
        }
        let sys = build_system(target, &DiagonalFamilyParams::type_two(alpha1p, a2p)?, 1.0)?;
        if feasible(&sys, Mode::Float { tol })?.is_consistent() {
            consistent_at.push(a2p);
        }
    }
    let flip_located = consistent_at.len() == 1 && (consistent_at[0] - boundary).abs() <= step / 2.0;

    let q = |v: f64| approx_rational(v, 1_000_000);
    let (ea1, ea2, ea1p, estep) = (q(target.0), q(target.1), q(alpha1p), q(step));
    let eb = lemma4_boundary_exact(&ea1, &ea2, &ea1p)?;
    let one = BigRational::one();
    let exact_at = |a2p: BigRational| -> Result<Verdict> {
        if !a2p.is_positive() {
            return Ok(Verdict::Inconsistent);
        }
        let sys = ExactSystem::literal([ea1.clone(), ea2.clone()], [ea1p.clone(), one.clone(), a2p, one.clone()], one.clone())?;
        Ok(feasible_exact(&sys).verdict)
    };
    let exact_consistent_at_boundary = exact_at(eb.clone())? == Verdict::Consistent;
    let exact_inconsistent_off_boundary = exact_at(&eb + &estep)? == Verdict::Inconsistent
        && exact_at(&eb - &estep)? == Verdict::Inconsistent;
    let pass = flip_located && exact_consistent_at_boundary && exact_inconsistent_off_boundary;
    Ok(BoundaryScan {
        target,
        alpha1p,
        step,
        grid_points: n,
        boundary,
        consistent_at,
        flip_located,
        exact_boundary: rational_to_string(&eb),
        exact_consistent_at_boundary,
        exact_inconsistent_off_boundary,
        pass,
    })
}

/// Nearest rational `p / q` with `q <= max_den` by continued fractions.
pub fn approx_rational(v: f64, max_den: u64) -> BigRational {
    if let Some(r) = BigRational::from_f64(v) {
        if r.denom() <= &BigInt::from(max_den) {
            return r;
        }
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
    let mut x = v;
    loop {
        let a = x.floor();
        let (p2, q2) = (a as i128 * p1 + p0, a as i128 * q1 + q0);
        if q2 as u64 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = x - a;
        if frac.abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    BigRational::new(BigInt::from(p1), BigInt::from(q1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SepVerdict {
    ForbiddenBySep,
    NecessaryConditionPasses,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SystemKind {
    /// The printed matrix with a type-(ii) target.
    Literal,
    /// The printed matrix at `a1 = a2 = 1`.
    A3Target,
    /// The expansion with a type-(iii) target.
    Expanded,
}

#[derive(Clone, Debug, Serialize)]
pub struct Member {
    pub kind: MA3Type,
    pub params: DiagonalFamilyParams,
    pub basis_perm: [usize; 3],
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionReport {
    pub from: MA3Type,
    pub to: MA3Type,
    pub system: SystemKind,
    /// Whether the closed-form case list covers this direction.
    pub covered_by_lemma: bool,
    pub r_states: f64,
    pub feasibility: Feasibility,
    pub verdicts_by_r: Vec<(f64, Verdict)>,
    pub r_independent: bool,
    pub verdict: SepVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma4Report {
    pub initial: Member,
    pub target: Member,
    pub forward: DirectionReport,
    pub reverse: DirectionReport,
    pub tol: f64,
}

fn member(p: &DiagonalFamilyParams, tol: f64) -> Result<Member> {
    p.validate()?;
    let c = canonicalize_m_a3(p, tol);
    if c.kind == MA3Type::NotInM {
        return Err(Error::InvalidParameter(format!("{:?} is not in M_A3", p.as_array())));
    }
    Ok(Member { kind: c.kind, params: c.params, basis_perm: c.perm })
}

/// `<A_3| diag(t1) (x) diag(t2) (x) 1 |A_3>`.
fn a3_weight(p: &DiagonalFamilyParams) -> f64 {
    let [a1, b1, a2, b2] = p.as_array();
    let (delta, d) = ([a1, b1, 1.0], [a2, b2, 1.0]);
    ROW_ORDER.iter().map(|i| delta[i[0]] * d[i[1]]).sum::<f64>() / 6.0
}

fn direction(from: &Member, to: &Member, tol: f64) -> Result<DirectionReport> {
    let r_states = a3_weight(&to.params) / a3_weight(&from.params);
    let (system, covered) = match to.kind {
        MA3Type::TypeI => (SystemKind::A3Target, true),
        MA3Type::TypeII => (SystemKind::Literal, from.kind != MA3Type::TypeI),
        _ => (SystemKind::Expanded, false),
    };
    let build = |r: f64| match system {
        SystemKind::A3Target => build_system((1.0, 1.0), &from.params, r),
        SystemKind::Literal => build_system((to.params.alpha1, to.params.alpha2), &from.params, r),
        SystemKind::Expanded => build_expanded_system(&to.params, &from.params, r),
    };
    let feasibility = feasible(&build(r_states)?, Mode::Float { tol })?;
    let verdicts_by_r = R_PROBES
        .iter()
        .map(|&r| Ok((r, feasible(&build(r)?, Mode::Float { tol })?.verdict)))
        .collect::<Result<Vec<_>>>()?;
    let r_independent = verdicts_by_r.iter().all(|(_, v)| *v == feasibility.verdict);
    let verdict = if feasibility.is_consistent() {
        SepVerdict::NecessaryConditionPasses
    } else {
        SepVerdict::ForbiddenBySep
    };
    Ok(DirectionReport {
        from: from.kind,
        to: to.kind,
        system,
        covered_by_lemma: covered,
        r_states,
        feasibility,
        verdicts_by_r,
        r_independent,
        verdict,
    })
}

/// Classifies both states and decides each direction.
pub fn lemma4_report(initial: &DiagonalFamilyParams, target: &DiagonalFamilyParams, tol: f64) -> Result<Lemma4Report> {
    let ci = member(initial, crate::states::CLASSIFY_TOL)?;
    let ct = member(target, crate::states::CLASSIFY_TOL)?;
    Ok(Lemma4Report {
        forward: direction(&ci, &ct, tol)?,
        reverse: direction(&ct, &ci, tol)?,
        initial: ci,
        target: ct,
        tol,
    })
}

/// A proposed separable-map certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SepCertificate {
    pub probabilities: Vec<f64>,
    pub symmetries: Vec<LocalOperator>,
    /// Dense operators `N_q` on the full space.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_matrix_list")]
    pub annihilators: Option<Vec<CMat>>,
    /// Taken from the states when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

mod opt_matrix_list {
    use super::*;

    pub fn serialize<S: serde::Serializer>(m: &Option<Vec<CMat>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match m {
            Some(v) => v.iter().map(json::MatrixRepr::from).collect::<Vec<_>>().serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<CMat>>, D::Error> {
        let v = Option::<Vec<json::MatrixRepr>>::deserialize(d)?;
        v.map(|list| list.into_iter().map(|r| r.into_square().map_err(serde::de::Error::custom)).collect())
            .transpose()
    }
}

impl SepCertificate {
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.probabilities.len() != self.symmetries.len() || self.probabilities.is_empty() {
            return Err(Error::InvalidParameter("need one probability per symmetry".into()));
        }
        if self.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("probabilities must be nonnegative".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > tol.max(1e-12) {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}")));
        }
        if let Some(r) = self.r {
            positive("r", r)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub r: f64,
    pub r_states: f64,
    pub residual: f64,
    pub relative_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annihilator_min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annihilator_max_leak: Option<f64>,
    pub annihilators_ok: bool,
    pub tol: f64,
    pub pass: bool,
}

/// Residual of the separable-map equation for `g|seed> -> h|seed>`.
pub fn verify_certificate(
    cert: &SepCertificate,
    g: &LocalOperator,
    h: &LocalOperator,
    seed: &PureState,
    tol: f64,
) -> Result<CertificateReport> {
    cert.validate(tol)?;
    let dims = seed.dims().to_vec();
    if g.dims() != dims || h.dims() != dims {
        return Err(Error::Dimension("g and h must act on the seed's sites".into()));
    }
    for (k, s) in cert.symmetries.iter().enumerate() {
        if s.dims() != dims {
            return Err(Error::Dimension(format!("symmetry {k} has dims {:?}", s.dims())));
        }
        match verify_symmetry(s, seed, tol) {
            Some(f) if (f - cr(1.0)).norm() <= tol.max(1e-12) => {}
            _ => return Err(Error::InvalidParameter(format!("S_{k} is not a symmetry of the seed"))),
        }
    }
    let g_seed = apply_local(g, seed)?;
    let h_seed = apply_local(h, seed)?;
    if g_seed.is_zero() {
        return Err(Error::InvalidState("g annihilates the seed".into()));
    }
    let r_states = h_seed.norm_sqr() / g_seed.norm_sqr();
    let r = cert.r.unwrap_or(r_states);

    let gm = g.to_matrix();
    let hm = h.to_matrix();
    let big_g = dagger(&gm) * &gm;
    let big_h = dagger(&hm) * &hm;
    let total = big_g.nrows();
    let mut lhs = CMat::zeros(total, total);
    for (p, s) in cert.probabilities.iter().zip(&cert.symmetries) {
        let sm = kron(s.factors());
        lhs += (dagger(&sm) * &big_h * &sm) * cr(p / r);
    }
    let (mut min_eig, mut leak, mut ann_ok) = (None, None, true);
    if let Some(ns) = &cert.annihilators {
        let mut sum = CMat::zeros(total, total);
        let gv = nalgebra::DVector::from_column_slice(g_seed.amps());
        let mut worst = 0.0f64;
        for (q, n) in ns.iter().enumerate() {
            if n.shape() != (total, total) {
                return Err(Error::Dimension(format!("N_{q} must be {total}x{total}")));
            }
            sum += dagger(n) * n;
            let image = n * &gv;
            worst = worst.max(image.norm() / (fro(n).max(1e-300) * gv.norm()));
        }
        let e = herm_eig(&sum)?.values[0];
        let scale = herm_eig(&sum)?.values.last().copied().unwrap_or(0.0).max(1.0);
        ann_ok = e >= -tol * scale && worst <= tol;
        lhs += dagger(&gm) * sum * &gm;
        min_eig = Some(e);
        leak = Some(worst);
    }
    let residual = fro(&(lhs - &big_g));
    let relative_residual = residual / fro(&big_g);
    Ok(CertificateReport {
        r,
        r_states,
        residual,
        relative_residual,
        annihilator_min_eigenvalue: min_eig,
        annihilator_max_leak: leak,
        annihilators_ok: ann_ok,
        tol,
        pass: residual < tol && ann_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtensor::linalg::{diag_real, eye};
    use crate::qtensor::random::gaussian_matrix;
    use crate::states::antisymmetric;
    use crate::{qtensor::linalg::det, rng_from_seed};
    use proptest::prelude::*;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn exact(target: [&str; 2], initial: [&str; 4]) -> Feasibility {
        let sys = ExactSystem::literal(
            [q(target[0]), q(target[1])],
            [q(initial[0]), q(initial[1]), q(initial[2]), q(initial[3])],
            BigRational::one(),
        )
        .unwrap();
        feasible_exact(&sys)
    }

    #[test]
    fn literal_matches_expansion_at_2_3() {
        let lit = literal_matrix(&2.0, &3.0);
        let exp = expansion_matrix(&[2.0, 1.0, 1.0], &[3.0, 1.0, 1.0]);
        assert_eq!(lit, exp);
        assert_eq!(expansion_terms(&[2.0, 1.0, 1.0], &[3.0, 1.0, 1.0]).len(), 36);
    }

    #[test]
    fn type_three_to_type_two_is_inconsistent() {
        let f = exact(["2", "3"], ["2", "3", "5", "7"]);
        assert_eq!(f.verdict, Verdict::Inconsistent);
        let cert = f.certificate.unwrap();
        let sys = build_system((2.0, 3.0), &DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap(), 1.0).unwrap();
        for col in 0..6 {
            let s: f64 = (0..6).map(|r| cert.multipliers[r] * sys.m[r][col]).sum();
            assert!(s.abs() < 1e-12);
        }
        assert!(cert.value.abs() > 1e-6);
    }

    #[test]
    fn type_two_boundary_flip() {
        assert_eq!(lemma4_boundary(2.0, 3.0, 4.0).unwrap(), 7.0);
        assert_eq!(exact(["2", "3"], ["4", "1", "5", "1"]).verdict, Verdict::Inconsistent);
        let on = exact(["2", "3"], ["4", "1", "7", "1"]);
        assert_eq!(on.verdict, Verdict::Consistent);
        let sys = build_system((2.0, 3.0), &DiagonalFamilyParams::type_two(4.0, 7.0).unwrap(), 1.0).unwrap();
        assert!(solution_residual(&sys, on.witness.as_ref().unwrap()) < 1e-12);
        assert!(lemma4_boundary(1.0, 3.0, 4.0).is_err());
        assert_eq!(lemma4_boundary(2.5, 2.5, 4.0).unwrap(), 4.0);
    }

    #[test]
    fn a3_target_rank_deficient() {
        let sys = build_system((1.0, 1.0), &DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap(), 1.0).unwrap();
        let f = feasible(&sys, Mode::Exact).unwrap();
        assert_eq!(f.rank, 1);
        assert_eq!(f.verdict, Verdict::Inconsistent);
    }

    #[test]
    fn report_directions() {
        let iii = DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap();
        let ii = DiagonalFamilyParams::type_two(2.0, 3.0).unwrap();
        let rep = lemma4_report(&iii, &ii, 1e-9).unwrap();
        assert_eq!(rep.forward.verdict, SepVerdict::ForbiddenBySep);
        assert!(rep.forward.r_independent);
        let a3 = DiagonalFamilyParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let rep = lemma4_report(&ii, &a3, 1e-9).unwrap();
        assert_eq!(rep.forward.system, SystemKind::A3Target);
        assert_eq!(rep.forward.verdict, SepVerdict::ForbiddenBySep);
        let on = DiagonalFamilyParams::type_two(4.0, 7.0).unwrap();
        let rep = lemma4_report(&on, &ii, 1e-9).unwrap();
        assert_eq!(rep.forward.verdict, SepVerdict::NecessaryConditionPasses);
        assert_eq!(rep.reverse.verdict, SepVerdict::NecessaryConditionPasses);
        assert!(lemma4_report(&DiagonalFamilyParams::type_two(2.0, 2.0).unwrap(), &ii, 1e-9).is_err());
    }

    #[test]
    fn scan_locates_flip() {
        let s = scan_boundary((2.0, 3.0), 4.0, 6.5, 7.5, 1e-3, 1e-9).unwrap();
        assert!(s.pass, "{s:?}");
        assert_eq!(s.exact_boundary, "7");
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(q("7/2"), BigRational::new(7.into(), 2.into()));
        assert_eq!(q("2.75"), BigRational::new(11.into(), 4.into()));
        assert_eq!(q("1e-3"), BigRational::new(1.into(), 1000.into()));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(approx_rational(0.1, 1000), BigRational::new(1.into(), 10.into()));
    }

    fn sl3(rng: &mut crate::Rng) -> CMat {
        let a = gaussian_matrix(rng, 3);
        let d = det(&a);
        a * d.powf(-1.0 / 3.0)
    }

    #[test]
    fn aggregation_holds_for_stabilizers_only() {
        let mut rng = rng_from_seed(3);
        let a = sl3(&mut rng);
        let s = LocalOperator::tensor_power(&a, 3).unwrap();
        assert!(aggregation_defect(&s).unwrap() < 1e-12);
        let t = LocalOperator::new(vec![sl3(&mut rng), sl3(&mut rng), sl3(&mut rng)]).unwrap();
        assert!(aggregation_defect(&t).unwrap() > 1e-3);
    }

    fn diag_op(p: &DiagonalFamilyParams) -> LocalOperator {
        let [a1, b1, a2, b2] = p.as_array();
        LocalOperator::new(vec![
            diag_real(&[a1.sqrt(), b1.sqrt(), 1.0]),
            diag_real(&[a2.sqrt(), b2.sqrt(), 1.0]),
            eye(3),
        ])
        .unwrap()
    }

    #[test]
    fn certificate_identity_and_absorption() {
        let seed = antisymmetric(3).unwrap();
        let g = diag_op(&DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap());
        let id = LocalOperator::identity(&[3, 3, 3]);
        let cert = SepCertificate { probabilities: vec![1.0], symmetries: vec![id], annihilators: None, r: None };
        let rep = verify_certificate(&cert, &g, &g, &seed, 1e-9).unwrap();
        assert!(rep.pass && rep.residual < 1e-12);

        let mut rng = rng_from_seed(9);
        let s = LocalOperator::tensor_power(&sl3(&mut rng), 3).unwrap();
        let g_abs = g.compose(&s).unwrap();
        let cert = SepCertificate { probabilities: vec![1.0], symmetries: vec![s], annihilators: None, r: None };
        let rep = verify_certificate(&cert, &g_abs, &g, &seed, 1e-9).unwrap();
        assert!(rep.relative_residual < 1e-12 && (rep.r - 1.0).abs() < 1e-12, "{rep:?}");

        let bad = LocalOperator::new(vec![diag_real(&[2.0, 0.5, 1.0]), eye(3), eye(3)]).unwrap();
        let cert = SepCertificate { probabilities: vec![1.0], symmetries: vec![bad], annihilators: None, r: None };
        assert!(verify_certificate(&cert, &g, &g, &seed, 1e-9).is_err());
    }

    #[test]
    fn random_certificates_fail_on_forbidden_pair() {
        let seed = antisymmetric(3).unwrap();
        let g = diag_op(&DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap());
        let h = diag_op(&DiagonalFamilyParams::type_two(2.0, 3.0).unwrap());
        let mut rng = rng_from_seed(11);
        for _ in 0..10 {
            let syms: Vec<LocalOperator> =
                (0..3).map(|_| LocalOperator::tensor_power(&sl3(&mut rng), 3).unwrap()).collect();
            let cert = SepCertificate { probabilities: vec![0.2, 0.3, 0.5], symmetries: syms, annihilators: None, r: None };
            let rep = verify_certificate(&cert, &g, &h, &seed, 1e-9).unwrap();
            assert!(rep.relative_residual > 1e-3);
        }
    }

    #[test]
    fn certificate_permutation_invariance() {
        let seed = antisymmetric(3).unwrap();
        let g = diag_op(&DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap());
        let h = diag_op(&DiagonalFamilyParams::type_two(2.0, 3.0).unwrap());
        let mut rng = rng_from_seed(12);
        let syms: Vec<LocalOperator> =
            (0..3).map(|_| LocalOperator::tensor_power(&sl3(&mut rng), 3).unwrap()).collect();
        let probs = vec![0.1, 0.6, 0.3];
        let a = SepCertificate { probabilities: probs.clone(), symmetries: syms.clone(), annihilators: None, r: None };
        let b = SepCertificate {
            probabilities: vec![probs[2], probs[0], probs[1]],
            symmetries: vec![syms[2].clone(), syms[0].clone(), syms[1].clone()],
            annihilators: None,
            r: None,
        };
        let ra = verify_certificate(&a, &g, &h, &seed, 1e-9).unwrap().residual;
        let rb = verify_certificate(&b, &g, &h, &seed, 1e-9).unwrap().residual;
        assert!((ra - rb).abs() <= 1e-9 * ra.max(1.0));
    }

    #[test]
    fn certificate_json_round_trip() {
        let cert = SepCertificate {
            probabilities: vec![1.0],
            symmetries: vec![LocalOperator::identity(&[3, 3, 3])],
            annihilators: Some(vec![CMat::zeros(27, 27)]),
            r: Some(1.0),
        };
        let txt = serde_json::to_string(&cert).unwrap();
        let back: SepCertificate = serde_json::from_str(&txt).unwrap();
        assert_eq!(back.annihilators.unwrap().len(), 1);
        let bare: SepCertificate =
            serde_json::from_str(r#"{"probabilities":[1],"symmetries":[{"factors":[[1,0,0,0,1,0,0,0,1],[1,0,0,0,1,0,0,0,1],[1,0,0,0,1,0,0,0,1]]}]}"#)
                .unwrap();
        assert!(bare.annihilators.is_none() && bare.r.is_none());
    }

    fn small_rational() -> impl Strategy<Value = (i64, i64)> {
        (1i64..40, 1i64..12)
    }

    proptest! {
        #[test]
        fn float_and_exact_agree(
            t1 in small_rational(), t2 in small_rational(),
            i1 in small_rational(), i2 in small_rational(), i3 in small_rational(), i4 in small_rational(),
        ) {
            let r = |(p, q): (i64, i64)| BigRational::new(p.into(), q.into());
            let f = |(p, q): (i64, i64)| p as f64 / q as f64;
            let ex = ExactSystem::literal([r(t1), r(t2)], [r(i1), r(i2), r(i3), r(i4)], BigRational::one()).unwrap();
            let fl = build_system((f(t1), f(t2)), &DiagonalFamilyParams::new(f(i1), f(i2), f(i3), f(i4)).unwrap(), 1.0).unwrap();
            prop_assert_eq!(feasible_exact(&ex).verdict, feasible(&fl, Mode::Float { tol: 1e-9 }).unwrap().verdict);
        }

        #[test]
        fn verdict_is_r_independent(a1 in 0.1f64..9.0, a2 in 0.1f64..9.0, p in proptest::array::uniform4(0.1f64..9.0)) {
            let init = DiagonalFamilyParams::new(p[0], p[1], p[2], p[3]).unwrap();
            let base = feasible(&build_system((a1, a2), &init, 1.0).unwrap(), Mode::Exact).unwrap().verdict;
            for r in R_PROBES {
                let v = feasible(&build_system((a1, a2), &init, r).unwrap(), Mode::Exact).unwrap().verdict;
                prop_assert_eq!(v, base);
            }
        }

        #[test]
        fn boundary_is_exchange_symmetric(a1 in 1.1f64..9.0, a2 in 0.1f64..9.0, a1p in 1.1f64..9.0) {
            let a2p = lemma4_boundary(a1, a2, a1p).unwrap();
            prop_assume!(a2p > 0.0);
            let back = lemma4_boundary(a1p, a2p, a1).unwrap();
            prop_assert!((back - a2).abs() <= 1e-9 * a2.max(1.0));
        }
    }
}
