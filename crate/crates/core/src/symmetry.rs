//! Stabilizer families and quasi-commutation.
//!
//! `S` quasi-commutes with a positive `H` when `S^dagger H S = c H` for some
//! `c > 0`. Solvers return representatives with random values for any free
//! parameters, so a returned solution is generic within its branch.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::qtensor::linalg::{
    self, c, cr, dagger, eye, fro, herm_eig, is_positive_definite, is_scalar_multiple_of_identity, p_z,
    pauli_x, pauli_y, pauli_z, pd_inv_sqrt, psd_sqrt, t_xy, CMat, CVec, C64,
};
use crate::qtensor::{apply_local, proportional_mat, proportional_states, random, LocalOperator, PureState};
use crate::{rng_from_seed, states, Error, Result, Rng};

/// Smallest-to-largest eigenvalue ratio below which a matrix is not treated as positive definite.
pub const PD_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FourQubitCase {
    /// Stabilizer `{X^{(x)4} : X in SL(2)}`.
    GabcdA,
    /// Generated by `sigma_x^{(x)4}`, the `sigma_x P` element and the `P^{(x)4}` elements.
    GabcdB,
    /// `T_{z^2,xz} (x) T_{1/z^2,y/z} (x) T_{z^2,-xz} (x) T_{1/z^2,-y/z}`.
    Labc2,
    /// `(sz (x) sy (x) sz (x) sy)^m [T_{1,y} (x) P_{1/z} (x) T_{1,-y} (x) P_z]`.
    La2b2,
}

impl std::str::FromStr for FourQubitCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "gabcda" | "gabcd" | "a" => Ok(Self::GabcdA),
            "gabcdb" | "b" => Ok(Self::GabcdB),
            "labc2" => Ok(Self::Labc2),
            "la2b2" => Ok(Self::La2b2),
            _ => Err(Error::Parse(format!("unknown four-qubit case '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum SymmetryFamily {
    #[serde(rename = "Finite")]
    FiniteGroup { elements: Vec<LocalOperator> },
    #[serde(rename = "GHZ")]
    Ghz { n: usize },
    W { n: usize },
    TensorPower { n: usize, d: usize },
    FourQubit { case: FourQubitCase },
}

impl SymmetryFamily {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            SymmetryFamily::FiniteGroup { elements } => elements.first().map(|e| e.dims()).unwrap_or_default(),
            SymmetryFamily::Ghz { n } | SymmetryFamily::W { n } => vec![2; *n],
            SymmetryFamily::TensorPower { n, d } => vec![*d; *n],
            SymmetryFamily::FourQubit { .. } => vec![2; 4],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.dims().len()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SymmetryFamily::FiniteGroup { elements } => {
                let dims = elements
                    .first()
                    .ok_or_else(|| Error::InvalidParameter("finite group without elements".into()))?
                    .dims();
                if elements.iter().any(|e| e.dims() != dims) {
                    return Err(Error::Dimension("group elements disagree on dimensions".into()));
                }
                Ok(())
            }
            SymmetryFamily::Ghz { n } | SymmetryFamily::W { n } if *n < 2 => {
                Err(Error::InvalidParameter(format!("need n >= 2, got {n}")))
            }
            SymmetryFamily::TensorPower { n, d } if *n < 2 || *d < 2 => {
                Err(Error::InvalidParameter(format!("need n, d >= 2, got n={n}, d={d}")))
            }
            _ => Ok(()),
        }
    }

    /// A state fixed by every family element, when one is known.
    pub fn reference_state(&self) -> Option<PureState> {
        match self {
            SymmetryFamily::Ghz { n } => states::ghz(*n, 2).ok(),
            SymmetryFamily::W { n } => states::w(*n).ok(),
            SymmetryFamily::TensorPower { n, d } if n == d => states::antisymmetric(*n).ok(),
            _ => None,
        }
    }

    /// Parses JSON or the shorthands `GHZ:n`, `W:n`, `TP:n,d`, `FourQubit:<case>`.
    pub fn parse(desc: &str) -> Result<Self> {
        let desc = desc.trim();
        if desc.starts_with('{') {
            let f: Self = serde_json::from_str(desc).map_err(|e| Error::Parse(e.to_string()))?;
            f.validate()?;
            return Ok(f);
        }
        let (head, tail) = desc
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("family '{desc}' needs arguments")))?;
        let ints = || -> Result<Vec<usize>> {
            tail.split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{desc}: {e}"))))
                .collect()
        };
        let f = match head.to_ascii_lowercase().as_str() {
            "ghz" => SymmetryFamily::Ghz { n: ints()?[0] },
            "w" => SymmetryFamily::W { n: ints()?[0] },
            "tp" | "tensorpower" => match ints()?.as_slice() {
                [n, d] => SymmetryFamily::TensorPower { n: *n, d: *d },
                _ => return Err(Error::Parse(format!("{desc}: expected TP:n,d"))),
            },
            "fourqubit" | "4q" => SymmetryFamily::FourQubit { case: tail.parse()? },
            _ => return Err(Error::Parse(format!("unknown family '{desc}'"))),
        };
        f.validate()?;
        Ok(f)
    }
}

/// Factor `c` with `op|s> = c|s>`, if any.
pub fn verify_symmetry(op: &LocalOperator, s: &PureState, tol: f64) -> Option<C64> {
    let image = apply_local(op, s).ok()?;
    proportional_states(&image, s, tol)
}

/// Real positive `c` with `S^dagger H S = c H`.
pub fn quasi_commute(s: &CMat, h: &CMat, tol: f64) -> Result<Option<f64>> {
    if !is_positive_definite(h, PD_TOL) {
        return Err(Error::NotPositive("H must be positive definite".into()));
    }
    if s.shape() != h.shape() {
        return Err(Error::Dimension(format!("S is {:?}, H is {:?}", s.shape(), h.shape())));
    }
    let m = dagger(s) * h * s;
    Ok(proportional_mat(&m, h, tol).and_then(|f| {
        (f.re > 0.0 && f.im.abs() <= tol.max(1e-10) * f.norm()).then_some(f.re)
    }))
}

/// `||S^dagger H S - c H|| / ||S^dagger H S||` at the least-squares `c`.
pub fn quasi_commute_residual(s: &CMat, h: &CMat) -> f64 {
    let m = dagger(s) * h * s;
    let nh = h.norm_squared();
    let f: C64 = h.iter().zip(m.iter()).map(|(x, y)| x.conj() * y).sum::<C64>() / nh;
    let nm = fro(&m);
    if nm == 0.0 {
        return f64::INFINITY;
    }
    fro(&(m - h * f)) / nm
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QcSolution {
    pub symmetry: LocalOperator,
    /// Per-site factor, `None` where the site does not quasi-commute.
    pub factors: Vec<Option<f64>>,
    /// Per-site relative residual of the best proportionality fit.
    pub residuals: Vec<f64>,
    pub sites_satisfied: Vec<usize>,
    /// Some factor is not a multiple of the identity.
    pub nontrivial: bool,
    /// The branch had free parameters; this is one random member.
    pub free_parameters: bool,
}

impl QcSolution {
    pub fn evaluate(symmetry: LocalOperator, h: &[CMat], tol: f64, free_parameters: bool) -> Result<Self> {
        let mut factors = Vec::with_capacity(h.len());
        let mut residuals = Vec::with_capacity(h.len());
        for (s, hi) in symmetry.factors().iter().zip(h) {
            factors.push(quasi_commute(s, hi, tol)?);
            residuals.push(quasi_commute_residual(s, hi));
        }
        let sites_satisfied = factors.iter().enumerate().filter(|(_, f)| f.is_some()).map(|(i, _)| i).collect();
        let nontrivial = symmetry.factors().iter().any(|f| !is_scalar_multiple_of_identity(f, tol.max(1e-10)));
        Ok(Self { symmetry, factors, residuals, sites_satisfied, nontrivial, free_parameters })
    }

    pub fn satisfies(&self, sites: &[usize]) -> bool {
        sites.iter().all(|s| self.factors[*s].is_some())
    }

    /// Largest residual over the given sites.
    pub fn max_residual(&self, sites: &[usize]) -> f64 {
        sites.iter().map(|&s| self.residuals[s]).fold(0.0, f64::max)
    }
}

fn check_inputs(family: &SymmetryFamily, h: &[CMat], required: &[usize]) -> Result<()> {
    family.validate()?;
    let dims = family.dims();
    if h.len() != dims.len() {
        return Err(Error::Dimension(format!("{} operators for {} sites", h.len(), dims.len())));
    }
    for (j, (hj, &d)) in h.iter().zip(&dims).enumerate() {
        if hj.nrows() != d || hj.ncols() != d {
            return Err(Error::Dimension(format!("H_{j} must be {d}x{d}")));
        }
        if !is_positive_definite(hj, PD_TOL) {
            return Err(Error::NotPositive(format!("H_{j}")));
        }
    }
    let mut seen = vec![false; dims.len()];
    for &r in required {
        if r >= dims.len() || seen[r] {
            return Err(Error::InvalidParameter(format!("bad required site {r}")));
        }
        seen[r] = true;
    }
    Ok(())
}

/// Nontrivial members of the family that quasi-commute on every required site.
///
/// Closed forms are used for the GHZ, W and four-qubit families; the
/// tensor-power family is solved through the commutant described in
/// [`tensor_power_commutant`]. An empty result means no nontrivial solution
/// exists in the branches searched (all branches for every built-in family).
pub fn solve_quasi_commuting(
    family: &SymmetryFamily,
    h: &[CMat],
    required: &[usize],
    tol: f64,
    seed: u64,
) -> Result<Vec<QcSolution>> {
    check_inputs(family, h, required)?;
    let mut rng = rng_from_seed(seed);
    let candidates: Vec<(LocalOperator, bool)> = match family {
        SymmetryFamily::FiniteGroup { elements } => elements.iter().map(|e| (e.clone(), false)).collect(),
        SymmetryFamily::Ghz { n } => ghz_candidates(*n, h, required, tol, &mut rng),
        SymmetryFamily::W { n } => w_candidates(*n, h, required, tol, &mut rng),
        SymmetryFamily::TensorPower { n, .. } => tensor_power_candidates(*n, h, required, tol, &mut rng)?,
        SymmetryFamily::FourQubit { case } => match case {
            FourQubitCase::GabcdA => tensor_power_candidates(4, h, required, tol, &mut rng)?,
            FourQubitCase::GabcdB => gabcd_b_candidates(h, required, tol, &mut rng),
            FourQubitCase::Labc2 => labc2_candidates(h, required, tol, &mut rng),
            FourQubitCase::La2b2 => la2b2_candidates(h, required, tol, &mut rng),
        },
    };
    let mut out = Vec::new();
    for (op, free) in candidates {
        let sol = QcSolution::evaluate(op, h, tol, free)?;
        if sol.nontrivial && sol.satisfies(required) {
            out.push(sol);
        }
    }
    Ok(out)
}

/// Admissible values of a nonzero complex parameter.
#[derive(Clone, Debug, PartialEq)]
enum Allowed {
    Any,
    Circle(f64),
    Points(Vec<C64>),
}

fn close(a: C64, b: C64) -> bool {
    (a - b).norm() <= 1e-9 * a.norm().max(b.norm()).max(1e-300)
}

impl Allowed {
    fn intersect(self, other: Allowed) -> Option<Allowed> {
        use Allowed::*;
        match (self, other) {
            (Any, x) | (x, Any) => Some(x),
            (Circle(a), Circle(b)) => ((a - b).abs() <= 1e-9 * a.max(b)).then_some(Circle(a)),
            (Circle(r), Points(p)) | (Points(p), Circle(r)) => {
                let p: Vec<C64> = p.into_iter().filter(|z| (z.norm() - r).abs() <= 1e-9 * r).collect();
                (!p.is_empty()).then_some(Points(p))
            }
            (Points(a), Points(b)) => {
                let p: Vec<C64> = a.into_iter().filter(|z| b.iter().any(|w| close(*z, *w))).collect();
                (!p.is_empty()).then_some(Points(p))
            }
        }
    }

    /// Image under `p -> k / p`.
    fn reciprocal(self, k: C64) -> Allowed {
        match self {
            Allowed::Any => Allowed::Any,
            Allowed::Circle(r) => Allowed::Circle(k.norm() / r),
            Allowed::Points(p) => Allowed::Points(p.into_iter().map(|z| k / z).collect()),
        }
    }

    fn pick(&self, rng: &mut Rng) -> Vec<C64> {
        match self {
            Allowed::Any => vec![random::nonzero(rng)],
            Allowed::Circle(r) => vec![random::phase(rng) * *r],
            Allowed::Points(p) => p.clone(),
        }
    }

    fn is_free(&self) -> bool {
        !matches!(self, Allowed::Points(_))
    }
}

fn entries(h: &CMat) -> (f64, C64, f64) {
    (h[(0, 0)].re, h[(0, 1)], h[(1, 1)].re)
}

fn offdiag_vanishes(h: &CMat, tol: f64) -> bool {
    let (a, b, c) = entries(h);
    b.norm() <= tol * a.max(c)
}

/// `P_z` quasi-commutes with `H` iff `z = +-1`, or `|z| = 1` when `H` is diagonal.
fn allowed_p(h: &CMat, tol: f64) -> Allowed {
    if offdiag_vanishes(h, tol) {
        Allowed::Circle(1.0)
    } else {
        Allowed::Points(vec![cr(1.0), cr(-1.0)])
    }
}

/// `P_z sigma_x` quasi-commutes iff `z^2 = c b / (a conj b)`, or `|z|^2 = c/a` when `b = 0`.
fn allowed_p_sx(h: &CMat, tol: f64) -> Allowed {
    let (a, b, c) = entries(h);
    if offdiag_vanishes(h, tol) {
        Allowed::Circle((c / a).sqrt())
    } else {
        let z = (b * c / (b.conj() * a)).sqrt();
        Allowed::Points(vec![z, -z])
    }
}

/// `sigma_x P_u = P_{1/u} sigma_x`.
fn allowed_sx_p(h: &CMat, tol: f64) -> Allowed {
    allowed_p_sx(h, tol).reciprocal(cr(1.0))
}

/// `sigma_y P_w` quasi-commutes iff `w^2 = -(a/c)(conj b / b)`, or `|w|^2 = a/c` when `b = 0`.
fn allowed_sy_p(h: &CMat, tol: f64) -> Allowed {
    let (a, b, c) = entries(h);
    if offdiag_vanishes(h, tol) {
        Allowed::Circle((a / c).sqrt())
    } else {
        let w = (-(b.conj() / b) * (a / c)).sqrt();
        Allowed::Points(vec![w, -w])
    }
}

/// Values `z_i` from each admissible set with `prod z_i = 1`.
fn product_one(allowed: &[Allowed], rng: &mut Rng) -> Option<Vec<C64>> {
    let n = allowed.len();
    let free = allowed
        .iter()
        .position(|a| *a == Allowed::Any)
        .or_else(|| allowed.iter().position(|a| matches!(a, Allowed::Circle(_))));
    if let Some(f) = free {
        let mut z: Vec<C64> = allowed.iter().map(|a| a.pick(rng)[0]).collect();
        let rest: C64 = z.iter().enumerate().filter(|(i, _)| *i != f).map(|(_, v)| *v).product();
        let need = rest.inv();
        match &allowed[f] {
            Allowed::Circle(r) if (need.norm() - r).abs() > 1e-9 * r => {
                // another circle can absorb the modulus mismatch only if its radius is fixed too; give up
                return None;
            }
            _ => z[f] = need,
        }
        return Some(z);
    }
    let pts: Vec<Vec<C64>> = allowed.iter().map(|a| a.pick(rng)).collect();
    let total: usize = pts.iter().map(|p| p.len()).product();
    for combo in 0..total.min(1 << 16) {
        let mut k = combo;
        let mut z = Vec::with_capacity(n);
        for p in &pts {
            z.push(p[k % p.len()]);
            k /= p.len();
        }
        if close(z.iter().product(), cr(1.0)) {
            return Some(z);
        }
    }
    None
}

fn ghz_candidates(n: usize, h: &[CMat], required: &[usize], tol: f64, rng: &mut Rng) -> Vec<(LocalOperator, bool)> {
    let mut out = Vec::new();
    for m in 0..2 {
        let allowed: Vec<Allowed> = (0..n)
            .map(|i| {
                if !required.contains(&i) {
                    Allowed::Any
                } else if m == 0 {
                    allowed_p(&h[i], tol)
                } else {
                    allowed_p_sx(&h[i], tol)
                }
            })
            .collect();
        let free = allowed.iter().any(Allowed::is_free);
        if let Some(z) = product_one(&allowed, rng) {
            let factors = z
                .iter()
                .map(|&zi| if m == 0 { p_z(zi) } else { p_z(zi) * pauli_x() })
                .collect();
            out.push((LocalOperator::new(factors).expect("2x2 factors"), free));
        }
    }
    out
}

/// Random phase kept away from 1.
fn generic_phase(rng: &mut Rng) -> C64 {
    C64::from_polar(1.0, rng.random_range(0.5..std::f64::consts::TAU - 0.5))
}

fn w_candidates(n: usize, h: &[CMat], required: &[usize], tol: f64, rng: &mut Rng) -> Vec<(LocalOperator, bool)> {
    let x = generic_phase(rng);
    let mut y: Vec<Option<C64>> = (0..n)
        .map(|i| {
            required.contains(&i).then(|| {
                let (a, b, _) = entries(&h[i]);
                b / a * (cr(1.0) - x)
            })
        })
        .collect();
    let fixed: C64 = y.iter().flatten().sum();
    let free: Vec<usize> = (0..n).filter(|i| y[*i].is_none()).collect();
    match free.split_last() {
        Some((&last, others)) => {
            let mut acc = fixed;
            for &i in others {
                let v = random::gaussian(rng);
                acc += v;
                y[i] = Some(v);
            }
            y[last] = Some(-acc);
        }
        None => {
            let scale: f64 = y.iter().flatten().map(|v| v.norm()).sum::<f64>().max(1.0);
            if fixed.norm() > tol * scale {
                return vec![];
            }
        }
    }
    let factors = y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let t = t_xy(x, yi.expect("assigned"));
            if i == 0 {
                t * x.inv()
            } else {
                t
            }
        })
        .collect();
    vec![(LocalOperator::new(factors).expect("2x2 factors"), !free.is_empty())]
}

/// Commutant data for the tensor-power family.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Commutant {
    /// Site whose `H` anchors the unitary form `S = H_a^{-1/2} U H_a^{1/2}`.
    pub anchor: Option<usize>,
    /// Dimension of `{U : [U, K_j] = 0}` with `K_j = H_a^{-1/2} H_j H_a^{-1/2}`.
    pub dimension: usize,
    /// Smallest singular value of the commutator map treated as nonzero; the certification margin.
    pub smallest_nonzero_singular: Option<f64>,
    #[serde(skip)]
    pub basis: Vec<CMat>,
}

/// Every `S` with `S^dagger H_a S ~ H_a` is `H_a^{-1/2} U H_a^{1/2}` with `U` unitary,
/// and such `S` quasi-commutes with `H_j` iff `U` commutes with `K_j`.
/// A one-dimensional commutant therefore certifies that only `S ~ 1` works.
pub fn tensor_power_commutant(h: &[CMat], required: &[usize], tol: f64) -> Result<Commutant> {
    let d = h.first().map(|m| m.nrows()).unwrap_or(0);
    let Some((&anchor, rest)) = required.split_first() else {
        let mut basis = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = cr(1.0);
                basis.push(e);
            }
        }
        return Ok(Commutant { anchor: None, dimension: d * d, smallest_nonzero_singular: None, basis });
    };
    let inv_sqrt = pd_inv_sqrt(&h[anchor])?;
    let ks: Vec<CMat> = rest.iter().map(|&j| &inv_sqrt * &h[j] * &inv_sqrt).collect();
    if ks.is_empty() {
        return tensor_power_commutant(h, &[], tol).map(|c| Commutant { anchor: Some(anchor), ..c });
    }
    let id = eye(d);
    let mut map = CMat::zeros(ks.len() * d * d, d * d);
    for (b, k) in ks.iter().enumerate() {
        // vec(XK - KX) = (K^T (x) 1 - 1 (x) K) vec(X), column-major vec
        let block = k.transpose().kronecker(&id) - id.kronecker(k);
        let scale = fro(k).max(f64::MIN_POSITIVE);
        map.view_mut((b * d * d, 0), (d * d, d * d)).copy_from(&(block / cr(scale)));
    }
    let mut sv: Vec<f64> = linalg::singular_values(&map);
    sv.resize(d * d, 0.0);
    let smax = sv[0].max(f64::MIN_POSITIVE);
    let cut = tol.max(1e-10) * smax;
    let ns = linalg::null_space(&map, tol.max(1e-10));
    let basis: Vec<CMat> = ns.iter().map(|v: &CVec| CMat::from_column_slice(d, d, v.as_slice())).collect();
    let smallest_nonzero_singular = sv.iter().copied().filter(|&s| s > cut).fold(None, |acc: Option<f64>, s| {
        Some(acc.map_or(s, |a| a.min(s)))
    });
    Ok(Commutant { anchor: Some(anchor), dimension: basis.len(), smallest_nonzero_singular, basis })
}

/// `S / det(S)^{1/d}` with the principal root.
pub fn sl_normalize(s: &CMat) -> CMat {
    let det = linalg::det(s);
    let root = det.powf(1.0 / s.nrows() as f64);
    s / root
}

fn tensor_power_candidates(
    n: usize,
    h: &[CMat],
    required: &[usize],
    tol: f64,
    rng: &mut Rng,
) -> Result<Vec<(LocalOperator, bool)>> {
    let com = tensor_power_commutant(h, required, tol)?;
    if com.dimension <= 1 {
        return Ok(vec![]);
    }
    let d = h[0].nrows();
    let Some(anchor) = com.anchor else {
        let s = sl_normalize(&random::gaussian_matrix(rng, d));
        return Ok(vec![(LocalOperator::tensor_power(&s, n)?, true)]);
    };
    let mut m = CMat::zeros(d, d);
    for b in &com.basis {
        m += b * random::gaussian(rng);
    }
    let herm = linalg::hermitian_part(&m);
    let spread = fro(&herm).max(f64::MIN_POSITIVE);
    let u = linalg::exp_i_hermitian(&(herm * cr(2.0 / spread)))?;
    let s = pd_inv_sqrt(&h[anchor])? * u * psd_sqrt(&h[anchor])?;
    Ok(vec![(LocalOperator::tensor_power(&sl_normalize(&s), n)?, true)])
}

fn sx_p(u: C64) -> CMat {
    pauli_x() * p_z(u)
}

/// Cosets of the stabilizer, up to scalars: sites `(0,2)` share parameter `p1`
/// and sites `(1,3)` share `p2`; site `j+2` carries `k / p`.
fn gabcd_b_candidates(h: &[CMat], required: &[usize], tol: f64, rng: &mut Rng) -> Vec<(LocalOperator, bool)> {
    let i = c(0.0, 1.0);
    // (sigma-type flags per site, k)
    let cosets: [([bool; 4], C64); 4] = [
        ([false, false, false, false], cr(1.0)),
        ([true, true, true, true], cr(1.0)),
        ([true, false, true, false], i),
        ([false, true, false, true], i),
    ];
    let site_allowed = |site: usize, sigma: bool| -> Allowed {
        if !required.contains(&site) {
            Allowed::Any
        } else if sigma {
            allowed_sx_p(&h[site], tol)
        } else {
            allowed_p(&h[site], tol)
        }
    };
    let mut out = Vec::new();
    for (sigma, k) in cosets {
        let mut params = Vec::new();
        let mut free = false;
        for pair in 0..2 {
            let first = site_allowed(pair, sigma[pair]);
            let second = site_allowed(pair + 2, sigma[pair + 2]).reciprocal(k);
            match first.intersect(second) {
                Some(a) => {
                    free |= a.is_free();
                    params.push(a.pick(rng));
                }
                None => {
                    params.clear();
                    break;
                }
            }
        }
        if params.len() != 2 {
            continue;
        }
        for &p1 in &params[0] {
            for &p2 in &params[1] {
                let z = [p1, p2, k / p1, k / p2];
                let factors = (0..4).map(|s| if sigma[s] { sx_p(z[s]) } else { p_z(z[s]) }).collect();
                out.push((LocalOperator::new(factors).expect("2x2"), free));
            }
        }
    }
    out
}

fn labc2_element(x: C64, y: C64, z: C64) -> LocalOperator {
    let z2 = z * z;
    LocalOperator::new(vec![t_xy(z2, x * z), t_xy(z2.inv(), y / z), t_xy(z2, -x * z), t_xy(z2.inv(), -y / z)])
        .expect("2x2")
}

/// `T_{X,Y}` quasi-commutes iff `|X| = 1` and `Y = (b/a)(1 - X)`; paired sites
/// `(0,2)` force `(1 - z^2)(r_0 + r_2) = 0` with `r = b/a`, likewise `(1,3)`.
fn labc2_candidates(h: &[CMat], required: &[usize], tol: f64, rng: &mut Rng) -> Vec<(LocalOperator, bool)> {
    let r: Vec<C64> = h.iter().map(|m| entries(m).1 / entries(m).0).collect();
    let req = |s: usize| required.contains(&s);
    let pair_forces_trivial = |a: usize, b: usize| {
        req(a) && req(b) && (r[a] + r[b]).norm() > tol * (r[a].norm() + r[b].norm()).max(1.0)
    };
    let z = if pair_forces_trivial(0, 2) || pair_forces_trivial(1, 3) {
        cr(1.0)
    } else if required.is_empty() {
        random::nonzero(rng)
    } else {
        generic_phase(rng).sqrt()
    };
    let z2 = z * z;
    let x = if req(0) {
        r[0] * (cr(1.0) - z2) / z
    } else if req(2) {
        -r[2] * (cr(1.0) - z2) / z
    } else {
        random::gaussian(rng)
    };
    let y = if req(1) {
        r[1] * (cr(1.0) - z2.inv()) * z
    } else if req(3) {
        -r[3] * (cr(1.0) - z2.inv()) * z
    } else {
        random::gaussian(rng)
    };
    vec![(labc2_element(x, y, z), true)]
}

fn la2b2_element(m: usize, y: C64, z: C64) -> LocalOperator {
    let base = [t_xy(cr(1.0), y), p_z(z.inv()), t_xy(cr(1.0), -y), p_z(z)];
    let flip = [pauli_z(), pauli_y(), pauli_z(), pauli_y()];
    let factors = base
        .into_iter()
        .zip(flip)
        .map(|(b, f)| if m == 1 { f * b } else { b })
        .collect();
    LocalOperator::new(factors).expect("2x2")
}

/// `m = 0`: `T_{1,y}` needs `y = 0`. `m = 1`: `sigma_z T_{1,y}` needs `y = 2b/a`,
/// so site 2 needs `-y = 2 b_2 / a_2`; `sigma_y P_w` needs `w^2 = -(a/c)(conj b / b)`.
fn la2b2_candidates(h: &[CMat], required: &[usize], tol: f64, rng: &mut Rng) -> Vec<(LocalOperator, bool)> {
    let req = |s: usize| required.contains(&s);
    let mut out = Vec::new();
    for m in 0..2 {
        let y_at = |s: usize, sign: f64| -> C64 {
            if m == 0 {
                cr(0.0)
            } else {
                let (a, b, _) = entries(&h[s]);
                b * (2.0 * sign / a)
            }
        };
        let y = match (req(0), req(2)) {
            (true, true) => {
                let (y0, y2) = (y_at(0, 1.0), y_at(2, -1.0));
                if !close(y0, y2) && (y0 - y2).norm() > tol {
                    continue;
                }
                y0
            }
            (true, false) => y_at(0, 1.0),
            (false, true) => y_at(2, -1.0),
            (false, false) => random::gaussian(rng),
        };
        let site_z = |s: usize| -> Allowed {
            if !req(s) {
                Allowed::Any
            } else if m == 0 {
                allowed_p(&h[s], tol)
            } else {
                allowed_sy_p(&h[s], tol)
            }
        };
        // site 1 carries 1/z, site 3 carries z
        let Some(za) = site_z(1).reciprocal(cr(1.0)).intersect(site_z(3)) else {
            continue;
        };
        let free = za.is_free() || !(req(0) || req(2));
        for z in za.pick(rng) {
            out.push((la2b2_element(m, y, z), free));
        }
    }
    out
}

/// Random member of the family with its defining constraints enforced.
pub fn sample_family(family: &SymmetryFamily, seed: u64) -> Result<LocalOperator> {
    family.validate()?;
    let mut rng = rng_from_seed(seed);
    let rng = &mut rng;
    Ok(match family {
        SymmetryFamily::FiniteGroup { elements } => elements[rng.random_range(0..elements.len())].clone(),
        SymmetryFamily::Ghz { n } => {
            let m = rng.random_range(0..2);
            let mut z: Vec<C64> = (0..n - 1).map(|_| random::nonzero(rng)).collect();
            z.push(z.iter().product::<C64>().inv());
            LocalOperator::new(z.into_iter().map(|zi| if m == 0 { p_z(zi) } else { p_z(zi) * pauli_x() }).collect())?
        }
        SymmetryFamily::W { n } => {
            let x = random::nonzero(rng);
            let mut y: Vec<C64> = (0..n - 1).map(|_| random::gaussian(rng)).collect();
            y.push(-y.iter().sum::<C64>());
            let mut factors: Vec<CMat> = y.into_iter().map(|yi| t_xy(x, yi)).collect();
            factors[0] /= x;
            LocalOperator::new(factors)?
        }
        SymmetryFamily::TensorPower { n, d } => {
            LocalOperator::tensor_power(&sl_normalize(&random::gaussian_matrix(rng, *d)), *n)?
        }
        SymmetryFamily::FourQubit { case } => match case {
            FourQubitCase::GabcdA => LocalOperator::tensor_power(&sl_normalize(&random::gaussian_matrix(rng, 2)), 4)?,
            FourQubitCase::GabcdB => {
                let coset = rng.random_range(0..4);
                let (p1, p2) = (random::nonzero(rng), random::nonzero(rng));
                let k = if coset >= 2 { c(0.0, 1.0) } else { cr(1.0) };
                let sigma = [[false; 4], [true; 4], [true, false, true, false], [false, true, false, true]][coset];
                let z = [p1, p2, k / p1, k / p2];
                LocalOperator::new((0..4).map(|s| if sigma[s] { sx_p(z[s]) } else { p_z(z[s]) }).collect())?
            }
            FourQubitCase::Labc2 => {
                labc2_element(random::gaussian(rng), random::gaussian(rng), random::nonzero(rng))
            }
            FourQubitCase::La2b2 => {
                la2b2_element(rng.random_range(0..2), random::gaussian(rng), random::nonzero(rng))
            }
        },
    })
}

/// `S^dagger H S ~ H` checked with the spectral form, used by tests as a second opinion.
pub fn eigen_quasi_commute(s: &CMat, h: &CMat, tol: f64) -> Result<bool> {
    let m = dagger(s) * h * s;
    let eh = herm_eig(h)?;
    let em = herm_eig(&m)?;
    let ratio = em.values.last().unwrap() / eh.values.last().unwrap();
    Ok(fro(&(m - h * cr(ratio))) <= tol * fro(h) * ratio.abs().max(1e-300))
}
