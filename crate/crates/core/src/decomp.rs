//! Controlled-unitary preparation of diagonal-family `A_3` states.
//!
//! Qutrit 1 starts in `|+~> = (|0> + |1> + |2>)/sqrt 3`, qutrits 2 and 3 in
//! `sqrt(l+)|00> + sqrt(l-)|11>`. The two gates
//! `U_1j = sum_k |k><k| (x) (U_j^+ D_w U_j)^k` then produce
//! `(V (x) U_2^+ (x) U_3^+) |psi(a1, a2, b1, b2)>` with
//! `|psi> ~ diag(sqrt a1, sqrt a2, 1) (x) diag(sqrt b1, sqrt b2, 1) (x) 1 |A_3>`.
//!
//! Note the slotting: here `a1, a2` sit on site 1 and `b1, b2` on site 2.
//! [`DecompParams::from_family`] converts from [`DiagonalFamilyParams`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::qtensor::json;
use crate::qtensor::linalg::{c, commutator, cr, dagger, diag, fro, kron, matrix_power, phase_aligned_distance, unitarity_residual, eye, CMat, C64};
use crate::qtensor::PureState;
use crate::states::{diagonal_a3_state, DiagonalFamilyParams};
use crate::{Error, Result};

/// Relative `|b1 - b2|` below which the equal branch is used.
pub const BRANCH_SWITCH: f64 = 1e-10;
/// Relative `|b1 - b2|` below which both branches are evaluated.
pub const BRANCH_WINDOW: f64 = 1e-6;
/// Slack allowed on `2 chi - 1` before it is treated as a failure.
pub const CHI_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl DecompParams {
    pub fn new(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let p = Self { alpha1, alpha2, beta1, beta2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter(format!("parameters must be positive, got {v:?}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha1, self.alpha2, self.beta1, self.beta2]
    }

    /// Family slots `(alpha1, beta1 | alpha2, beta2)` become `(a1, a2 | b1, b2)`.
    pub fn from_family(p: &DiagonalFamilyParams) -> Self {
        Self { alpha1: p.alpha1, alpha2: p.beta1, beta1: p.alpha2, beta2: p.beta2 }
    }

    pub fn to_family(&self) -> DiagonalFamilyParams {
        DiagonalFamilyParams { alpha1: self.alpha1, beta1: self.alpha2, alpha2: self.beta1, beta2: self.beta2 }
    }

    /// The normalized target state.
    pub fn state(&self) -> Result<PureState> {
        self.validate()?;
        diagonal_a3_state(&[[self.alpha1, self.alpha2, 1.0], [self.beta1, self.beta2, 1.0], [1.0; 3]])
    }

    fn relative_gap(&self) -> f64 {
        (self.beta1 - self.beta2).abs() / self.beta1.max(self.beta2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Generic,
    BetaEqual,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompData {
    pub params: DecompParams,
    pub branch: Branch,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// `x_{+,i}` for `i = 1, 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_plus: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_minus: Option<[f64; 2]>,
    /// `N_0^(m)` for `m = 0, 1`.
    pub n0: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_plus: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_minus: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_prime: Option<f64>,
    /// `M'^(m)` for `m = 0, 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_prime: Option<[f64; 2]>,
    #[serde(with = "json::matrix")]
    pub u2: CMat,
    #[serde(with = "json::matrix")]
    pub u3: CMat,
}

fn real(rows: [[f64; 3]; 3]) -> CMat {
    CMat::from_fn(3, 3, |i, j| cr(rows[i][j]))
}

fn gamma_of(p: &DecompParams) -> f64 {
    let DecompParams { alpha1: a1, alpha2: a2, beta1: b1, beta2: b2 } = *p;
    a1 + a2 + b1 + b2 + a1 * b2 + a2 * b1
}

fn generic(p: &DecompParams) -> Result<DecompData> {
    let DecompParams { alpha1: a1, alpha2: a2, beta1: b1, beta2: b2 } = *p;
    if b1 == b2 {
        return Err(Error::InvalidParameter("generic branch needs beta1 != beta2".into()));
    }
    let g = gamma_of(p);
    let chi = (g * g - 2.0 * (a1 + a2 + 1.0) * ((a1 + b1) * b2 + a2 * b1)) / (g * g);
    let disc = 2.0 * chi - 1.0;
    if disc < -CHI_SLACK {
        return Err(Error::Numerical(format!("2 chi - 1 = {disc:e} is negative")));
    }
    let root = disc.max(0.0).sqrt();
    let (lp, lm) = ((1.0 + root) / 2.0, (1.0 - root) / 2.0);
    let x = |l: f64, bi: f64| g * l - a1 - a2 - bi;
    let (xp, xm) = ([x(lp, b1), x(lp, b2)], [x(lm, b1), x(lm, b2)]);
    let n0 = |m: i32| (1.0 + a1 / b1.powi(m) + a2 / b2.powi(m)).sqrt();
    let nl = |m: i32, xs: [f64; 2]| {
        (a1 * b2.powi(m) * xs[0] * xs[0] + a2 * b1.powi(m) * xs[1] * xs[1] + a1 * a2 * (b1 - b2).powi(2)).sqrt()
    };
    let (np, nm) = ([nl(0, xp), nl(1, xp)], [nl(0, xm), nl(1, xm)]);
    let n0v = [n0(0), n0(1)];
    let s = (b1 - b2).signum();
    let d = (a1 * a2).sqrt() * (b1 - b2);
    let u2 = real([
        [-(a2 * b1).sqrt() * xp[1] / np[1], -(a2 * b1).sqrt() * xm[1] / nm[1], (a1 / b1).sqrt() / n0v[1]],
        [(a1 * b2).sqrt() * xp[0] / np[1], (a1 * b2).sqrt() * xm[0] / nm[1], (a2 / b2).sqrt() / n0v[1]],
        [d / np[1], d / nm[1], 1.0 / n0v[1]],
    ]) * cr(s);
    let u3 = real([
        [-a2.sqrt() * xm[1] / nm[0], a2.sqrt() * xp[1] / np[0], a1.sqrt() / n0v[0]],
        [a1.sqrt() * xm[0] / nm[0], -a1.sqrt() * xp[0] / np[0], a2.sqrt() / n0v[0]],
        [d / nm[0], -d / np[0], 1.0 / n0v[0]],
    ]);
    Ok(DecompData {
        params: *p,
        branch: Branch::Generic,
        lambda_plus: lp,
        lambda_minus: lm,
        gamma: g,
        chi: Some(chi),
        sigma: Some(s),
        x_plus: Some(xp),
        x_minus: Some(xm),
        n0: n0v,
        n_plus: Some(np),
        n_minus: Some(nm),
        n_prime: None,
        m_prime: None,
        u2,
        u3,
    })
}

/// Equal branch at `beta = (b1 + b2)/2`.
fn beta_equal(p: &DecompParams) -> DecompData {
    let DecompParams { alpha1: a1, alpha2: a2, .. } = *p;
    let b = (p.beta1 + p.beta2) / 2.0;
    let g = a1 + a2 + 2.0 * b + a1 * b + a2 * b;
    let lp = (a1 + a2 + 1.0) * b / g;
    let np = (a1 + a2).sqrt();
    let mp = |m: i32| np * (a1 + a2 + b.powi(m)).sqrt();
    let n0 = |m: i32| (1.0 + a1 / b.powi(m) + a2 / b.powi(m)).sqrt();
    let (m0, m1) = (mp(0), mp(1));
    let n0v = [n0(0), n0(1)];
    let u2 = real([
        [-a2.sqrt() / np, -(a1 * b).sqrt() / m1, (a1 / b).sqrt() / n0v[1]],
        [a1.sqrt() / np, -(a2 * b).sqrt() / m1, (a2 / b).sqrt() / n0v[1]],
        [0.0, (a1 + a2) / m1, 1.0 / n0v[1]],
    ]);
    let u3 = real([
        [-a1.sqrt() / m0, a2.sqrt() / np, a1.sqrt() / n0v[0]],
        [-a2.sqrt() / m0, -a1.sqrt() / np, a2.sqrt() / n0v[0]],
        [(a1 + a2) / m0, 0.0, 1.0 / n0v[0]],
    ]);
    DecompData {
        params: *p,
        branch: Branch::BetaEqual,
        lambda_plus: lp,
        lambda_minus: 1.0 - lp,
        gamma: g,
        chi: None,
        sigma: None,
        x_plus: None,
        x_minus: None,
        n0: n0v,
        n_plus: None,
        n_minus: None,
        n_prime: Some(np),
        m_prime: Some([m0, m1]),
        u2,
        u3,
    }
}

/// Picks the branch by comparing `b1` and `b2`.
pub fn decompose(p: &DecompParams) -> Result<DecompData> {
    p.validate()?;
    if p.relative_gap() < BRANCH_SWITCH {
        Ok(beta_equal(p))
    } else {
        generic(p)
    }
}

/// Forces a branch; the equal branch uses the mean of `b1` and `b2`.
pub fn decompose_branch(p: &DecompParams, branch: Branch) -> Result<DecompData> {
    p.validate()?;
    match branch {
        Branch::Generic => generic(p),
        Branch::BetaEqual => Ok(beta_equal(p)),
    }
}

/// `diag(1, e^{-2 pi i/3}, e^{2 pi i/3})`.
pub fn d_omega() -> CMat {
    let t = 2.0 * PI / 3.0;
    diag(&[cr(1.0), c(t.cos(), -t.sin()), c(t.cos(), t.sin())])
}

/// `(1/sqrt 3) [[1,1,1],[1,w,w^2],[1,w^2,w]]` with `w = e^{2 pi i/3}`.
pub fn v_matrix() -> CMat {
    let t = 2.0 * PI / 3.0;
    let w = c(t.cos(), t.sin());
    let s = 1.0 / 3f64.sqrt();
    let one = cr(1.0);
    CMat::from_row_slice(3, 3, &[one, one, one, one, w, w * w, one, w * w, w]) * cr(s)
}

/// `sum_k |k><k| (x) (U^+ D_w U)^k` on qutrits `(1, j)`, embedded in three qutrits.
pub fn controlled_gate(u: &CMat, target_site: usize) -> Result<CMat> {
    if !(target_site == 1 || target_site == 2) {
        return Err(Error::InvalidParameter("target site must be 1 or 2 (0-indexed)".into()));
    }
    let w = dagger(u) * d_omega() * u;
    let mut out = CMat::zeros(27, 27);
    for k in 0..3 {
        let mut proj = CMat::zeros(3, 3);
        proj[(k, k)] = cr(1.0);
        let wk = matrix_power(&w, k);
        let factors = if target_site == 1 { [proj, wk, eye(3)] } else { [proj, eye(3), wk] };
        out += kron(&factors);
    }
    Ok(out)
}

fn input_state(d: &DecompData) -> Vec<C64> {
    let s3 = 1.0 / 3f64.sqrt();
    let mut v = vec![C64::default(); 27];
    for k in 0..3 {
        v[9 * k] = cr(s3 * d.lambda_plus.max(0.0).sqrt());
        v[9 * k + 4] = cr(s3 * d.lambda_minus.max(0.0).sqrt());
    }
    v
}

/// `U_13 U_12 (|+~> (x) (sqrt(l+)|00> + sqrt(l-)|11>))`.
pub fn circuit_state(d: &DecompData) -> Result<PureState> {
    let u12 = controlled_gate(&d.u2, 1)?;
    let u13 = controlled_gate(&d.u3, 2)?;
    let inp = nalgebra::DVector::from_vec(input_state(d));
    let out = u13 * (u12 * inp);
    PureState::new(vec![3, 3, 3], out.iter().copied().collect())
}

/// `(V (x) U_2^+ (x) U_3^+) |psi>`.
pub fn target_state(d: &DecompData) -> Result<PureState> {
    let psi = d.params.state()?;
    let op = kron(&[v_matrix(), dagger(&d.u2), dagger(&d.u3)]);
    let out = op * nalgebra::DVector::from_column_slice(psi.amps());
    PureState::new(vec![3, 3, 3], out.iter().copied().collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchResidual {
    pub branch: Branch,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompReport {
    pub params: DecompParams,
    pub data: DecompData,
    pub lambda_sum_residual: f64,
    pub u2_unitarity: f64,
    pub u3_unitarity: f64,
    pub u12_unitarity: f64,
    pub u13_unitarity: f64,
    pub gate_commutator: f64,
    /// `l- = 0`: the two-qutrit resource is a product state.
    pub product_resource: bool,
    pub residual: f64,
    /// Set inside the near-equal window, where both branches are evaluated.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub compared: Vec<BranchResidual>,
    pub tol: f64,
    pub pass: bool,
}

fn residual_of(d: &DecompData) -> Result<f64> {
    let a = circuit_state(d)?;
    let b = target_state(d)?;
    Ok(phase_aligned_distance(a.amps(), b.amps()))
}

/// Runs the circuit and compares it with the locally rotated target.
pub fn verify_decomposition(p: &DecompParams, tol: f64) -> Result<DecompReport> {
    let mut data = decompose(p)?;
    let mut residual = residual_of(&data)?;
    let mut compared = Vec::new();
    if p.relative_gap() < BRANCH_WINDOW {
        let mut candidates = vec![(data.clone(), residual)];
        let other = if data.branch == Branch::Generic { Branch::BetaEqual } else { Branch::Generic };
        if let Ok(alt) = decompose_branch(p, other) {
            let r = residual_of(&alt)?;
            candidates.push((alt, r));
        }
        compared = candidates.iter().map(|(d, r)| BranchResidual { branch: d.branch, residual: *r }).collect();
        let (d, r) = candidates.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty");
        data = d;
        residual = r;
    }
    let u12 = controlled_gate(&data.u2, 1)?;
    let u13 = controlled_gate(&data.u3, 2)?;
    let lambda_sum_residual = (data.lambda_plus + data.lambda_minus - 1.0).abs();
    let u2_unitarity = unitarity_residual(&data.u2);
    let u3_unitarity = unitarity_residual(&data.u3);
    let pass = residual < tol
        && residual.is_finite()
        && u2_unitarity < tol.max(1e-9)
        && u3_unitarity < tol.max(1e-9)
        && (0.0..=1.0).contains(&data.lambda_plus)
        && (0.0..=1.0).contains(&data.lambda_minus);
    Ok(DecompReport {
        params: *p,
        lambda_sum_residual,
        u2_unitarity,
        u3_unitarity,
        u12_unitarity: unitarity_residual(&u12),
        u13_unitarity: unitarity_residual(&u13),
        gate_commutator: fro(&commutator(&u12, &u13)),
        product_resource: data.lambda_minus.abs() < 1e-12,
        residual,
        compared,
        data,
        tol,
        pass,
    })
}
