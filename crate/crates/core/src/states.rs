//! Concrete states: totally antisymmetric, GHZ, W, even-parity and the
//! diagonal family `diag(sqrt a1, sqrt b1, 1) (x) diag(sqrt a2, sqrt b2, 1) (x) 1 |A_3>`.

use serde::{Deserialize, Serialize};

use crate::qtensor::linalg::{cr, diag_real};
use crate::qtensor::{apply_local, LocalOperator, PureState, C64};
use crate::{Error, Result};

/// Levi-Civita symbol on 0-indexed labels: sign of the permutation, or 0 on repeats.
pub fn levi_civita(idx: &[usize]) -> i32 {
    let n = idx.len();
    let mut seen = vec![false; n];
    for &i in idx {
        if i >= n || seen[i] {
            return 0;
        }
        seen[i] = true;
    }
    let mut inversions = 0;
    for a in 0..n {
        for b in a + 1..n {
            if idx[a] > idx[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn need_sites(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    Ok(())
}

/// `|A_n> = (1/sqrt n!) sum eps_{i1..in} |i1..in>` on `n` qunits.
pub fn antisymmetric(n: usize) -> Result<PureState> {
    need_sites(n)?;
    let dims = vec![n; n];
    let mut s = PureState::zeros(dims)?;
    let amp = 1.0 / factorial(n).sqrt();
    let mut amps = s.amps().to_vec();
    for p in permutations(n) {
        let k = s.flat_index(&p)?;
        amps[k] = cr(amp * levi_civita(&p) as f64);
    }
    s = PureState::new(s.dims().to_vec(), amps)?;
    Ok(s)
}

/// `(|0..0> + |1..1> + ... + |d-1..d-1>)/sqrt d`.
pub fn ghz(n: usize, d: usize) -> Result<PureState> {
    need_sites(n)?;
    if d < 2 {
        return Err(Error::InvalidParameter(format!("need d >= 2, got {d}")));
    }
    let mut amps = vec![C64::default(); d.pow(n as u32)];
    let stride: usize = (0..n).map(|j| d.pow(j as u32)).sum();
    for k in 0..d {
        amps[k * stride] = cr(1.0 / (d as f64).sqrt());
    }
    PureState::new(vec![d; n], amps)
}

/// Symmetric single-excitation state on `n` qubits.
pub fn w(n: usize) -> Result<PureState> {
    need_sites(n)?;
    let mut amps = vec![C64::default(); 1 << n];
    for j in 0..n {
        amps[1 << j] = cr(1.0 / (n as f64).sqrt());
    }
    PureState::new(vec![2; n], amps)
}

/// Uniform superposition of even-weight strings on `n` qubits; fixed by `sigma_z^{(x)n}`.
pub fn even_parity(n: usize) -> Result<PureState> {
    need_sites(n)?;
    let norm = 1.0 / ((1usize << (n - 1)) as f64).sqrt();
    let amps = (0..1usize << n)
        .map(|k| if k.count_ones() % 2 == 0 { cr(norm) } else { C64::default() })
        .collect();
    PureState::new(vec![2; n], amps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalFamilyParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl DiagonalFamilyParams {
    pub fn new(alpha1: f64, beta1: f64, alpha2: f64, beta2: f64) -> Result<Self> {
        let p = Self { alpha1, beta1, alpha2, beta2 };
        p.validate()?;
        Ok(p)
    }

    /// `beta1 = beta2 = 1`.
    pub fn type_two(alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::new(alpha1, 1.0, alpha2, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.as_array();
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter(format!("parameters must be positive, got {v:?}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha1, self.beta1, self.alpha2, self.beta2]
    }

    /// Site diagonals `(alpha1, beta1, 1)`, `(alpha2, beta2, 1)`, `(1, 1, 1)`.
    pub fn diagonals(&self) -> [[f64; 3]; 3] {
        [[self.alpha1, self.beta1, 1.0], [self.alpha2, self.beta2, 1.0], [1.0; 3]]
    }
}

/// Normalized `diag(sqrt a1, sqrt b1, 1) (x) diag(sqrt a2, sqrt b2, 1) (x) 1 |A_3>`.
pub fn m_a3_state(p: &DiagonalFamilyParams) -> Result<PureState> {
    p.validate()?;
    diagonal_a3_state(&p.diagonals())
}

/// Normalized `sqrt(D1) (x) sqrt(D2) (x) sqrt(D3) |A_3>` for positive diagonals.
pub fn diagonal_a3_state(diags: &[[f64; 3]; 3]) -> Result<PureState> {
    if diags.iter().flatten().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidParameter("diagonal entries must be positive".into()));
    }
    let op = LocalOperator::new(
        diags.iter().map(|d| diag_real(&[d[0].sqrt(), d[1].sqrt(), d[2].sqrt()])).collect(),
    )?;
    Ok(apply_local(&op, &antisymmetric(3)?)?.normalized())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MA3Type {
    TypeI,
    TypeII,
    TypeIII,
    NotInM,
}

/// Relative tolerance for the equalities in the classification lists.
pub const CLASSIFY_TOL: f64 = 1e-12;

fn same(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// The literal constraint lists, no normalization.
pub fn classify_literal(p: &DiagonalFamilyParams, tol: f64) -> MA3Type {
    let [a1, b1, a2, b2] = p.as_array();
    let one = |x| same(x, 1.0, tol);
    if one(a1) && one(b1) && one(a2) && one(b2) {
        return MA3Type::TypeI;
    }
    if one(b1) && one(b2) && !same(a1, a2, tol) && !one(a1) && !one(a2) {
        return MA3Type::TypeII;
    }
    let distinct = !same(a1, b1, tol) && !same(b1, b2, tol) && !same(b2, a2, tol) && !same(a1, a2, tol);
    if distinct && !same(a1 / b1, a2 / b2, tol) && ![a1, b1, a2, b2].into_iter().any(one) {
        return MA3Type::TypeIII;
    }
    MA3Type::NotInM
}

/// Result of [`canonicalize_m_a3`]: the relabeled parameters and the basis permutation used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Canonical {
    pub kind: MA3Type,
    pub params: DiagonalFamilyParams,
    /// New slot `k` holds old slot `perm[k]`.
    pub perm: [usize; 3],
}

/// Tries the six simultaneous basis relabelings (a local unitary) and
/// returns the first under which the literal lists succeed.
pub fn canonicalize_m_a3(p: &DiagonalFamilyParams, tol: f64) -> Canonical {
    let diags = p.diagonals();
    for perm in permutations(3) {
        let perm = [perm[0], perm[1], perm[2]];
        let v1: Vec<f64> = perm.iter().map(|&k| diags[0][k] / diags[0][perm[2]]).collect();
        let v2: Vec<f64> = perm.iter().map(|&k| diags[1][k] / diags[1][perm[2]]).collect();
        let q = DiagonalFamilyParams { alpha1: v1[0], beta1: v1[1], alpha2: v2[0], beta2: v2[1] };
        let kind = classify_literal(&q, tol);
        if kind != MA3Type::NotInM {
            return Canonical { kind, params: q, perm };
        }
    }
    Canonical { kind: MA3Type::NotInM, params: *p, perm: [0, 1, 2] }
}

pub fn classify_m_a3(p: &DiagonalFamilyParams) -> MA3Type {
    canonicalize_m_a3(p, CLASSIFY_TOL).kind
}

/// Parses `A3`, `An:k`, `GHZ:n`, `GHZ:n,d`, `W:n`, `EVEN:n` and `MA3:a1,b1,a2,b2`.
pub fn parse_state_spec(spec: &str) -> Result<PureState> {
    let spec = spec.trim();
    let (head, tail) = match spec.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (spec, None),
    };
    let ints = |t: Option<&str>| -> Result<Vec<usize>> {
        t.ok_or_else(|| Error::Parse(format!("{spec}: missing arguments")))?
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{spec}: {e}"))))
            .collect()
    };
    match head.to_ascii_uppercase().as_str() {
        "AN" => {
            let v = ints(tail)?;
            antisymmetric(*v.first().ok_or_else(|| Error::Parse(spec.into()))?)
        }
        "GHZ" => {
            let v = ints(tail)?;
            match v.as_slice() {
                [n] => ghz(*n, 2),
                [n, d] => ghz(*n, *d),
                _ => Err(Error::Parse(format!("{spec}: expected GHZ:n or GHZ:n,d"))),
            }
        }
        "W" => w(ints(tail)?[0]),
        "EVEN" => even_parity(ints(tail)?[0]),
        "MA3" => {
            let v: Vec<f64> = tail
                .ok_or_else(|| Error::Parse(format!("{spec}: missing parameters")))?
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{spec}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::Parse(format!("{spec}: expected four parameters")));
            }
            m_a3_state(&DiagonalFamilyParams::new(v[0], v[1], v[2], v[3])?)
        }
        h if h.starts_with('A') && tail.is_none() => {
            let n = h[1..].parse::<usize>().map_err(|e| Error::Parse(format!("{spec}: {e}")))?;
            antisymmetric(n)
        }
        _ => Err(Error::Parse(format!("unknown state '{spec}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtensor::{inner, is_fully_entangled, reduced_density};

    #[test]
    fn singlet() {
        let a2 = antisymmetric(2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((a2.amp(&[0, 1]).unwrap() - cr(s)).norm() < 1e-15);
        assert!((a2.amp(&[1, 0]).unwrap() + cr(s)).norm() < 1e-15);
        assert!(antisymmetric(1).is_err());
    }

    #[test]
    fn a3_amplitudes_and_norm() {
        let a3 = antisymmetric(3).unwrap();
        let nonzero = a3.amps().iter().filter(|a| a.norm() > 0.0).count();
        assert_eq!(nonzero, 6);
        assert!((inner(&a3, &a3).unwrap() - cr(1.0)).norm() < 1e-14);
        assert_eq!(a3.amp(&[1, 0, 0]).unwrap(), C64::default());
        assert!((a3.amp(&[1, 0, 2]).unwrap() * 6f64.sqrt() + cr(1.0)).norm() < 1e-14);
    }

    #[test]
    fn ghz_and_w() {
        let g2 = ghz(2, 2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(g2.amps(), &[cr(s), cr(0.0), cr(0.0), cr(s)]);
        let w3 = w(3).unwrap();
        for idx in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            assert!((w3.amp(&idx).unwrap() - cr(1.0 / 3f64.sqrt())).norm() < 1e-15);
        }
        let rho = reduced_density(&ghz(4, 2).unwrap(), 2).unwrap();
        assert!((rho - diag_real(&[0.5, 0.5])).norm() < 1e-15);
        assert!(is_fully_entangled(&even_parity(3).unwrap(), 1e-9));
    }

    #[test]
    fn classification_examples() {
        let p = |a, b, c, d| DiagonalFamilyParams::new(a, b, c, d).unwrap();
        assert_eq!(classify_m_a3(&p(1.0, 1.0, 1.0, 1.0)), MA3Type::TypeI);
        assert_eq!(classify_m_a3(&p(2.0, 1.0, 3.0, 1.0)), MA3Type::TypeII);
        assert_eq!(classify_m_a3(&p(2.0, 3.0, 5.0, 7.0)), MA3Type::TypeIII);
        assert_eq!(classify_m_a3(&p(2.0, 1.0, 2.0, 1.0)), MA3Type::NotInM);
        assert_eq!(classify_m_a3(&p(2.0, 3.0, 4.0, 6.0)), MA3Type::NotInM);
        // alpha slots equal to one become type (ii) after swapping the first two basis states
        assert_eq!(classify_m_a3(&p(1.0, 2.0, 1.0, 3.0)), MA3Type::TypeII);
        assert!(DiagonalFamilyParams::new(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn type_two_state_is_fully_entangled() {
        let s = m_a3_state(&DiagonalFamilyParams::type_two(2.0, 3.0).unwrap()).unwrap();
        assert!(is_fully_entangled(&s, 1e-9));
    }

    #[test]
    fn parse_specs() {
        assert_eq!(parse_state_spec("A3").unwrap(), antisymmetric(3).unwrap());
        assert_eq!(parse_state_spec("An:4").unwrap().dims(), &[4, 4, 4, 4]);
        assert_eq!(parse_state_spec("GHZ:3").unwrap(), ghz(3, 2).unwrap());
        assert_eq!(parse_state_spec("W:4").unwrap(), w(4).unwrap());
        assert!(parse_state_spec("MA3:2,1,3,1").is_ok());
        assert!(parse_state_spec("MA3:2,1,3").is_err());
        assert!(parse_state_spec("FOO:3").is_err());
    }
}
