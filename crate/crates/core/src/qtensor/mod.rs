//! Dense n-qudit pure states and tensor-product operators.
//!
//! Amplitudes are stored site-major with site 1 as the most significant index,
//! so the basis ket `|j1 j2 ... jn>` lives at `((j1*d2 + j2)*d3 + j3)...`.
//! States may be unnormalized.

pub mod json;
pub mod linalg;
pub mod random;

pub use linalg::{c, cr, CMat, CVec, C64};

use crate::{Error, Result};

/// Relative tolerance used when a caller does not pass one.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    dims: Vec<usize>,
    amps: Vec<C64>,
}

impl PureState {
    /// Validating constructor: amplitudes must be finite and not all zero.
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let s = Self::from_raw(dims, amps)?;
        if s.amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        if s.is_zero() {
            return Err(Error::InvalidState("all amplitudes are zero".into()));
        }
        Ok(s)
    }

    /// Shape-checked constructor that accepts the zero vector.
    pub fn from_raw(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidState(format!("bad dims {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != amps.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} need {len} amplitudes, got {}",
                amps.len()
            )));
        }
        Ok(Self { dims, amps })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::from_raw(dims, vec![C64::default(); len])
    }

    /// Computational basis ket `|index>`.
    pub fn basis(dims: Vec<usize>, index: &[usize]) -> Result<Self> {
        let mut s = Self::zeros(dims)?;
        let k = s.flat_index(index)?;
        s.amps[k] = cr(1.0);
        Ok(s)
    }

    /// Tensor product of single-site vectors.
    pub fn product(factors: &[Vec<C64>]) -> Result<Self> {
        let dims: Vec<usize> = factors.iter().map(|f| f.len()).collect();
        let mut amps = vec![cr(1.0)];
        for f in factors {
            amps = amps.iter().flat_map(|a| f.iter().map(move |b| a * b)).collect();
        }
        Self::new(dims, amps)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.amps.iter().all(|a| a.norm_sqr() == 0.0)
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::Dimension(format!(
                "index of length {} for {} sites",
                index.len(),
                self.dims.len()
            )));
        }
        let mut k = 0;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i >= d {
                return Err(Error::Dimension(format!("index {i} out of range {d}")));
            }
            k = k * d + i;
        }
        Ok(k)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = k % d;
            k /= d;
        }
        out
    }

    pub fn amp(&self, index: &[usize]) -> Result<C64> {
        Ok(self.amps[self.flat_index(index)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Unit-norm copy; the zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(cr(1.0 / n))
    }

    pub fn scaled(&self, f: C64) -> Self {
        Self { dims: self.dims.clone(), amps: self.amps.iter().map(|a| a * f).collect() }
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        check_same_dims(&self.dims, &other.dims)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

fn check_same_dims(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// `g_1 (x) g_2 (x) ... (x) g_n`, stored factor-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    factors: Vec<CMat>,
}

impl LocalOperator {
    pub fn new(factors: Vec<CMat>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Dimension("operator without factors".into()));
        }
        for (j, f) in factors.iter().enumerate() {
            if !f.is_square() || f.nrows() == 0 {
                return Err(Error::Dimension(format!(
                    "factor {j} is {}x{}, expected square",
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        Ok(Self { factors })
    }

    pub fn identity(dims: &[usize]) -> Self {
        Self { factors: dims.iter().map(|&d| linalg::eye(d)).collect() }
    }

    /// `m` on `site`, identity elsewhere.
    pub fn on_site(dims: &[usize], site: usize, m: CMat) -> Result<Self> {
        let mut op = Self::identity(dims);
        if site >= dims.len() || m.nrows() != dims[site] || !m.is_square() {
            return Err(Error::Dimension(format!("cannot place {}x{} on site {site}", m.nrows(), m.ncols())));
        }
        op.factors[site] = m;
        Ok(op)
    }

    /// `S (x) S (x) ... (x) S`.
    pub fn tensor_power(m: &CMat, n: usize) -> Result<Self> {
        Self::new(vec![m.clone(); n])
    }

    pub fn factors(&self) -> &[CMat] {
        &self.factors
    }

    pub fn factor(&self, site: usize) -> &CMat {
        &self.factors[site]
    }

    pub fn factor_mut(&mut self, site: usize) -> &mut CMat {
        &mut self.factors[site]
    }

    pub fn n_sites(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    /// Factor-wise product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        check_same_dims(&self.dims(), &other.dims())?;
        Ok(Self { factors: self.factors.iter().zip(&other.factors).map(|(a, b)| a * b).collect() })
    }

    pub fn dagger(&self) -> Self {
        Self { factors: self.factors.iter().map(|f| f.adjoint()).collect() }
    }

    /// Dense Kronecker product; only sensible for small systems.
    pub fn to_matrix(&self) -> CMat {
        linalg::kron(&self.factors)
    }

    /// Operator with every factor multiplied by the given scalars.
    pub fn scaled_factors(&self, scalars: &[C64]) -> Self {
        Self {
            factors: self.factors.iter().zip(scalars).map(|(f, s)| f * *s).collect(),
        }
    }
}

/// Applies a single-site matrix by reshaping the state into `(left, d, right)`.
pub fn apply_site(m: &CMat, site: usize, s: &PureState) -> Result<PureState> {
    let dims = s.dims();
    if site >= dims.len() {
        return Err(Error::Dimension(format!("site {site} of {}", dims.len())));
    }
    let d = dims[site];
    if m.ncols() != d {
        return Err(Error::Dimension(format!(
            "site {site} has dimension {d}, operator has {} columns",
            m.ncols()
        )));
    }
    let rows = m.nrows();
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    let src = s.amps();
    let mut out = vec![C64::default(); left * rows * right];
    for l in 0..left {
        for a in 0..rows {
            let dst = &mut out[(l * rows + a) * right..(l * rows + a + 1) * right];
            for b in 0..d {
                let coef = m[(a, b)];
                if coef.norm_sqr() == 0.0 {
                    continue;
                }
                let row = &src[(l * d + b) * right..(l * d + b + 1) * right];
                for (o, x) in dst.iter_mut().zip(row) {
                    *o += coef * x;
                }
            }
        }
    }
    let mut new_dims = dims.to_vec();
    new_dims[site] = rows;
    PureState::from_raw(new_dims, out)
}

/// `(g_1 (x) ... (x) g_n)|s>` without forming the Kronecker product.
pub fn apply_local(op: &LocalOperator, s: &PureState) -> Result<PureState> {
    if op.n_sites() != s.n_sites() {
        return Err(Error::Dimension(format!(
            "operator on {} sites, state on {}",
            op.n_sites(),
            s.n_sites()
        )));
    }
    let mut out = s.clone();
    for (j, f) in op.factors().iter().enumerate() {
        out = apply_site(f, j, &out)?;
    }
    Ok(out)
}

/// `<a|b>`, conjugate-linear in `a`.
pub fn inner(a: &PureState, b: &PureState) -> Result<C64> {
    check_same_dims(a.dims(), b.dims())?;
    Ok(a.amps().iter().zip(b.amps()).map(|(x, y)| x.conj() * y).sum())
}

/// `Tr_{all but site}(|s><s|)`.
pub fn reduced_density(s: &PureState, site: usize) -> Result<CMat> {
    let dims = s.dims();
    if site >= dims.len() {
        return Err(Error::Dimension(format!("site {site} of {}", dims.len())));
    }
    let d = dims[site];
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    let amps = s.amps();
    let mut rho = CMat::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut acc = C64::default();
            for l in 0..left {
                let ra = &amps[(l * d + a) * right..(l * d + a + 1) * right];
                let rb = &amps[(l * d + b) * right..(l * d + b + 1) * right];
                acc += ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum::<C64>();
            }
            rho[(a, b)] = acc;
            rho[(b, a)] = acc.conj();
        }
    }
    Ok(rho)
}

/// Every single-site reduction has full rank: `lambda_min > tol * lambda_max`.
pub fn is_fully_entangled(s: &PureState, tol: f64) -> bool {
    (0..s.n_sites()).all(|j| {
        reduced_density(s, j)
            .and_then(|rho| linalg::herm_eig(&rho))
            .map(|e| {
                let max = *e.values.last().unwrap();
                max > 0.0 && e.values[0] > tol * max
            })
            .unwrap_or(false)
    })
}

/// Returns `c` with `||a - c b|| <= tol ||a||`.
///
/// Two zero vectors are proportional with factor 1; zero against nonzero is not.
pub fn proportional(a: &[C64], b: &[C64], tol: f64) -> Option<C64> {
    if a.len() != b.len() {
        return None;
    }
    let na = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb2: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    if na == 0.0 && nb2 == 0.0 {
        return Some(cr(1.0));
    }
    if na == 0.0 || nb2 == 0.0 {
        return None;
    }
    let (k, _) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm_sqr().total_cmp(&y.1.norm_sqr()))
        .unwrap();
    let guess = a[k] / b[k];
    let ls: C64 = b.iter().zip(a).map(|(y, x)| y.conj() * x).sum::<C64>() / nb2;
    let resid = |f: C64| a.iter().zip(b).map(|(x, y)| (x - f * y).norm_sqr()).sum::<f64>().sqrt();
    let (f, r) = [(ls, resid(ls)), (guess, resid(guess))]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    (r <= tol * na).then_some(f)
}

pub fn proportional_mat(a: &CMat, b: &CMat, tol: f64) -> Option<C64> {
    if a.shape() != b.shape() {
        return None;
    }
    proportional(a.as_slice(), b.as_slice(), tol)
}

pub fn proportional_states(a: &PureState, b: &PureState, tol: f64) -> Option<C64> {
    if a.dims() != b.dims() {
        return None;
    }
    proportional(a.amps(), b.amps(), tol)
}
