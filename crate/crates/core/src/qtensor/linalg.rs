use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn diag(entries: &[C64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(entries))
}

pub fn diag_real(entries: &[f64]) -> CMat {
    CMat::from_fn(entries.len(), entries.len(), |i, j| {
        if i == j {
            cr(entries[i])
        } else {
            C64::default()
        }
    })
}

/// Builds a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, data: &[C64]) -> CMat {
    CMat::from_row_slice(rows, cols, data)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn kron(factors: &[CMat]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.norm()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// `||M^dagger M - 1||_F`.
pub fn unitarity_residual(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    fro(&(m.adjoint() * m - eye(m.nrows())))
}

pub fn det(m: &CMat) -> C64 {
    m.clone().determinant()
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

/// Hermitian part `(M + M^dagger)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

#[derive(Clone, Debug)]
pub struct HermEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: CMat,
}

/// Eigen-decomposition of the Hermitian part of `m`.
pub fn herm_eig(m: &CMat) -> Result<HermEig> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = m.nrows();
    if d == 0 {
        return Ok(HermEig { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let h = hermitian_part(m);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermEig { values, vectors })
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn herm_func(m: &CMat, f: impl Fn(f64) -> C64) -> Result<CMat> {
    let e = herm_eig(m)?;
    let fd: Vec<C64> = e.values.iter().map(|&x| f(x)).collect();
    Ok(&e.vectors * diag(&fd) * e.vectors.adjoint())
}

/// Singular values, descending.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Smallest eigenvalue relative to the largest; negative or tiny means not PD.
pub fn is_positive_definite(m: &CMat, tol: f64) -> bool {
    if !m.is_square() || m.nrows() == 0 {
        return false;
    }
    if fro(&(m - m.adjoint())) > tol.max(1e-12) * fro(m).max(1.0) {
        return false;
    }
    match herm_eig(m) {
        Ok(e) => {
            let max = *e.values.last().unwrap();
            max > 0.0 && e.values[0] > tol * max
        }
        Err(_) => false,
    }
}

pub fn require_pd(m: &CMat, tol: f64, what: &str) -> Result<()> {
    if is_positive_definite(m, tol) {
        Ok(())
    } else {
        Err(Error::NotPositive(what.to_string()))
    }
}

pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    herm_func(m, |x| cr(x.max(0.0).sqrt()))
}

pub fn pd_inv_sqrt(m: &CMat) -> Result<CMat> {
    let e = herm_eig(m)?;
    if e.values.first().is_some_and(|&v| v <= 0.0) {
        return Err(Error::NotPositive("inverse square root".into()));
    }
    let fd: Vec<C64> = e.values.iter().map(|&x| cr(1.0 / x.sqrt())).collect();
    Ok(&e.vectors * diag(&fd) * e.vectors.adjoint())
}

/// `exp(i M)` for Hermitian `M`.
pub fn exp_i_hermitian(m: &CMat) -> Result<CMat> {
    herm_func(m, |x| C64::from_polar(1.0, x))
}

/// Orthonormal basis of `{x : M x = 0}` up to `tol` relative to the largest singular value.
pub fn null_space(m: &CMat, tol: f64) -> Vec<CVec> {
    let cols = m.ncols();
    if cols == 0 {
        return vec![];
    }
    let padded = if m.nrows() < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = tol * smax.max(1e-300);
    let mut out = Vec::new();
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] <= cut {
            out.push(v_t.row(k).adjoint());
        }
    }
    out
}

/// `(A - B)` where both are scaled to unit norm and aligned in phase; 0 means parallel.
pub fn phase_aligned_distance(a: &[C64], b: &[C64]) -> f64 {
    let na = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { f64::INFINITY };
    }
    let ov: C64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let ph = if ov.norm() > 0.0 { ov / ov.norm() } else { cr(1.0) };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / na * ph - y / nb).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn pauli_x() -> CMat {
    from_rows(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn pauli_y() -> CMat {
    from_rows(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
}

pub fn pauli_z() -> CMat {
    diag_real(&[1.0, -1.0])
}

/// `diag(z, 1/z)`.
pub fn p_z(z: C64) -> CMat {
    diag(&[z, z.inv()])
}

/// `[[1, y], [0, x]]`.
pub fn t_xy(x: C64, y: C64) -> CMat {
    from_rows(2, 2, &[cr(1.0), y, cr(0.0), x])
}

/// Cyclic shift `X|i> = |i+1 mod d>`.
pub fn shift(d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| if i == (j + 1) % d { cr(1.0) } else { cr(0.0) })
}

/// `diag(1, w, w^2, ...)` with `w = exp(2 pi i / d)`.
pub fn clock(d: usize) -> CMat {
    let e: Vec<C64> = (0..d)
        .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / d as f64))
        .collect();
    diag(&e)
}

/// `(1/sqrt d) sum_{jk} w^{jk} |j><k|`.
pub fn fourier(d: usize) -> CMat {
    let s = 1.0 / (d as f64).sqrt();
    CMat::from_fn(d, d, |j, k| {
        C64::from_polar(s, 2.0 * std::f64::consts::PI * ((j * k) % d) as f64 / d as f64)
    })
}

pub fn matrix_power(m: &CMat, k: usize) -> CMat {
    let mut out = eye(m.nrows());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

/// True if `m` is `c * 1` for some scalar within `tol` relative.
pub fn is_scalar_multiple_of_identity(m: &CMat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let d = m.nrows();
    let c = m.trace() / d as f64;
    fro(&(m - eye(d) * c)) <= tol * fro(m).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_of_diagonals() {
        let a = diag_real(&[2.0, 3.0]);
        let b = diag_real(&[5.0, 7.0]);
        let k = kron(&[a, b]);
        assert_eq!(k, diag_real(&[10.0, 14.0, 15.0, 21.0]));
        assert_eq!(kron(&[eye(2), eye(3)]), eye(6));
    }

    #[test]
    fn svd_of_diag() {
        let s = singular_values(&diag_real(&[1.0, 3.0]));
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_is_ascending_and_orthonormal() {
        let m = from_rows(2, 2, &[cr(2.0), c(0.0, 1.0), c(0.0, -1.0), cr(2.0)]);
        let e = herm_eig(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12 && (e.values[1] - 3.0).abs() < 1e-12);
        assert!(unitarity_residual(&e.vectors) < 1e-12);
        assert!(herm_eig(&CMat::zeros(2, 3)).is_err());
    }

    #[test]
    fn sqrt_and_inverse_sqrt() {
        let m = from_rows(2, 2, &[cr(5.0), cr(1.0), cr(1.0), cr(2.0)]);
        let s = psd_sqrt(&m).unwrap();
        assert!(fro(&(&s * &s - &m)) < 1e-12);
        let is = pd_inv_sqrt(&m).unwrap();
        assert!(fro(&(&is * &m * &is - eye(2))) < 1e-12);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = from_rows(1, 3, &[cr(1.0), cr(1.0), cr(0.0)]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.len(), 2);
        for v in ns {
            assert!((&m * v).norm() < 1e-12);
        }
    }

    #[test]
    fn fourier_is_unitary() {
        for d in 2..6 {
            assert!(unitarity_residual(&fourier(d)) < 1e-12);
            assert!(unitarity_residual(&shift(d)) < 1e-12);
            assert!(unitarity_residual(&clock(d)) < 1e-12);
        }
    }

    #[test]
    fn pd_detection() {
        assert!(is_positive_definite(&eye(3), 1e-12));
        assert!(!is_positive_definite(&diag_real(&[1.0, -1.0]), 1e-12));
        assert!(!is_positive_definite(&pauli_y(), 1e-12));
        assert!(!is_positive_definite(&from_rows(2, 2, &[cr(1.0), cr(2.0), cr(0.0), cr(1.0)]), 1e-12));
    }
}
