//! Seeded samplers for matrices, states and positive operators.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::linalg::{self, c, CMat, C64};
use super::PureState;
use crate::Rng;

pub fn gaussian(rng: &mut Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

/// Entries i.i.d. complex Gaussian; invertible with probability one.
pub fn gaussian_matrix(rng: &mut Rng, d: usize) -> CMat {
    CMat::from_fn(d, d, |_, _| gaussian(rng))
}

/// Haar-distributed unitary via QR with phase correction.
pub fn unitary(rng: &mut Rng, d: usize) -> CMat {
    let qr = gaussian_matrix(rng, d).qr();
    let q = qr.q();
    let r = qr.r();
    let phases: Vec<C64> = (0..d)
        .map(|k| {
            let x = r[(k, k)];
            if x.norm() > 0.0 {
                x / x.norm()
            } else {
                c(1.0, 0.0)
            }
        })
        .collect();
    q * linalg::diag(&phases)
}

/// `g^dagger g` for Gaussian `g`, rescaled to unit trace per dimension.
pub fn positive_definite(rng: &mut Rng, d: usize) -> CMat {
    let g = gaussian_matrix(rng, d);
    let h = g.adjoint() * g;
    let t = h.trace().re / d as f64;
    linalg::hermitian_part(&(h / c(t, 0.0)))
}

pub fn state(rng: &mut Rng, dims: &[usize]) -> PureState {
    let len: usize = dims.iter().product();
    let amps: Vec<C64> = (0..len).map(|_| gaussian(rng)).collect();
    PureState::new(dims.to_vec(), amps).expect("nonzero with probability one").normalized()
}

/// `exp(U(lo, hi))`.
pub fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Uniform phase `exp(i theta)`.
pub fn phase(rng: &mut Rng) -> C64 {
    C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Nonzero complex number with log-uniform modulus in `[0.5, 2]` and uniform phase.
pub fn nonzero(rng: &mut Rng) -> C64 {
    phase(rng) * log_uniform(rng, 0.5, 2.0)
}
