//! Weak isolation and finite-round reachability.
//!
//! A class state is the list `G_i = g_i^dagger g_i` attached to a seed state with a
//! known stabilizer family. A state is reachable by finite-round LOCC iff some
//! stabilizer element quasi-commutes with `G_i` on all sites but one and fails on
//! the remaining site. It is weakly isolated iff no nontrivial element
//! quasi-commutes on any `n - 1` sites.

use serde::{Deserialize, Serialize};

use crate::qtensor::linalg::{self, cr, dagger, diag_real, eye, fourier, fro, herm_eig, CMat, C64};
use crate::qtensor::{json, random, LocalOperator};
use crate::states::DiagonalFamilyParams;
use crate::symmetry::{
    quasi_commute_residual, solve_quasi_commuting, tensor_power_commutant, FourQubitCase, QcSolution,
    SymmetryFamily, PD_TOL,
};
use crate::{rng_from_seed, Error, Result, Rng};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassState {
    pub family: SymmetryFamily,
    pub seed_label: String,
    #[serde(rename = "G", with = "json::matrix_list")]
    pub g: Vec<CMat>,
}

impl ClassState {
    pub fn new(family: SymmetryFamily, seed_label: impl Into<String>, g: Vec<CMat>) -> Result<Self> {
        let cs = Self { family, seed_label: seed_label.into(), g };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        let dims = self.family.dims();
        if dims.len() != self.g.len() {
            return Err(Error::Dimension(format!("{} matrices for {} sites", self.g.len(), dims.len())));
        }
        for (i, (g, d)) in self.g.iter().zip(dims).enumerate() {
            if g.nrows() != d || g.ncols() != d {
                return Err(Error::Dimension(format!("G_{i} must be {d}x{d}")));
            }
            linalg::require_pd(g, PD_TOL, &format!("G_{i}"))?;
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.g.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachWitness {
    pub symmetry: LocalOperator,
    pub violating_site: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReachVerdict {
    pub reachable: bool,
    pub witness: Option<ReachWitness>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsolationVerdict {
    pub weakly_isolated: bool,
    pub witness: Option<QcSolution>,
    pub reachable: bool,
    pub reach_witness: Option<ReachWitness>,
}

/// Independent draws per distinguished site when the family has free parameters.
pub const SEARCH_ATTEMPTS: u64 = 4;

fn others(n: usize, skip: usize) -> Vec<usize> {
    (0..n).filter(|&i| i != skip).collect()
}

pub fn loccn_reachable(cs: &ClassState, tol: f64) -> Result<ReachVerdict> {
    loccn_reachable_seeded(cs, tol, 0)
}

/// Tries every site as the distinguished one.
pub fn loccn_reachable_seeded(cs: &ClassState, tol: f64, seed: u64) -> Result<ReachVerdict> {
    cs.validate()?;
    let n = cs.n_sites();
    for j in 0..n {
        let required = others(n, j);
        for attempt in 0..SEARCH_ATTEMPTS {
            let s = seed.wrapping_mul(7919).wrapping_add(attempt * 131 + j as u64);
            for sol in solve_quasi_commuting(&cs.family, &cs.g, &required, tol, s)? {
                if sol.factors[j].is_none() {
                    return Ok(ReachVerdict {
                        reachable: true,
                        witness: Some(ReachWitness { symmetry: sol.symmetry, violating_site: j }),
                    });
                }
            }
        }
    }
    Ok(ReachVerdict { reachable: false, witness: None })
}

pub fn weakly_isolated(cs: &ClassState, tol: f64) -> Result<IsolationVerdict> {
    weakly_isolated_seeded(cs, tol, 0)
}

pub fn weakly_isolated_seeded(cs: &ClassState, tol: f64, seed: u64) -> Result<IsolationVerdict> {
    cs.validate()?;
    let n = cs.n_sites();
    let mut witness = None;
    for j in 0..n {
        let sols = solve_quasi_commuting(&cs.family, &cs.g, &others(n, j), tol, seed.wrapping_add(j as u64))?;
        if let Some(s) = sols.into_iter().next() {
            witness = Some(s);
            break;
        }
    }
    let reach = loccn_reachable_seeded(cs, tol, seed)?;
    Ok(IsolationVerdict {
        weakly_isolated: witness.is_none(),
        witness,
        reachable: reach.reachable,
        reach_witness: reach.witness,
    })
}

fn unit_scaled(s: &CMat) -> Option<CMat> {
    let d = linalg::det(s).norm();
    (d > 0.0).then(|| s / cr(d.powf(1.0 / s.nrows() as f64)))
}

/// `S ~ e^{i theta} (+) U_2` with `U_2` a 2x2 unitary.
pub fn is_phase_plus_unitary_block(s: &CMat, tol: f64) -> bool {
    let Some(u) = unit_scaled(s) else { return false };
    let off = (1..u.nrows()).map(|k| u[(0, k)].norm() + u[(k, 0)].norm()).sum::<f64>();
    off <= tol && linalg::unitarity_residual(&u) <= tol
}

/// `S` proportional to a diagonal unitary.
pub fn is_unitary_diagonal(s: &CMat, tol: f64) -> bool {
    let Some(u) = unit_scaled(s) else { return false };
    let off: f64 = (0..u.nrows())
        .flat_map(|i| (0..u.ncols()).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| u[(i, j)].norm())
        .sum();
    off <= tol && linalg::unitarity_residual(&u) <= tol
}

/// `G = (diag(a1,b1,1), diag(a2,b2,1), 1)` over the `S^{(x)3}` stabilizer.
pub fn diagonal_class_state(p: &DiagonalFamilyParams) -> Result<ClassState> {
    p.validate()?;
    let [d1, d2, d3] = p.diagonals();
    ClassState::new(
        SymmetryFamily::TensorPower { n: 3, d: 3 },
        format!("MA3({},{},{},{})", p.alpha1, p.beta1, p.alpha2, p.beta2),
        vec![diag_real(&d1), diag_real(&d2), diag_real(&d3)],
    )
}

/// `diag(1, sqrt(w), .., sqrt(w))` with `w = e^{2 pi i / d}`.
pub fn u_tilde(d: usize) -> CMat {
    let sw = C64::from_polar(1.0, std::f64::consts::PI / d as f64);
    linalg::diag(&(0..d).map(|k| if k == 0 { cr(1.0) } else { sw }).collect::<Vec<_>>())
}

/// `G_1 = diag(r^j)`, `G_2`, `G_3` with eigenvalues `(1 - eps)^j` in the Fourier
/// and shifted Fourier bases, identity elsewhere.
pub fn theorem5_witness(n: usize, d: usize, r: f64, epsilon: f64) -> Result<ClassState> {
    if n < 4 || d < 2 || !(0.0 < r && r < 1.0) || !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need n >= 4, d >= 2, 0 < r < 1, 0 < eps < 1; got n={n}, d={d}, r={r}, eps={epsilon}"
        )));
    }
    let g1 = diag_real(&(0..d).map(|j| r.powi(j as i32)).collect::<Vec<_>>());
    let decay = diag_real(&(0..d).map(|j| (1.0 - epsilon).powi(j as i32)).collect::<Vec<_>>());
    let v2 = fourier(d);
    let v3 = u_tilde(d) * &v2;
    let g2 = linalg::hermitian_part(&(&v2 * &decay * dagger(&v2)));
    let g3 = linalg::hermitian_part(&(&v3 * &decay * dagger(&v3)));
    let mut g = vec![g1, g2, g3];
    g.resize(n, eye(d));
    ClassState::new(
        SymmetryFamily::TensorPower { n, d },
        format!("theorem5(n={n},d={d},r={r},eps={epsilon})"),
        g,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripleCheck {
    pub sites: Vec<usize>,
    pub commutant_dimension: usize,
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub probes: usize,
    pub seed: u64,
    /// Smallest quasi-commutation residual among probes that stay away from the identity.
    pub best_nontrivial_residual: f64,
    pub found: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Theorem5Report {
    pub r: f64,
    pub epsilon: f64,
    pub y_eigenvalues: Vec<f64>,
    pub y_min_gap: f64,
    pub z_min_gap: f64,
    pub condition1: bool,
    /// `|<e_p| U~ |e_q>|`, rows `p`, columns `q`.
    pub overlap: Vec<Vec<f64>>,
    pub designated_column: Option<usize>,
    pub designated_min_overlap: f64,
    pub condition2: bool,
    /// Eigenvalues of `H_0 + eps V`, recovered from `Y`.
    pub scaled_eigenvalues: Vec<f64>,
    pub eigenvalue_deviation: f64,
    pub eigenvalue_bound: f64,
    pub eigenvalues_ok: bool,
    pub triples: Vec<TripleCheck>,
    pub certified: bool,
    pub probe: Option<ProbeSummary>,
    pub degenerate: bool,
    pub pass: bool,
}

fn min_gap(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Checks both conditions on `Y = G_1^{-1/2} G_2 G_1^{-1/2}` and `Z = U~ Y U~^dagger`,
/// certifies every 3-site subset through its commutant and, when `probes > 0`,
/// runs a seeded search for nontrivial quasi-commuting `S`.
pub fn verify_theorem5_conditions(cs: &ClassState, tol: f64, probes: usize, seed: u64) -> Result<Theorem5Report> {
    cs.validate()?;
    if cs.n_sites() < 4 {
        return Err(Error::InvalidParameter("need at least 4 sites".into()));
    }
    let d = cs.g[0].nrows();
    let g1 = &cs.g[0];
    let r = if d > 1 { g1[(1, 1)].re / g1[(0, 0)].re } else { 1.0 };
    let g2_eig = herm_eig(&cs.g[1])?;
    let top = g2_eig.values[d - 1];
    let epsilon = 1.0 - g2_eig.values[d - 2] / top;
    let off_diag: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|ij| g1[ij].norm()).sum();
    if off_diag > 0.0 {
        return Err(Error::InvalidParameter("G_1 must be diagonal".into()));
    }

    let inv_sqrt = linalg::pd_inv_sqrt(g1)?;
    let y = linalg::hermitian_part(&(&inv_sqrt * &cs.g[1] * &inv_sqrt));
    let z = linalg::hermitian_part(&(&inv_sqrt * &cs.g[2] * &inv_sqrt));
    let ye = herm_eig(&y)?;
    let ze = herm_eig(&z)?;
    let scale = ye.values[d - 1].abs().max(f64::MIN_POSITIVE);
    let y_min_gap = min_gap(&ye.values);
    let z_min_gap = min_gap(&ze.values);
    let condition1 = y_min_gap > tol * scale && z_min_gap > tol * scale;

    let ut = u_tilde(d);
    let overlap: Vec<Vec<f64>> = (0..d)
        .map(|p| {
            (0..d)
                .map(|q| (ye.vectors.column(p).adjoint() * &ut * ye.vectors.column(q))[(0, 0)].norm())
                .collect()
        })
        .collect();
    let column_min = |q: usize| (0..d).map(|p| overlap[p][q]).fold(f64::INFINITY, f64::min);
    let designated_column = (0..d).max_by(|&a, &b| column_min(a).total_cmp(&column_min(b)));
    let designated_min_overlap = designated_column.map(column_min).unwrap_or(0.0);
    let condition2 = designated_min_overlap > tol;

    let factor = if epsilon > 0.0 { epsilon * d as f64 / (1.0 - (1.0 - epsilon).powi(d as i32)) } else { 1.0 };
    let scaled_eigenvalues: Vec<f64> = ye.values.iter().map(|v| v * factor).collect();
    let eigenvalue_deviation = scaled_eigenvalues
        .iter()
        .enumerate()
        .map(|(p, e)| (e - r.powi(-(p as i32))).abs())
        .fold(0.0, f64::max);
    let eigenvalue_bound = 10.0 * epsilon * epsilon;
    let eigenvalues_ok = eigenvalue_deviation <= eigenvalue_bound;

    let mut triples = Vec::new();
    for sites in subsets(cs.n_sites(), cs.n_sites() - 1).into_iter().flat_map(|s| subsets(s.len(), 3).into_iter().map(move |t| t.iter().map(|&i| s[i]).collect::<Vec<_>>())) {
        if triples.iter().any(|t: &TripleCheck| t.sites == sites) {
            continue;
        }
        let com = tensor_power_commutant(&cs.g, &sites, tol)?;
        triples.push(TripleCheck { sites, commutant_dimension: com.dimension, margin: com.smallest_nonzero_singular });
    }
    let certified = triples.iter().all(|t| t.commutant_dimension == 1);

    let probe = (probes > 0).then(|| probe_search(cs, &triples, probes, seed)).transpose()?;
    let degenerate = epsilon.is_nan() || epsilon <= 0.0 || !condition1 || !condition2;
    let pass = condition1
        && condition2
        && eigenvalues_ok
        && certified
        && probe.as_ref().is_none_or(|p| !p.found);
    Ok(Theorem5Report {
        r,
        epsilon,
        y_eigenvalues: ye.values,
        y_min_gap,
        z_min_gap,
        condition1,
        overlap,
        designated_column,
        designated_min_overlap,
        condition2,
        scaled_eigenvalues,
        eigenvalue_deviation,
        eigenvalue_bound,
        eigenvalues_ok,
        triples,
        certified,
        probe,
        degenerate,
        pass,
    })
}

/// Residual below which a probe counts as quasi-commuting.
pub const PROBE_HIT: f64 = 1e-8;
/// Distance from the identity below which a probe counts as trivial.
pub const PROBE_TRIVIAL: f64 = 1e-4;

fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => u * vt,
        _ => eye(m.nrows()),
    }
}

fn pinch(v: &CMat, u: &CMat) -> CMat {
    let inner = dagger(v) * u * v;
    let d = linalg::diag(&(0..inner.nrows()).map(|k| inner[(k, k)]).collect::<Vec<_>>());
    v * d * dagger(v)
}

/// Candidates `S = G_a^{-1/2} U G_a^{1/2}` with `U` seeded from eigenbases or Haar
/// samples, refined by alternating pinching and polar projection.
fn probe_search(cs: &ClassState, triples: &[TripleCheck], probes: usize, seed: u64) -> Result<ProbeSummary> {
    let d = cs.g[0].nrows();
    let mut rng: Rng = rng_from_seed(seed);
    struct Prep {
        sites: Vec<usize>,
        inv_sqrt: CMat,
        sqrt: CMat,
        bases: Vec<CMat>,
    }
    let mut preps = Vec::new();
    for t in triples {
        let a = t.sites[0];
        let inv_sqrt = linalg::pd_inv_sqrt(&cs.g[a])?;
        let sqrt = linalg::psd_sqrt(&cs.g[a])?;
        let bases = t.sites[1..]
            .iter()
            .map(|&j| herm_eig(&(&inv_sqrt * &cs.g[j] * &inv_sqrt)).map(|e| e.vectors))
            .collect::<Result<Vec<_>>>()?;
        preps.push(Prep { sites: t.sites.clone(), inv_sqrt, sqrt, bases });
    }
    let mut best = f64::INFINITY;
    let mut found = false;
    for k in 0..probes {
        let p = &preps[k % preps.len()];
        let mut u = match k % 3 {
            0 => {
                let v = &p.bases[(k / 3) % p.bases.len()];
                let phases: Vec<C64> = (0..d).map(|_| random::phase(&mut rng)).collect();
                v * linalg::diag(&phases) * dagger(v)
            }
            _ => random::unitary(&mut rng, d),
        };
        for it in 0..8 {
            u = polar_unitary(&pinch(&p.bases[it % p.bases.len()], &u));
        }
        let tr = linalg::trace(&u) / cr(d as f64);
        let distance = fro(&(&u - eye(d) * tr)) / (d as f64).sqrt();
        if distance < PROBE_TRIVIAL {
            continue;
        }
        let s = &p.inv_sqrt * &u * &p.sqrt;
        let res = p.sites.iter().map(|&j| quasi_commute_residual(&s, &cs.g[j])).fold(0.0, f64::max);
        best = best.min(res);
        found |= res < PROBE_HIT;
    }
    Ok(ProbeSummary { probes, seed, best_nontrivial_residual: best, found })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Theorem5Outcome {
    pub class_state: ClassState,
    pub epsilon: f64,
    pub halvings: usize,
    pub report: Theorem5Report,
}

pub const MAX_HALVINGS: usize = 20;

/// Starts at `eps = 1e-2` and halves until the conditions pass.
pub fn theorem5_auto(n: usize, d: usize, r: f64, tol: f64, probes: usize, seed: u64) -> Result<Theorem5Outcome> {
    let mut eps = 1e-2;
    for halvings in 0..=MAX_HALVINGS {
        let cs = theorem5_witness(n, d, r, eps)?;
        let quick = verify_theorem5_conditions(&cs, tol, 0, seed)?;
        if quick.pass || halvings == MAX_HALVINGS {
            let report = if probes > 0 { verify_theorem5_conditions(&cs, tol, probes, seed)? } else { quick };
            return Ok(Theorem5Outcome { class_state: cs, epsilon: eps, halvings, report });
        }
        eps /= 2.0;
    }
    unreachable!("loop returns at the last halving")
}

fn entries(h: &CMat) -> (f64, C64, f64) {
    (h[(0, 0)].re, h[(0, 1)], h[(1, 1)].re)
}

fn separated(x: f64, y: f64) -> bool {
    (x - y).abs() > 0.05 * x.abs().max(y.abs())
}

/// Non-diagonal `H_i` satisfying the inequalities that rule out the case's solutions.
fn fourqubit_inequalities(case: FourQubitCase, h: &[CMat]) -> bool {
    let e: Vec<(f64, C64, f64)> = h.iter().map(entries).collect();
    let nondiag = e.iter().all(|(a, b, c)| b.norm() > 0.05 * a.max(*c));
    nondiag
        && match case {
            FourQubitCase::GabcdA => true,
            FourQubitCase::GabcdB => [(0, 2), (1, 3)]
                .iter()
                .all(|&(i, j)| separated(e[i].2 / e[i].0, e[j].0 / e[j].2)),
            FourQubitCase::Labc2 => [(0, 2), (1, 3)]
                .iter()
                .all(|&(i, j)| separated((e[i].1 / e[i].0).norm(), (e[j].1 / e[j].0).norm())),
            FourQubitCase::La2b2 => {
                let y0 = e[0].1 / e[0].0;
                let y2 = e[2].1 / e[2].0;
                (y0 + y2).norm() > 0.05 * (y0.norm() + y2.norm()) && separated(e[1].2 / e[1].0, e[3].0 / e[3].2)
            }
        }
}

/// Builds `H_i` for the four-qubit case and checks weak isolation against its stabilizer.
pub fn fourqubit_witness(case: FourQubitCase, seed: u64, tol: f64) -> Result<(ClassState, IsolationVerdict)> {
    let family = SymmetryFamily::FourQubit { case };
    let cs = if case == FourQubitCase::GabcdA {
        let out = theorem5_auto(4, 2, 0.5, tol, 0, seed)?;
        ClassState::new(family, out.class_state.seed_label, out.class_state.g)?
    } else {
        let mut rng = rng_from_seed(seed);
        let mut g = Vec::new();
        for _ in 0..10_000 {
            g = (0..4).map(|_| random::positive_definite(&mut rng, 2)).collect();
            if fourqubit_inequalities(case, &g) {
                break;
            }
        }
        if !fourqubit_inequalities(case, &g) {
            return Err(Error::Numerical("could not sample H_i satisfying the inequalities".into()));
        }
        ClassState::new(family, format!("{case:?}(seed={seed})"), g)?
    };
    let verdict = weakly_isolated_seeded(&cs, tol, seed)?;
    Ok((cs, verdict))
}

/// Four sites whose operators all commute with `sigma_z`-type diagonals.
pub fn diagonal_fourqubit_state(case: FourQubitCase, seed: u64) -> Result<ClassState> {
    let mut rng = rng_from_seed(seed);
    let g = (0..4)
        .map(|_| diag_real(&[random::log_uniform(&mut rng, 0.5, 2.0), random::log_uniform(&mut rng, 0.5, 2.0)]))
        .collect();
    ClassState::new(SymmetryFamily::FourQubit { case }, format!("{case:?}-diagonal(seed={seed})"), g)
}

/// `h_1 = I/2 + sigma_x` on site 1 and identities elsewhere against `{1, sigma_z^{(x)3}}`.
pub fn sigma_z_example() -> Result<ClassState> {
    let sz3 = LocalOperator::tensor_power(&linalg::pauli_z(), 3)?;
    let h1 = linalg::from_rows(2, 2, &[cr(1.25), cr(1.0), cr(1.0), cr(1.25)]);
    ClassState::new(
        SymmetryFamily::FiniteGroup { elements: vec![LocalOperator::identity(&[2, 2, 2]), sz3] },
        "sigma_z example",
        vec![h1, eye(2), eye(2)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtensor::linalg::c;

    #[test]
    fn sigma_z_example_is_reachable_at_site_one() {
        let v = loccn_reachable(&sigma_z_example().unwrap(), 1e-9).unwrap();
        assert!(v.reachable);
        assert_eq!(v.witness.unwrap().violating_site, 0);
    }

    #[test]
    fn identity_metrics_block_reachability() {
        let cs = ClassState::new(SymmetryFamily::TensorPower { n: 3, d: 3 }, "id", vec![eye(3), eye(3), eye(3)]).unwrap();
        let v = weakly_isolated(&cs, 1e-9).unwrap();
        assert!(!v.reachable);
        assert!(!v.weakly_isolated);
    }

    #[test]
    fn trivial_group_is_weakly_isolated() {
        let mut rng = rng_from_seed(2);
        let g = (0..3).map(|_| random::positive_definite(&mut rng, 2)).collect();
        let cs = ClassState::new(
            SymmetryFamily::FiniteGroup { elements: vec![LocalOperator::identity(&[2, 2, 2])] },
            "trivial",
            g,
        )
        .unwrap();
        let v = weakly_isolated(&cs, 1e-9).unwrap();
        assert!(v.weakly_isolated && v.witness.is_none() && !v.reachable);
    }

    #[test]
    fn type_two_and_three_are_unreachable() {
        let two = diagonal_class_state(&DiagonalFamilyParams::type_two(2.0, 3.0).unwrap()).unwrap();
        assert!(!loccn_reachable(&two, 1e-9).unwrap().reachable);
        let three = diagonal_class_state(&DiagonalFamilyParams::new(2.0, 3.0, 5.0, 7.0).unwrap()).unwrap();
        assert!(!loccn_reachable(&three, 1e-9).unwrap().reachable);
    }

    #[test]
    fn structure_predicates() {
        let mut rng = rng_from_seed(4);
        let u2 = random::unitary(&mut rng, 2);
        let mut block = CMat::zeros(3, 3);
        block[(0, 0)] = C64::from_polar(1.0, 0.4);
        block.view_mut((1, 1), (2, 2)).copy_from(&u2);
        assert!(is_phase_plus_unitary_block(&(block.clone() * cr(3.0)), 1e-10));
        assert!(!is_unitary_diagonal(&block, 1e-10));
        assert!(is_unitary_diagonal(&linalg::diag(&[c(0.0, 2.0), cr(2.0), cr(-2.0)]), 1e-10));
        assert!(!is_phase_plus_unitary_block(&random::unitary(&mut rng, 3), 1e-10));
    }

    #[test]
    fn theorem5_small_cases() {
        let cs = theorem5_witness(4, 2, 0.5, 1e-3).unwrap();
        assert!((cs.g[0][(1, 1)].re - 0.5).abs() < 1e-15);
        let rep = verify_theorem5_conditions(&cs, 1e-9, 300, 1).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(theorem5_witness(3, 2, 0.5, 1e-3).is_err());
        let ut = u_tilde(3);
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        assert!((ut[(1, 1)] * ut[(1, 1)] - w).norm() < 1e-14);
    }

    #[test]
    fn theorem5_zero_epsilon_is_degenerate() {
        let mut cs = theorem5_witness(4, 2, 0.5, 1e-3).unwrap();
        cs.g[1] = eye(2);
        cs.g[2] = eye(2);
        let rep = verify_theorem5_conditions(&cs, 1e-9, 0, 0).unwrap();
        assert!(rep.degenerate && !rep.condition2 && !rep.pass);
    }

    #[test]
    fn labc2_diagonal_is_not_isolated() {
        let cs = diagonal_fourqubit_state(FourQubitCase::Labc2, 3).unwrap();
        assert!(!weakly_isolated(&cs, 1e-9).unwrap().weakly_isolated);
    }

    #[test]
    fn fourqubit_witnesses_are_isolated() {
        for case in [FourQubitCase::GabcdA, FourQubitCase::GabcdB, FourQubitCase::Labc2, FourQubitCase::La2b2] {
            for seed in 0..5 {
                let (cs, v) = fourqubit_witness(case, seed, 1e-9).unwrap();
                assert!(v.weakly_isolated, "{case:?} seed {seed}: {:?}", v.witness);
                assert!(!v.reachable);
                assert_eq!(cs.n_sites(), 4);
            }
        }
    }
}
