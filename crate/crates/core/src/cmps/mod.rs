//! The cMPS data model in left-canonical gauge (`l = 1`, `η = 0`, `Tr r = 1`).

pub mod io;
pub mod model;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use model::{LocalTerm, ModelParams, TermKind};

use crate::error::{Error, Result};
use crate::linalg::dense::{dense_operator, eigenvalues_general};
use crate::linalg::eigs::arnoldi_ritz_values;
use crate::linalg::fixed_point::leading_fixed_points;
use crate::linalg::krylov::{KrylovOptions, ShiftedSolver};
use crate::linalg::transfer::{Deflation, Side, TransferBlock};
use crate::linalg::{
    commutator, dagger, eye, hermitian_part, herm_eig, herm_sqrt, norm, random_hermitian, random_matrix, trace,
    trace_prod, ComplexMatrix, C64, I, ONE, ZERO,
};

/// Tolerance on `‖Q + Q† + R†R‖` for a state to count as left-canonical.
pub const CANONICAL_TOL: f64 = 1e-10;
const FIXED_POINT_TOL: f64 = 1e-11;
const MAX_GAUGE_COND: f64 = 1e13;
const DENSE_SPECTRUM_MAX_D: usize = 8;

#[derive(Clone, Debug)]
pub struct CmpsState {
    q: ComplexMatrix,
    r: ComplexMatrix,
    /// right fixed point; the left one is the identity
    rho: ComplexMatrix,
}

impl CmpsState {
    /// Builds the state from a left-canonical pair and solves for the right fixed point.
    /// `guess` warm-starts the solve.
    pub fn from_canonical(q: ComplexMatrix, r: ComplexMatrix, guess: Option<&ComplexMatrix>) -> Result<Self> {
        let d = q.nrows();
        crate::linalg::check_square(&q, d, "Q")?;
        crate::linalg::check_square(&r, d, "R")?;
        let defect = canonical_defect(&q, &r);
        if defect > CANONICAL_TOL * (1.0 + norm(&q)) {
            return Err(Error::InvalidParameter(format!(
                "(Q, R) is not left-canonical: ‖Q + Q† + R†R‖ = {defect:.3e}"
            )));
        }
        let rho = right_fixed_point(&q, &r, guess)?;
        Ok(Self { q, r, rho })
    }

    /// `Q = −iK − R†R/2` with `K` hermitian; left-canonical by construction.
    pub fn from_kr(k: &ComplexMatrix, r: ComplexMatrix, guess: Option<&ComplexMatrix>) -> Result<Self> {
        let q = q_from_kr(k, &r);
        Self::from_canonical(q, r, guess)
    }

    /// Random left-canonical state with density near `rho_target`.
    pub fn random<G: Rng + ?Sized>(d: usize, rho_target: f64, rng: &mut G) -> Result<Self> {
        let r = random_matrix(d, rho_target.max(1e-6).sqrt(), rng);
        let k = random_hermitian(d, 1.0, rng);
        Self::from_kr(&k, r, None)
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &ComplexMatrix {
        &self.q
    }

    pub fn r(&self) -> &ComplexMatrix {
        &self.r
    }

    /// Left fixed point (identity in this gauge).
    pub fn l_fp(&self) -> ComplexMatrix {
        eye(self.dim())
    }

    /// Right fixed point, hermitian with unit trace.
    pub fn r_fp(&self) -> &ComplexMatrix {
        &self.rho
    }

    /// The hermitian `K` with `Q = −iK − R†R/2`.
    pub fn k(&self) -> ComplexMatrix {
        let half = dagger(&self.r).dot(&self.r).mapv(|z| z * 0.5);
        hermitian_part(&(&self.q + &half).mapv(|z| z * I))
    }

    pub fn transfer(&self) -> TransferBlock {
        TransferBlock::diagonal(&self.q, &self.r).expect("square matrices")
    }

    pub fn deflation(&self) -> Deflation {
        Deflation::new(self.l_fp(), self.rho.clone()).expect("Tr r = 1")
    }

    pub fn canonical_defect(&self) -> f64 {
        canonical_defect(&self.q, &self.r)
    }

    /// `(Q, e^{iθ}R)`; the transfer matrix and fixed points are unchanged.
    pub fn rotate_phase(&self, theta: f64) -> Self {
        let ph = C64::from_polar(1.0, theta);
        Self {
            q: self.q.clone(),
            r: self.r.mapv(|z| z * ph),
            rho: self.rho.clone(),
        }
    }

    /// Embeds into bond dimension `d_new ≥ D`. The old block is kept exactly; the new block
    /// is entered from it with amplitude `noise` and leaks back at an O(1) rate through `R`,
    /// with `K` chosen so that `Q` has no O(1) old → new element. The state then moves at
    /// order `noise` while the transfer matrix stays gapped.
    pub fn embed<G: Rng + ?Sized>(&self, d_new: usize, noise: f64, rng: &mut G) -> Result<Self> {
        let d = self.dim();
        if d_new < d {
            return Err(Error::InvalidParameter(format!("cannot embed D={d} into D={d_new}")));
        }
        if d_new == d {
            return Ok(self.clone());
        }
        // R entries along directions of tiny r weight can be huge; √ρ is the physical size
        let scale = density(self).sqrt().max(1e-3);
        let k_old = self.k();
        let mut k = random_hermitian(d_new, noise * scale * scale, rng);
        let mut r = random_matrix(d_new, noise * scale, rng);
        let leak = random_matrix(d_new, scale, rng);
        for i in 0..d_new {
            for j in 0..d_new {
                match (i < d, j < d) {
                    (true, true) => {
                        k[(i, j)] = k_old[(i, j)];
                        r[(i, j)] = self.r[(i, j)];
                    }
                    (true, false) => r[(i, j)] += leak[(i, j)],
                    (false, false) => k[(i, j)] += leak[(i, j)] * scale * if i == j { 1.0 } else { 0.0 },
                    (false, true) => {}
                }
            }
        }
        // cancel the coherent old → new coupling −½(R†R)_{new,old} of Q = −iK − ½R†R
        let a = dagger(&r).dot(&r);
        for i in d..d_new {
            for j in 0..d {
                k[(i, j)] += C64::new(0.0, 0.5) * a[(i, j)];
                k[(j, i)] = k[(i, j)].conj();
            }
        }
        let k = hermitian_part(&k);
        Self::from_kr(&k, r, None)
    }
}

pub fn q_from_kr(k: &ComplexMatrix, r: &ComplexMatrix) -> ComplexMatrix {
    k.mapv(|z| -I * z) - dagger(r).dot(r).mapv(|z| z * 0.5)
}

pub fn canonical_defect(q: &ComplexMatrix, r: &ComplexMatrix) -> f64 {
    norm(&(q + &dagger(q) + dagger(r).dot(r)))
}

/// Solves `T r = 0`, `Tr r = 1` for a left-canonical pair through the bordered system
/// `−T(r) + Tr(r)·1/D = 1/D`.
fn right_fixed_point(q: &ComplexMatrix, r: &ComplexMatrix, guess: Option<&ComplexMatrix>) -> Result<ComplexMatrix> {
    let d = q.nrows();
    let block = TransferBlock::diagonal(q, r)?;
    let w = eye(d).mapv(|z| z / d as f64);
    let defl = Deflation::new(eye(d), w.clone())?;
    let opts = KrylovOptions {
        tol: 1e-13,
        max_iter: 4000,
        ..Default::default()
    };
    let solver = ShiftedSolver::new(&block, ZERO, Side::Right, Some(&defl), &opts)?;
    let (x, _) = solver.solve_bordered(&w, guess).map_err(|e| match e {
        Error::NotConverged { residual, .. } => Error::DegenerateFixedPoint(format!(
            "bordered right fixed-point solve stalled at residual {residual:.3e}"
        )),
        e => e,
    })?;
    let rho = hermitian_part(&x);
    let tr = trace(&rho).re;
    let rho = rho.mapv(|z| z / tr);
    let (vals, _) = herm_eig(&rho);
    if !(vals[0] > 0.0) {
        return Err(Error::RankDeficient {
            min_eig: vals[0],
            cond: f64::INFINITY,
        });
    }
    Ok(rho)
}

/// Gauge-transforms a generic `(Q, R)` to left-canonical form: `Q ← Q − η/2`, then
/// conjugation by `l^{1/2}`.
pub fn canonicalize(q: &ComplexMatrix, r: &ComplexMatrix) -> Result<CmpsState> {
    let d = q.nrows();
    crate::linalg::check_square(q, d, "Q")?;
    crate::linalg::check_square(r, d, "R")?;
    let fp = leading_fixed_points(q, r, FIXED_POINT_TOL)?;
    let q = q - &eye(d).mapv(|z| z * (fp.eta / 2.0));
    let g = herm_sqrt(&fp.l, MAX_GAUGE_COND)?;
    let q2 = g.sqrt.dot(&q).dot(&g.inv_sqrt);
    let r2 = g.sqrt.dot(r).dot(&g.inv_sqrt);
    // project away the remaining canonical defect, a rounding-level antihermitian tweak
    let k = hermitian_part(&(&q2 + &dagger(&r2).dot(&r2).mapv(|z| z * 0.5)).mapv(|z| z * I));
    let q3 = q_from_kr(&k, &r2);
    let rho_guess = g.sqrt.dot(&fp.r).dot(&g.sqrt);
    CmpsState::from_canonical(q3, r2, Some(&rho_guess))
}

/// `Tr(l R r R†)`
pub fn density(state: &CmpsState) -> f64 {
    trace_prod(&state.r.dot(state.r_fp()), &dagger(&state.r)).re.max(0.0)
}

/// `Tr(l R r)`
pub fn order_parameter(state: &CmpsState) -> C64 {
    trace_prod(&state.r, state.r_fp())
}

/// Ket and bra operators of a local term.
pub fn term_operators(state: &CmpsState, kind: TermKind) -> (ComplexMatrix, ComplexMatrix) {
    let d = state.dim();
    let r2 = state.r.dot(&state.r);
    match kind {
        TermKind::Kinetic => {
            let c = commutator(&state.q, &state.r);
            (c.clone(), c)
        }
        TermKind::Density => (state.r.clone(), state.r.clone()),
        TermKind::Interaction => (r2.clone(), r2),
        TermKind::PairCreate => (eye(d), r2),
        TermKind::PairAnnihilate => (r2, eye(d)),
    }
}

/// Complex contribution `coeff·Tr(l A r B†)` of one local term.
pub fn term_expectation(state: &CmpsState, term: &LocalTerm) -> C64 {
    let (a, b) = term_operators(state, term.kind);
    term.coeff * trace_prod(&a.dot(state.r_fp()), &dagger(&b))
}

pub fn energy_density(state: &CmpsState, params: &ModelParams) -> f64 {
    let terms: Vec<C64> = params.terms().iter().map(|t| term_expectation(state, t)).collect();
    let e: C64 = terms.iter().sum();
    // the pair terms cancel in the imaginary part only up to rounding of their own size
    let scale: f64 = terms.iter().map(|t| t.norm()).sum();
    debug_assert!(e.im.abs() < 1e-8 * (1.0 + scale), "imaginary energy {e}");
    e.re
}

/// `−1/Re λ₂` for the subleading transfer eigenvalue; `+∞` at D = 1.
pub fn correlation_length(state: &CmpsState) -> Result<f64> {
    let d = state.dim();
    if d == 1 {
        return Ok(f64::INFINITY);
    }
    let block = state.transfer();
    let lambda2 = if d <= DENSE_SPECTRUM_MAX_D {
        let t = dense_operator(d, |x| block.apply_right(x));
        let mut vals = eigenvalues_general(&t);
        vals.sort_by(|a, b| b.re.total_cmp(&a.re));
        let scale = 1.0 + vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if vals[1].re > -1e-9 * scale {
            return Err(Error::DegenerateFixedPoint(format!(
                "subleading eigenvalue {} touches zero",
                vals[1]
            )));
        }
        vals[1].re
    } else {
        // shift-invert Arnoldi on the deflated transfer matrix
        let sigma = C64::new(0.05, 0.0);
        let solver = ShiftedSolver::new(&block, sigma, Side::Right, Some(&state.deflation()), &KrylovOptions::default())?;
        let op = |x: &ComplexMatrix| solver.solve(x, None);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(17);
        let v0 = random_matrix(d, 1.0, &mut rng);
        let ritz = arnoldi_ritz_values(&op, &v0, 40.min(d * d - 1))?;
        ritz.iter()
            .filter(|th| th.norm() > 1e-12)
            .map(|th| (sigma - ONE / th).re)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(-1.0 / lambda2)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Observables {
    pub rho: f64,
    pub e: f64,
    pub order_param: C64,
    pub corr_length: Option<f64>,
    pub gamma: f64,
}

pub fn observables(state: &CmpsState, params: &ModelParams) -> Observables {
    let rho = density(state);
    let xi = correlation_length(state).ok();
    Observables {
        rho,
        e: energy_density(state, params),
        order_param: order_parameter(state),
        // JSON cannot carry infinities
        corr_length: xi.filter(|x| x.is_finite()),
        gamma: params.c / rho,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inverse, max_abs_diff, scalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_canonicalization() {
        let s = canonicalize(&scalar(C64::new(-0.3, 0.0)), &scalar(ONE)).unwrap();
        assert!((s.q()[(0, 0)] - C64::new(-0.5, 0.0)).norm() < 1e-12);
        assert!((s.r()[(0, 0)] - ONE).norm() < 1e-12);
        assert!((s.r_fp()[(0, 0)] - ONE).norm() < 1e-12);
    }

    #[test]
    fn canonicalization_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let s = CmpsState::random(4, 1.0, &mut rng).unwrap();
        let t = canonicalize(s.q(), s.r()).unwrap();
        assert!(max_abs_diff(s.q(), t.q()) < 1e-12);
        assert!(max_abs_diff(s.r(), t.r()) < 1e-12);
    }

    #[test]
    fn canonical_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let q = random_matrix(4, 1.0, &mut rng);
        let r = random_matrix(4, 1.0, &mut rng);
        let s = canonicalize(&q, &r).unwrap();
        assert!(s.canonical_defect() < 1e-10);
        assert!((trace(s.r_fp()) - ONE).norm() < 1e-12);
        assert!(norm(&s.transfer().apply_right(s.r_fp())) < 1e-10);
    }

    #[test]
    fn density_matches_kronecker_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let s = canonicalize(&random_matrix(4, 1.0, &mut rng), &random_matrix(4, 1.0, &mut rng)).unwrap();
        let conj = |m: &ComplexMatrix| m.mapv(|z| z.conj());
        let op = crate::linalg::dense::kron(s.r(), &conj(s.r()));
        let rv = crate::linalg::dense::vectorize(s.r_fp());
        let lv = crate::linalg::dense::vectorize(&s.l_fp().t().to_owned());
        let brute: C64 = lv.iter().zip(op.dot(&rv).iter()).map(|(a, b)| a * b).sum();
        assert!((brute.re - density(&s)).abs() < 1e-12 && brute.im.abs() < 1e-12);
    }

    #[test]
    fn gauge_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let q = random_matrix(3, 1.0, &mut rng);
        let r = random_matrix(3, 1.0, &mut rng);
        let g = random_matrix(3, 1.0, &mut rng) + eye(3);
        let gi = inverse(&g).unwrap();
        let p = ModelParams::pairing(1.3, 0.7, C64::new(0.4, 0.2));
        let a = canonicalize(&q, &r).unwrap();
        let b = canonicalize(&gi.dot(&q).dot(&g), &gi.dot(&r).dot(&g)).unwrap();
        assert!((density(&a) - density(&b)).abs() < 1e-10);
        assert!((energy_density(&a, &p) - energy_density(&b, &p)).abs() < 1e-10);
        assert!((order_parameter(&a).norm() - order_parameter(&b).norm()).abs() < 1e-10);
    }

    #[test]
    fn scalar_energies() {
        let r0 = C64::new(0.5f64.sqrt(), 0.0);
        let s = CmpsState::from_kr(&scalar(ZERO), scalar(r0), None).unwrap();
        let p = ModelParams::lieb_liniger(1.0, 1.0);
        assert!((energy_density(&s, &p) + 0.25).abs() < 1e-14);
        assert!((density(&s) - 0.5).abs() < 1e-14);
        assert!((order_parameter(&s) - r0).norm() < 1e-14);
    }

    #[test]
    fn correlation_length_from_dense_spectrum() {
        let s = CmpsState::from_kr(&scalar(ZERO), scalar(ONE), None).unwrap();
        assert!(correlation_length(&s).unwrap().is_infinite());
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let s = CmpsState::random(2, 1.0, &mut rng).unwrap();
        let t = dense_operator(2, |x| s.transfer().apply_right(x));
        let mut vals = eigenvalues_general(&t);
        vals.sort_by(|a, b| b.re.total_cmp(&a.re));
        assert!((correlation_length(&s).unwrap() + 1.0 / vals[1].re).abs() < 1e-10);
    }

    #[test]
    fn iterative_correlation_length_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let s = CmpsState::random(10, 1.0, &mut rng).unwrap();
        let t = dense_operator(10, |x| s.transfer().apply_right(x));
        let mut vals = eigenvalues_general(&t);
        vals.sort_by(|a, b| b.re.total_cmp(&a.re));
        let xi = correlation_length(&s).unwrap();
        assert!((xi + 1.0 / vals[1].re).abs() < 1e-6 * xi, "{xi} vs {}", -1.0 / vals[1].re);
    }

    #[test]
    fn rotate_phase_preserves_energies() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let s = CmpsState::random(3, 1.0, &mut rng).unwrap();
        let ll = ModelParams::lieb_liniger(2.0, 1.0);
        let pr = ModelParams::pairing(2.0, 1.0, ONE);
        let t = s.rotate_phase(std::f64::consts::PI);
        assert!((energy_density(&s, &ll) - energy_density(&t, &ll)).abs() < 1e-12);
        assert!((energy_density(&s, &pr) - energy_density(&t, &pr)).abs() < 1e-12);
        let z = s.rotate_phase(0.0);
        assert_eq!(z.r(), s.r());
        let th = 0.9;
        let rot = s.rotate_phase(th);
        assert!((order_parameter(&rot) - order_parameter(&s) * C64::from_polar(1.0, th)).norm() < 1e-12);
    }
}
