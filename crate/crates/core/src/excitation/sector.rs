use serde::{Deserialize, Serialize};

use crate::cmps::CmpsState;
use crate::error::{Error, Result};
use crate::linalg::dense::{dense_operator, eigenvalues_general};
use crate::linalg::eigs::arnoldi_ritz_values;
use crate::linalg::krylov::{KrylovOptions, ShiftedSolver};
use crate::linalg::transfer::{Side, TransferBlock};
use crate::linalg::{random_matrix, ComplexMatrix, C64, ONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorMode {
    Trivial,
    Topological,
}

/// Left state, right state and momentum of an excitation. Left of the insertion the
/// state is `(Q₁, R₁)`, right of it `(Q₂, R₂)`.
#[derive(Clone, Debug)]
pub struct ExcitationSector {
    left: CmpsState,
    right: CmpsState,
    mode: SectorMode,
    theta: f64,
    p: f64,
    /// `−max Re λ(T₁₂)`, infinite for the trivial sector
    gap: f64,
}

impl ExcitationSector {
    pub fn trivial(state: &CmpsState, p: f64) -> Self {
        Self {
            left: state.clone(),
            right: state.clone(),
            mode: SectorMode::Trivial,
            theta: 0.0,
            p,
            gap: f64::INFINITY,
        }
    }

    /// Right state `(Q, e^{iθ}R)`; fails unless the mixed transfer matrix is gapped.
    pub fn topological(state: &CmpsState, theta: f64, p: f64) -> Result<Self> {
        let wrapped = theta.rem_euclid(std::f64::consts::TAU);
        if wrapped.abs() < 1e-12 || (wrapped - std::f64::consts::TAU).abs() < 1e-12 {
            return Err(Error::SectorInvariant("topological sector needs θ ≠ 0".into()));
        }
        let right = state.rotate_phase(theta);
        let block = TransferBlock::new(state.q(), state.r(), right.q(), right.r())?;
        let gap = mixed_gap(&block)?;
        let scale = 1.0 + crate::linalg::norm(state.q());
        if !(gap > 1e-8 * scale) {
            return Err(Error::SectorInvariant(format!(
                "mixed transfer matrix is not gapped (leading real part {:.3e})",
                -gap
            )));
        }
        Ok(Self {
            left: state.clone(),
            right,
            mode: SectorMode::Topological,
            theta,
            p,
            gap,
        })
    }

    /// Same states at another momentum.
    pub fn with_momentum(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    pub fn left(&self) -> &CmpsState {
        &self.left
    }

    pub fn right(&self) -> &CmpsState {
        &self.right
    }

    pub fn mode(&self) -> SectorMode {
        self.mode
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.left.dim()
    }

    /// Spectral gap of `T₁₂` (infinite in the trivial sector, where it is deflated).
    pub fn mixed_gap(&self) -> f64 {
        self.gap
    }

    pub fn is_trivial(&self) -> bool {
        self.mode == SectorMode::Trivial
    }
}

/// `−max Re λ` over the spectrum of a transfer block: dense for small D, otherwise
/// Ritz values of a shift-invert Arnoldi run.
pub fn mixed_gap(block: &TransferBlock) -> Result<f64> {
    let d = block.dim();
    if d <= 8 {
        let t = dense_operator(d, |x| block.apply_right(x));
        let vals = eigenvalues_general(&t);
        return Ok(-vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max));
    }
    let sigma = C64::new(0.05, 0.0);
    let solver = ShiftedSolver::new(block, sigma, Side::Right, None, &KrylovOptions::default())?;
    let op = |x: &ComplexMatrix| solver.solve(x, None);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(23);
    let v0 = random_matrix(d, 1.0, &mut rng);
    let ritz = arnoldi_ritz_values(&op, &v0, 30.min(d * d))?;
    Ok(-ritz
        .iter()
        .filter(|th| th.norm() > 1e-12)
        .map(|th| (sigma - ONE / th).re)
        .fold(f64::NEG_INFINITY, f64::max))
}
