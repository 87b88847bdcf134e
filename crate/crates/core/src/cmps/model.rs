use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// `H = ∫ dψ†dψ − μ ψ†ψ + c ψ†ψ†ψψ + u ψ†ψ† + ū ψψ`; `u = 0` is Lieb-Liniger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c: f64,
    pub mu: f64,
    #[serde(default)]
    pub u: C64,
}

impl ModelParams {
    pub fn lieb_liniger(c: f64, mu: f64) -> Self {
        Self { c, mu, u: C64::new(0.0, 0.0) }
    }

    pub fn pairing(c: f64, mu: f64, u: C64) -> Self {
        Self { c, mu, u }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive and finite, got {}", self.c)));
        }
        if !self.mu.is_finite() || !self.u.re.is_finite() || !self.u.im.is_finite() {
            return Err(Error::InvalidParameter("mu and u must be finite".into()));
        }
        Ok(())
    }

    pub fn has_pairing(&self) -> bool {
        self.u.norm() > 0.0
    }

    /// Local terms with their coefficients; pairing terms only when `u ≠ 0`.
    pub fn terms(&self) -> Vec<LocalTerm> {
        let mut t = vec![
            LocalTerm { kind: TermKind::Kinetic, coeff: C64::new(1.0, 0.0) },
            LocalTerm { kind: TermKind::Density, coeff: C64::new(-self.mu, 0.0) },
            LocalTerm { kind: TermKind::Interaction, coeff: C64::new(self.c, 0.0) },
        ];
        if self.has_pairing() {
            t.push(LocalTerm { kind: TermKind::PairCreate, coeff: self.u });
            t.push(LocalTerm { kind: TermKind::PairAnnihilate, coeff: self.u.conj() });
        }
        t
    }
}

/// A local operator `B̄ ⊗ A` sandwiched as `Tr(l A r B†)`: `A` acts on the ket,
/// `B` on the bra.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermKind {
    /// `dψ†dψ`: A = B = [Q, R]
    Kinetic,
    /// `ψ†ψ`: A = B = R
    Density,
    /// `ψ†ψ†ψψ`: A = B = R²
    Interaction,
    /// `ψ†ψ†`: A = 1, B = R²
    PairCreate,
    /// `ψψ`: A = R², B = 1
    PairAnnihilate,
}

impl TermKind {
    pub fn name(self) -> &'static str {
        match self {
            TermKind::Kinetic => "kinetic",
            TermKind::Density => "density",
            TermKind::Interaction => "interaction",
            TermKind::PairCreate => "pair creation",
            TermKind::PairAnnihilate => "pair annihilation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTerm {
    pub kind: TermKind,
    pub coeff: C64,
}
