//! Mixed transfer superoperators `T_ab = Q_a⊗1 + 1⊗Q̄_b + R_a⊗R̄_b`.
//!
//! A right vector `|x⟩` is a D×D matrix on which `A⊗B̄` acts as `A x B†`.
//! A left vector `⟨x|` is paired with right vectors through `⟨x|y⟩ = Tr(x y)`,
//! so `⟨x|(A⊗B̄)` is the matrix `B† x A`.

use super::{check_square, dagger, gemm_acc, trace_prod, ComplexMatrix, C64, ONE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub struct TransferBlock {
    qa: ComplexMatrix,
    ra: ComplexMatrix,
    qb_dag: ComplexMatrix,
    rb_dag: ComplexMatrix,
    d: usize,
}

impl TransferBlock {
    pub fn new(
        qa: &ComplexMatrix,
        ra: &ComplexMatrix,
        qb: &ComplexMatrix,
        rb: &ComplexMatrix,
    ) -> Result<Self> {
        let d = qa.nrows();
        check_square(qa, d, "Q_a")?;
        check_square(ra, d, "R_a")?;
        check_square(qb, d, "Q_b")?;
        check_square(rb, d, "R_b")?;
        Ok(Self {
            qa: qa.clone(),
            ra: ra.clone(),
            qb_dag: dagger(qb),
            rb_dag: dagger(rb),
            d,
        })
    }

    /// `T_aa` of a single state.
    pub fn diagonal(q: &ComplexMatrix, r: &ComplexMatrix) -> Result<Self> {
        Self::new(q, r, q, r)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn qa(&self) -> &ComplexMatrix {
        &self.qa
    }

    pub fn ra(&self) -> &ComplexMatrix {
        &self.ra
    }

    pub fn qb_dag(&self) -> &ComplexMatrix {
        &self.qb_dag
    }

    pub fn rb_dag(&self) -> &ComplexMatrix {
        &self.rb_dag
    }

    /// `Q_a x + x Q_b† + R_a x R_b†`
    pub fn apply_right(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.qa.dot(x);
        gemm_acc(ONE, x, &self.qb_dag, &mut out);
        let rx = self.ra.dot(x);
        gemm_acc(ONE, &rx, &self.rb_dag, &mut out);
        out
    }

    /// `x Q_a + Q_b† x + R_b† x R_a`
    pub fn apply_left(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = x.dot(&self.qa);
        gemm_acc(ONE, &self.qb_dag, x, &mut out);
        let xr = x.dot(&self.ra);
        gemm_acc(ONE, &self.rb_dag, &xr, &mut out);
        out
    }

    pub fn apply(&self, x: &ComplexMatrix, side: Side) -> ComplexMatrix {
        match side {
            Side::Left => self.apply_left(x),
            Side::Right => self.apply_right(x),
        }
    }
}

/// Action of the transfer block on a D×D matrix, Θ(D³).
pub fn transfer_apply(block: &TransferBlock, x: &ComplexMatrix, side: Side) -> Result<ComplexMatrix> {
    check_square(x, block.dim(), "x")?;
    Ok(block.apply(x, side))
}

/// Rank-one spectral projector `P = 1 − |r⟩⟨l|` built from a pair of fixed points.
#[derive(Clone, Debug)]
pub struct Deflation {
    pub l: ComplexMatrix,
    pub r: ComplexMatrix,
}

impl Deflation {
    /// Rescales `r` so that `Tr(l r) = 1`.
    pub fn new(l: ComplexMatrix, r: ComplexMatrix) -> Result<Self> {
        if l.dim() != r.dim() {
            return Err(Error::DimensionMismatch("deflation pair".into()));
        }
        let t = trace_prod(&l, &r);
        if t.norm() < 1e-300 {
            return Err(Error::InvalidParameter("Tr(l r) = 0 in deflation pair".into()));
        }
        let r = r.mapv(|z| z / t);
        Ok(Self { l, r })
    }

    /// `x − Tr(l x) r`
    pub fn project_right(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let c = trace_prod(&self.l, x);
        let mut out = x.clone();
        super::axpy(-c, &self.r, &mut out);
        out
    }

    /// `x − Tr(x r) l`
    pub fn project_left(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let c = trace_prod(x, &self.r);
        let mut out = x.clone();
        super::axpy(-c, &self.l, &mut out);
        out
    }

    pub fn project(&self, x: &ComplexMatrix, side: Side) -> ComplexMatrix {
        match side {
            Side::Left => self.project_left(x),
            Side::Right => self.project_right(x),
        }
    }

    /// Component of `x` along the zero mode: `Tr(l x)` (right) or `Tr(x r)` (left).
    pub fn weight(&self, x: &ComplexMatrix, side: Side) -> C64 {
        match side {
            Side::Left => trace_prod(x, &self.r),
            Side::Right => trace_prod(&self.l, x),
        }
    }
}
