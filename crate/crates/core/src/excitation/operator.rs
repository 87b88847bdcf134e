//! Matrix-free effective Hamiltonian on the gauge-fixed parameter `Y`.
//!
//! With `l₁ = 1`, `(V, W) = (−R₁† Y r₂^{−1/2}, Y r₂^{−1/2})` satisfies the left gauge
//! condition, so every contraction whose leftmost object is a bare ket or bra insertion
//! vanishes. What survives is: the operator to the left of both insertions (through
//! `L₀`), operator/insertion contact terms, and the coincident ket-bra insertion with the
//! operator on either side. Each application needs one right solve on `T₁₂` and one left
//! solve on `T₂₁`.

use crate::cmps::{term_operators, CmpsState, LocalTerm, ModelParams, TermKind};
use crate::error::{Error, Result};
use crate::linalg::eigs::EigOptions;
use crate::linalg::krylov::{KrylovOptions, ShiftedSolver};
use crate::linalg::transfer::{Side, TransferBlock};
use crate::linalg::{axpy, check_square, dagger, gemm_acc, herm_eig, herm_sqrt, inner, ComplexMatrix, C64, I, ONE, ZERO};

use super::sector::ExcitationSector;

/// The parameter of an excitation in the left gauge; a D×D matrix.
pub type GaugeParam = ComplexMatrix;

#[derive(Clone, Debug)]
pub struct ExcitationOptions {
    pub krylov: KrylovOptions,
    pub eig: EigOptions,
    /// Largest accepted condition number of `r₂` before refusing the gauge map.
    pub max_cond: f64,
    /// Topological sectors require the two ground states to agree in energy density.
    pub energy_match_tol: f64,
    /// Directions `Y` whose columns lie along eigenvectors of `r₂` with eigenvalue below
    /// this fraction of the largest are removed from the variational space (0 keeps all).
    pub min_schmidt_ratio: f64,
    /// Energy given to the removed directions; must lie above the levels of interest.
    pub truncation_shift: f64,
}

impl Default for ExcitationOptions {
    fn default() -> Self {
        Self {
            // apply noise is about tol·‖H‖, and must stay below the eigen residual target
            krylov: KrylovOptions {
                tol: 1e-12,
                ..KrylovOptions::default()
            },
            eig: EigOptions::default(),
            max_cond: 1e13,
            energy_match_tol: 1e-9,
            min_schmidt_ratio: 0.0,
            truncation_shift: 1e4,
        }
    }
}

/// Ket-side contact of a term with the insertion `(V, W)` at the same point.
pub(crate) fn ket_contact(
    kind: TermKind,
    (q1, r1): (&ComplexMatrix, &ComplexMatrix),
    (q2, r2): (&ComplexMatrix, &ComplexMatrix),
    v: &ComplexMatrix,
    w: &ComplexMatrix,
    p: f64,
) -> Option<ComplexMatrix> {
    match kind {
        TermKind::Kinetic => {
            // Q₁W − WQ₂ + VR₂ − R₁V + ipW
            let mut k = q1.dot(w);
            gemm_acc(-ONE, w, q2, &mut k);
            gemm_acc(ONE, v, r2, &mut k);
            gemm_acc(-ONE, r1, v, &mut k);
            axpy(I * p, w, &mut k);
            Some(k)
        }
        TermKind::Density => Some(w.clone()),
        TermKind::Interaction | TermKind::PairAnnihilate => {
            let mut k = r1.dot(w);
            gemm_acc(ONE, w, r2, &mut k);
            Some(k)
        }
        TermKind::PairCreate => None,
    }
}

/// Adds the adjoint of the bra-side contact map `(V', W') ↦ C_B'` applied to `g`:
/// afterwards `⟨C_B', g⟩ = ⟨V', a_v⟩ + ⟨W', a_w⟩` holds for the increments.
pub(crate) fn bra_contact_adjoint(
    kind: TermKind,
    (q1, r1): (&ComplexMatrix, &ComplexMatrix),
    (q2, r2): (&ComplexMatrix, &ComplexMatrix),
    g: &ComplexMatrix,
    p: f64,
    a_v: &mut ComplexMatrix,
    a_w: &mut ComplexMatrix,
) {
    match kind {
        TermKind::Kinetic => {
            gemm_acc(ONE, &dagger(q1), g, a_w);
            gemm_acc(-ONE, g, &dagger(q2), a_w);
            axpy(-I * p, g, a_w);
            gemm_acc(ONE, g, &dagger(r2), a_v);
            gemm_acc(-ONE, &dagger(r1), g, a_v);
        }
        TermKind::Density => axpy(ONE, g, a_w),
        TermKind::Interaction | TermKind::PairCreate => {
            gemm_acc(ONE, &dagger(r1), g, a_w);
            gemm_acc(ONE, g, &dagger(r2), a_w);
        }
        TermKind::PairAnnihilate => {}
    }
}

/// Term operators of one state, with coefficients folded in separately.
#[derive(Clone, Debug)]
struct TermOps {
    kind: TermKind,
    coeff: C64,
    a1: ComplexMatrix,
    b1_dag: ComplexMatrix,
}

#[derive(Clone, Debug)]
pub struct EffectiveOperator {
    sector: ExcitationSector,
    terms: Vec<LocalTerm>,
    ops: Vec<TermOps>,
    q1: ComplexMatrix,
    r1: ComplexMatrix,
    r1_dag: ComplexMatrix,
    q2: ComplexMatrix,
    r2: ComplexMatrix,
    r2_dag: ComplexMatrix,
    rho2: ComplexMatrix,
    rho2_inv_sqrt: ComplexMatrix,
    /// left environment: operator to the left of both insertions, regularized
    l0: ComplexMatrix,
    /// right environment: operator to the right of both insertions, regularized
    rr: ComplexMatrix,
    /// `(−ip − T₁₂)⁻¹` on right vectors
    right12: ShiftedSolver,
    /// `(ip − T₂₁)⁻¹` on left vectors
    left21: ShiftedSolver,
    p: f64,
    /// projector onto the kept columns, when the space is truncated
    keep: Option<ComplexMatrix>,
    shift: f64,
}

impl EffectiveOperator {
    /// `H − E₀` for the model in the given sector.
    pub fn new(sector: &ExcitationSector, params: &ModelParams, opts: &ExcitationOptions) -> Result<Self> {
        params.validate()?;
        if !sector.is_trivial() {
            let e1 = crate::cmps::energy_density(sector.left(), params);
            let e2 = crate::cmps::energy_density(sector.right(), params);
            if (e1 - e2).abs() > opts.energy_match_tol * (1.0 + e1.abs()) {
                return Err(Error::SectorInvariant(format!(
                    "ground states have different energy densities ({e1} vs {e2})"
                )));
            }
        }
        Self::with_terms(sector, &params.terms(), opts)
    }

    /// Effective operator of an arbitrary sum of local terms, regularized by subtracting
    /// the ground-state expectation value of each.
    pub fn with_terms(sector: &ExcitationSector, terms: &[LocalTerm], opts: &ExcitationOptions) -> Result<Self> {
        let s1 = sector.left();
        let s2 = sector.right();
        let d = s1.dim();
        let p = sector.p();
        let rho2 = s2.r_fp().clone();
        let sq = herm_sqrt(&rho2, opts.max_cond)?;
        let t11 = s1.transfer();
        let t22 = s2.transfer();
        let t12 = TransferBlock::new(s1.q(), s1.r(), s2.q(), s2.r())?;
        let t21 = TransferBlock::new(s2.q(), s2.r(), s1.q(), s1.r())?;
        let defl1 = s1.deflation();
        let defl2 = s2.deflation();
        let mixed_defl = sector.is_trivial().then_some(&defl1);
        let right12 = ShiftedSolver::new(&t12, -I * p, Side::Right, mixed_defl, &opts.krylov)?;
        let left21 = ShiftedSolver::new(&t21, I * p, Side::Left, mixed_defl, &opts.krylov)?;
        let left11 = ShiftedSolver::new(&t11, ZERO, Side::Left, Some(&defl1), &opts.krylov)?;
        let right22 = ShiftedSolver::new(&t22, ZERO, Side::Right, Some(&defl2), &opts.krylov)?;

        let mut ops = Vec::with_capacity(terms.len());
        let mut l_rhs = ComplexMatrix::zeros((d, d));
        let mut r_rhs = ComplexMatrix::zeros((d, d));
        for t in terms {
            let (a1, b1) = term_operators(s1, t.kind);
            let (a2, b2) = term_operators(s2, t.kind);
            let b1_dag = dagger(&b1);
            // ⟨l₁|(A⊗B̄) = B†A and (A⊗B̄)|r₂⟩ = A r₂ B†
            gemm_acc(t.coeff, &b1_dag, &a1, &mut l_rhs);
            gemm_acc(t.coeff, &a2.dot(&rho2), &dagger(&b2), &mut r_rhs);
            ops.push(TermOps {
                kind: t.kind,
                coeff: t.coeff,
                a1,
                b1_dag,
            });
        }
        let l0 = left11.solve(&l_rhs, None).map_err(|e| e.in_term("left environment"))?;
        let rr = right22.solve(&r_rhs, None).map_err(|e| e.in_term("right environment"))?;
        let keep = kept_projector(&rho2, opts.min_schmidt_ratio);
        Ok(Self {
            sector: sector.clone(),
            terms: terms.to_vec(),
            ops,
            q1: s1.q().clone(),
            r1: s1.r().clone(),
            r1_dag: dagger(s1.r()),
            q2: s2.q().clone(),
            r2: s2.r().clone(),
            r2_dag: dagger(s2.r()),
            rho2,
            rho2_inv_sqrt: sq.inv_sqrt,
            l0,
            rr,
            right12,
            left21,
            p,
            keep,
            shift: opts.truncation_shift,
        })
    }

    pub fn sector(&self) -> &ExcitationSector {
        &self.sector
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.q1.nrows()
    }

    /// `W = Y r₂^{−1/2}`, `V = −R₁† W`.
    pub fn y_to_vw(&self, y: &GaugeParam) -> (ComplexMatrix, ComplexMatrix) {
        let w = y.dot(&self.rho2_inv_sqrt);
        let v = self.r1_dag.dot(&w).mapv(|z| -z);
        (v, w)
    }

    /// Adjoint of [`Self::y_to_vw`]: `(a_W − R₁ a_V) r₂^{−1/2}`.
    pub fn vw_adjoint(&self, a_v: &ComplexMatrix, a_w: &ComplexMatrix) -> GaugeParam {
        let mut t = a_w.clone();
        gemm_acc(-ONE, &self.r1, a_v, &mut t);
        t.dot(&self.rho2_inv_sqrt)
    }

    /// Number of kept `r₂` eigendirections, `None` without truncation.
    pub fn kept_rank(&self) -> Option<usize> {
        self.keep
            .as_ref()
            .map(|k| k.diag().iter().map(|z| z.re).sum::<f64>().round() as usize)
    }

    pub fn apply(&self, y: &GaugeParam) -> Result<GaugeParam> {
        check_square(y, self.dim(), "Y")?;
        let Some(keep) = &self.keep else {
            return self.apply_full(y);
        };
        let yk = y.dot(keep);
        let mut out = self.apply_full(&yk)?.dot(keep);
        let mut rest = y.clone();
        axpy(-ONE, &yk, &mut rest);
        axpy(C64::new(self.shift, 0.0), &rest, &mut out);
        Ok(out)
    }

    fn apply_full(&self, y: &GaugeParam) -> Result<GaugeParam> {
        let (v, w) = self.y_to_vw(y);
        let st1 = (&self.q1, &self.r1);
        let st2 = (&self.q2, &self.r2);

        // bra insertion left of the ket insertion: right environment just right of the bra
        let mut k_r = v.dot(&self.rho2);
        gemm_acc(ONE, &w.dot(&self.rho2), &self.r2_dag, &mut k_r);
        let rm = self.right12.solve(&k_r, None).map_err(|e| e.in_term("mixed right solve"))?;

        // ket insertion left of the bra insertion: left environment just right of the ket
        let mut l_m = self.l0.dot(&v);
        gemm_acc(ONE, &self.r1_dag, &self.l0.dot(&w), &mut l_m);
        let contacts: Vec<Option<ComplexMatrix>> = self
            .ops
            .iter()
            .map(|t| ket_contact(t.kind, st1, st2, &v, &w, self.p))
            .collect();
        for (t, ca) in self.ops.iter().zip(&contacts) {
            if let Some(ca) = ca {
                gemm_acc(t.coeff, &t.b1_dag, ca, &mut l_m);
            }
        }
        let lm = self.left21.solve(&l_m, None).map_err(|e| e.in_term("mixed left solve"))?;

        let mut a_v = lm.dot(&self.rho2);
        gemm_acc(ONE, &self.l0, &rm, &mut a_v);
        let mut a_w = self.l0.dot(&w).dot(&self.rho2);
        gemm_acc(ONE, &lm.dot(&self.r2), &self.rho2, &mut a_w);
        gemm_acc(ONE, &self.l0.dot(&self.r1), &rm, &mut a_w);
        gemm_acc(ONE, &w, &self.rr, &mut a_w);

        for (t, ca) in self.ops.iter().zip(&contacts) {
            let mut g = t.a1.dot(&rm);
            if let Some(ca) = ca {
                gemm_acc(ONE, ca, &self.rho2, &mut g);
            }
            g.mapv_inplace(|z| z * t.coeff);
            bra_contact_adjoint(t.kind, st1, st2, &g, self.p, &mut a_v, &mut a_w);
        }
        Ok(self.vw_adjoint(&a_v, &a_w))
    }

    /// Gauge-slice coordinates of the unfixed direction `(V, W) = (0, 1)`, i.e. a field
    /// creation operator inserted into the path-ordered exponential.
    pub fn reference_direction(&self) -> Result<GaugeParam> {
        let lk = self
            .left21
            .solve(&self.r1_dag, None)
            .map_err(|e| e.in_term("reference left solve"))?;
        let a_v = lk.dot(&self.rho2);
        let mut a_w = lk.dot(&self.r2).dot(&self.rho2);
        axpy(ONE, &self.rho2, &mut a_w);
        let y = self.vw_adjoint(&a_v, &a_w);
        Ok(match &self.keep {
            Some(k) => y.dot(k),
            None => y,
        })
    }
}

fn kept_projector(rho2: &ComplexMatrix, ratio: f64) -> Option<ComplexMatrix> {
    if ratio <= 0.0 {
        return None;
    }
    let (vals, vecs) = herm_eig(rho2);
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] >= ratio * top).collect();
    if kept.len() == vals.len() {
        return None;
    }
    let d = vals.len();
    let mut proj = ComplexMatrix::zeros((d, d));
    for &j in &kept {
        let u = vecs.column(j);
        for a in 0..d {
            for b in 0..d {
                proj[(a, b)] += u[a] * u[b].conj();
            }
        }
    }
    Some(proj)
}

/// `(V, W)` for a gauge parameter in the given sector.
pub fn y_to_vw(y: &GaugeParam, sector: &ExcitationSector, max_cond: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    check_square(y, sector.dim(), "Y")?;
    let sq = herm_sqrt(sector.right().r_fp(), max_cond)?;
    let w = y.dot(&sq.inv_sqrt);
    let v = dagger(sector.left().r()).dot(&w).mapv(|z| -z);
    Ok((v, w))
}

/// Residual `‖l₁V + R₁†l₁W‖` of the left gauge condition (`l₁ = 1`).
pub fn gauge_residual(state: &CmpsState, v: &ComplexMatrix, w: &ComplexMatrix) -> f64 {
    crate::linalg::norm(&(v + &dagger(state.r()).dot(w)))
}

/// Overlap density `Tr(Y₁†Y₂)`; the effective norm matrix is the identity in this gauge.
pub fn norm_overlap(y1: &GaugeParam, y2: &GaugeParam) -> C64 {
    inner(y1, y2)
}

pub fn apply_effective_h(y: &GaugeParam, op: &EffectiveOperator) -> Result<GaugeParam> {
    op.apply(y)
}
