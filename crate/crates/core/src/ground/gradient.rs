use crate::cmps::{term_operators, CmpsState, ModelParams};
use crate::error::Result;
use crate::excitation::operator::bra_contact_adjoint;
use crate::excitation::GaugeParam;
use crate::linalg::krylov::{KrylovOptions, ShiftedSolver};
use crate::linalg::transfer::Side;
use crate::linalg::{dagger, gemm_acc, herm_sqrt, ComplexMatrix, I, ONE, ZERO};

/// Gradient of the energy density in the gauge-fixed tangent coordinates `Y` at `p = 0`:
/// moving the state along `h·Y` changes the energy by `h·Re Tr(grad† Y)` to first order.
pub fn energy_gradient(state: &CmpsState, params: &ModelParams) -> Result<GaugeParam> {
    energy_gradient_with(state, params, &gradient_krylov())
}

/// The left environment sets the accuracy floor of the gradient, so it is solved tightly.
pub fn gradient_krylov() -> KrylovOptions {
    KrylovOptions {
        tol: 1e-13,
        max_iter: 6000,
        ..Default::default()
    }
}

pub fn energy_gradient_with(state: &CmpsState, params: &ModelParams, krylov: &KrylovOptions) -> Result<GaugeParam> {
    params.validate()?;
    let d = state.dim();
    let (q, r, rho) = (state.q(), state.r(), state.r_fp());
    let mut l_rhs = ComplexMatrix::zeros((d, d));
    let terms = params.terms();
    let ops: Vec<_> = terms.iter().map(|t| term_operators(state, t.kind)).collect();
    for (t, (a, b)) in terms.iter().zip(&ops) {
        gemm_acc(t.coeff, &dagger(b), a, &mut l_rhs);
    }
    let solver = ShiftedSolver::new(&state.transfer(), ZERO, Side::Left, Some(&state.deflation()), krylov)?;
    let l0 = solver.solve(&l_rhs, None).map_err(|e| e.in_term("gradient environment"))?;

    // operator left of the bra insertion, then contact terms; the operator right of
    // the insertion is removed by the gauge condition
    let mut a_v = l0.dot(rho);
    let mut a_w = l0.dot(r).dot(rho);
    for (t, (a, _)) in terms.iter().zip(&ops) {
        let g = a.dot(rho).mapv(|z| z * t.coeff);
        bra_contact_adjoint(t.kind, (q, r), (q, r), &g, 0.0, &mut a_v, &mut a_w);
    }
    let sq = herm_sqrt(rho, 1e13)?;
    let mut y = a_w;
    gemm_acc(-ONE, r, &a_v, &mut y);
    Ok(y.dot(&sq.inv_sqrt).mapv(|z| z * 2.0))
}

/// Moves the state along the tangent direction `Y` by `alpha`, staying left-canonical:
/// `R ← R + αW`, `K ← K + α(i/2)(W†R − R†W)` with `W = Y r^{−1/2}`.
pub fn retract(state: &CmpsState, y: &GaugeParam, alpha: f64) -> Result<CmpsState> {
    let sq = herm_sqrt(state.r_fp(), 1e13)?;
    let w = y.dot(&sq.inv_sqrt);
    let r = state.r();
    let mut dk = dagger(&w).dot(r);
    gemm_acc(-ONE, &dagger(r), &w, &mut dk);
    let k = state.k() + dk.mapv(|z| z * (I * 0.5 * alpha));
    let r_new = r + &w.mapv(|z| z * alpha);
    CmpsState::from_kr(&crate::linalg::hermitian_part(&k), r_new, Some(state.r_fp()))
}
