use crate::cmps::{CmpsState, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::C64;

use super::{gamma_of, optimize, GroundStateResult, OptimizerConfig};

#[derive(Clone, Debug)]
pub struct TuneResult {
    /// the tuned parameter (μ or c)
    pub value: f64,
    pub result: GroundStateResult,
    pub gamma: f64,
    pub evaluations: usize,
}

const MAX_EVALS: usize = 40;

/// Solves `ln γ(x) = ln γ*` over `x > 0` by secant steps in `ln x`, switching to
/// Illinois regula falsi once bracketed. Each evaluation warm-starts from the previous state.
fn tune(
    gamma_target: f64,
    tol: f64,
    x0: f64,
    // d ln γ / d ln x, used for the first step only
    slope_guess: f64,
    mut eval: impl FnMut(f64, Option<&CmpsState>) -> Result<GroundStateResult>,
    init: Option<&CmpsState>,
) -> Result<TuneResult> {
    if !(gamma_target > 0.0 && gamma_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("target γ must be positive, got {gamma_target}")));
    }
    if !(tol > 0.0) || !(x0 > 0.0) {
        return Err(Error::InvalidParameter("tolerance and starting value must be positive".into()));
    }
    let lt = gamma_target.ln();
    let mut evals = 0;
    let mut warm: Option<CmpsState> = init.cloned();
    let mut run = |t: f64, warm: &mut Option<CmpsState>, evals: &mut usize| -> Result<(f64, GroundStateResult)> {
        let res = eval(t.exp(), warm.as_ref())?;
        *evals += 1;
        let g = gamma_of(&res.state, &res.params);
        *warm = Some(res.state.clone());
        Ok((g.ln() - lt, res))
    };
    let done = |f: f64| (f.exp() - 1.0).abs() < tol;
    let mut ta = x0.ln();
    let (mut fa, ra) = run(ta, &mut warm, &mut evals)?;
    if done(fa) {
        return Ok(finish(ta, ra, evals));
    }
    let mut tb = ta - fa / slope_guess;
    let (mut fb, mut rb) = run(tb, &mut warm, &mut evals)?;
    // secant until bracketed
    while fa.signum() == fb.signum() {
        if done(fb) {
            return Ok(finish(tb, rb, evals));
        }
        if evals >= MAX_EVALS {
            return Err(Error::Bracketing(format!("γ stays on one side of {gamma_target} after {evals} runs")));
        }
        let slope = if (fb - fa).abs() > 1e-12 { (fb - fa) / (tb - ta) } else { slope_guess };
        let slope = if slope.signum() == slope_guess.signum() { slope } else { slope_guess };
        let mut tn = tb - fb / slope;
        // limit each jump to a factor e²
        tn = tn.clamp(tb - 2.0, tb + 2.0);
        ta = tb;
        fa = fb;
        tb = tn;
        let (f, r) = run(tb, &mut warm, &mut evals)?;
        fb = f;
        rb = r;
    }
    if done(fb) {
        return Ok(finish(tb, rb, evals));
    }
    // Illinois
    let mut side = 0i8;
    loop {
        if fb == fa {
            return Err(Error::NotConverged {
                what: "γ tuning (γ no longer resolved by the optimizer)",
                iterations: evals,
                residual: fb.exp() - 1.0,
            });
        }
        let tn = (ta * fb - tb * fa) / (fb - fa);
        let (fnew, rnew) = run(tn, &mut warm, &mut evals)?;
        if done(fnew) {
            return Ok(finish(tn, rnew, evals));
        }
        if evals >= MAX_EVALS {
            return Err(Error::NotConverged {
                what: "γ tuning",
                iterations: evals,
                residual: fnew.exp() - 1.0,
            });
        }
        if fnew.signum() == fb.signum() {
            ta = tb;
            fa = fb;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        tb = tn;
        fb = fnew;
    }
}

fn finish(t: f64, result: GroundStateResult, evaluations: usize) -> TuneResult {
    TuneResult {
        value: t.exp(),
        gamma: gamma_of(&result.state, &result.params),
        result,
        evaluations,
    }
}

/// Lieb-Liniger chemical potential giving `c/ρ = γ*` at bond dimension `d`.
/// `guess` overrides the starting μ; `warm` seeds the first optimization.
pub fn tune_mu_for_gamma(
    c: f64,
    gamma_target: f64,
    d: usize,
    tol: f64,
    cfg: &OptimizerConfig,
    guess: Option<f64>,
    warm: Option<&CmpsState>,
) -> Result<TuneResult> {
    if !(gamma_target > 0.0) {
        return Err(Error::InvalidParameter(format!("target γ must be positive, got {gamma_target}")));
    }
    // mean field ρ = μ/2c and the free-fermion μ = (πρ)², whichever is smaller
    let mu0 = guess.unwrap_or_else(|| (2.0 * c * c / gamma_target).min((std::f64::consts::PI * c / gamma_target).powi(2)));
    let eval = |mu: f64, w: Option<&CmpsState>| optimize(&ModelParams::lieb_liniger(c, mu), d, cfg, w);
    tune(gamma_target, tol, mu0, -0.75, eval, warm)
}

/// Interaction strength giving `c/ρ = γ*` at fixed `μ` and `u`; `guess` and `warm` as above.
pub fn tune_c_for_gamma(
    mu: f64,
    u: C64,
    gamma_target: f64,
    d: usize,
    tol: f64,
    cfg: &OptimizerConfig,
    guess: Option<f64>,
    warm: Option<&CmpsState>,
) -> Result<TuneResult> {
    if !(gamma_target > 0.0) {
        return Err(Error::InvalidParameter(format!("target γ must be positive, got {gamma_target}")));
    }
    let c0 = guess.unwrap_or_else(|| (gamma_target * (mu + 2.0 * u.norm()).max(1e-3) / 2.0).sqrt());
    let eval = |c: f64, w: Option<&CmpsState>| optimize(&ModelParams::pairing(c, mu, u), d, cfg, w);
    tune(gamma_target, tol, c0, 1.5, eval, warm)
}
