//! Variational ground states: L-BFGS in the gauge-fixed tangent coordinates with
//! bond-dimension continuation.

mod gradient;
mod tune;

pub use gradient::{energy_gradient, energy_gradient_with, retract};
pub use tune::{tune_c_for_gamma, tune_mu_for_gamma, TuneResult};

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmps::{density, energy_density, observables, CmpsState, ModelParams, Observables};
use crate::error::{Error, Result};
use crate::excitation::GaugeParam;
use crate::linalg::{axpy, herm_eig, inner, norm, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub grad_tol: f64,
    /// iteration cap of each bond-dimension stage
    pub max_iters: usize,
    /// first trial step of every line search
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant
    pub armijo: f64,
    /// energy increase tolerated as rounding, relative to |e|
    pub energy_slack: f64,
    /// relative resolution of the energy density; smaller changes are judged by the gradient
    pub energy_noise: f64,
    pub memory: usize,
    pub seed: u64,
    /// amplitude of the random pad when growing D
    pub growth_noise: f64,
    /// gradient tolerance of intermediate bond dimensions
    pub growth_tol: f64,
    /// stop a stage when over this many iterations neither the gradient norm dropped by 10%
    /// nor the energy by more than rounding (0 disables)
    pub stall_window: usize,
    /// stop a stage once `λ_min(r)/λ_max(r)` falls below this: beyond it rounding in `r`
    /// dominates the gauge map (0 disables)
    pub min_r_ratio: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 5000,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            energy_slack: 1e-14,
            energy_noise: 1e-12,
            memory: 30,
            seed: 1,
            growth_noise: 1e-3,
            growth_tol: 1e-5,
            stall_window: 300,
            min_r_ratio: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParameter("grad_tol must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidParameter("line-search step controls out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Telemetry {
    pub energy_trace: Vec<f64>,
    pub grad_trace: Vec<f64>,
    /// bond dimensions visited by the continuation, in order
    pub stages: Vec<usize>,
    /// index into the traces where each stage begins
    pub stage_starts: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub state: CmpsState,
    pub params: ModelParams,
    pub observables: Observables,
    pub grad_norm_final: f64,
    pub iterations: usize,
    pub converged: bool,
    /// the final stage stopped at the conditioning limit `min_r_ratio`
    pub rank_limited: bool,
    pub telemetry: Telemetry,
}

fn rdot(a: &GaugeParam, b: &GaugeParam) -> f64 {
    inner(a, b).re
}

struct Stage {
    state: CmpsState,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    rank_limited: bool,
}

fn r_ratio(state: &CmpsState) -> f64 {
    let (ev, _) = herm_eig(state.r_fp());
    ev[0] / ev[ev.len() - 1]
}

/// One line-search trial: the candidate, its energy and gradient if the step is accepted.
/// Below the energy resolution `noise` the step is judged by the directional derivative.
#[allow(clippy::too_many_arguments)]
fn trial(
    state: &CmpsState,
    dir: &GaugeParam,
    step: f64,
    e: f64,
    slope: f64,
    noise: f64,
    params: &ModelParams,
    cfg: &OptimizerConfig,
) -> Result<Option<(CmpsState, f64, GaugeParam)>> {
    let cand = retract(state, dir, step)?;
    let ec = energy_density(&cand, params);
    if !ec.is_finite() {
        return Ok(None);
    }
    if ec <= e + cfg.armijo * step * slope + cfg.energy_slack * e.abs().max(1.0) {
        let gc = energy_gradient(&cand, params)?;
        return Ok(Some((cand, ec, gc)));
    }
    if (ec - e).abs() <= noise {
        let gc = energy_gradient(&cand, params)?;
        if rdot(&gc, dir) <= (1.0 - 2.0 * cfg.armijo) * slope.abs() {
            return Ok(Some((cand, ec, gc)));
        }
    }
    Ok(None)
}

/// L-BFGS at fixed D starting from `state`.
fn minimize(
    mut state: CmpsState,
    params: &ModelParams,
    cfg: &OptimizerConfig,
    tol: f64,
    max_iters: usize,
    tel: &mut Telemetry,
) -> Result<Stage> {
    let mut e = energy_density(&state, params);
    let mut g = energy_gradient(&state, params)?;
    let mut gn = norm(&g);
    let mut hist: VecDeque<(GaugeParam, GaugeParam, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut fresh_failures = 0;
    let (mut best, mut best_at) = (gn, 0);
    let mut rank_limited = false;
    let mut last_step = 1.0f64;
    tel.energy_trace.push(e);
    tel.grad_trace.push(gn);
    while gn >= tol && iterations < max_iters {
        // two-loop recursion
        let mut dir = g.mapv(|z| -z);
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * rdot(s, &dir);
            axpy(C64::new(-a, 0.0), y, &mut dir);
            alphas.push(a);
        }
        let gamma = hist
            .back()
            .map(|(s, y, _)| rdot(s, y) / rdot(y, y))
            .unwrap_or_else(|| cfg.initial_step.min(1.0 / gn.max(1e-300)));
        dir.mapv_inplace(|z| z * gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * rdot(y, &dir);
            axpy(C64::new(a - b, 0.0), s, &mut dir);
        }
        let mut slope = rdot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.mapv(|z| -z / gn.max(1e-300));
            slope = rdot(&g, &dir);
        }
        // start near the last accepted step: curvature pairs transported by identity can
        // overshoot by orders of magnitude once r is badly conditioned
        let mut step = if hist.is_empty() { cfg.initial_step.min(1.0) } else { (4.0 * last_step).min(1.0) };
        let mut accepted = None;
        let noise = cfg.energy_noise * e.abs().max(1.0);
        for _ in 0..40 {
            match trial(&state, &dir, step, e, slope, noise, params, cfg) {
                Ok(Some(found)) => {
                    accepted = Some(found);
                    break;
                }
                Ok(None) => {}
                Err(Error::RankDeficient { .. } | Error::DegenerateFixedPoint(_) | Error::NotConverged { .. }) => {}
                Err(err) => return Err(err),
            }
            step *= cfg.shrink;
        }
        iterations += 1;
        let Some((cand, ec, gc)) = accepted else {
            if hist.is_empty() {
                fresh_failures += 1;
                if fresh_failures > 2 {
                    break;
                }
            }
            hist.clear();
            continue;
        };
        fresh_failures = 0;
        last_step = step;
        let g_new = gc;
        // identity transport between neighbouring tangent spaces
        let s = dir.mapv(|z| z * step);
        let y = &g_new - &g;
        let sy = rdot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > cfg.memory {
                hist.pop_front();
            }
        }
        state = cand;
        e = ec;
        g = g_new;
        gn = norm(&g);
        tel.energy_trace.push(e);
        tel.grad_trace.push(gn);
        if cfg.min_r_ratio > 0.0 && gn >= tol && r_ratio(&state) < cfg.min_r_ratio {
            rank_limited = true;
            break;
        }
        if gn < 0.9 * best {
            (best, best_at) = (gn, iterations);
        } else if cfg.stall_window > 0 && iterations - best_at >= cfg.stall_window {
            let n = tel.energy_trace.len();
            let drop = tel.energy_trace[n - 1 - cfg.stall_window.min(n - 1)] - e;
            if drop <= 1e-11 * e.abs().max(1.0) {
                break;
            }
            (best, best_at) = (gn, iterations);
        }
    }
    Ok(Stage {
        state,
        grad_norm: gn,
        iterations,
        converged: gn < tol,
        rank_limited,
    })
}

/// Bond dimensions of the continuation towards `d`: doubling from the start.
fn growth_schedule(start: usize, d: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = start.max(1);
    while cur < d {
        out.push(cur);
        cur = (cur * 2).min(d);
    }
    out.push(d);
    out
}

/// Ground state at bond dimension `d`. Without `init` the run starts from a random
/// `D = min(d, 2)` state near the mean-field density and grows D by doubling; with a
/// smaller `init` it is embedded and grown from there.
pub fn optimize(
    params: &ModelParams,
    d: usize,
    cfg: &OptimizerConfig,
    init: Option<&CmpsState>,
) -> Result<GroundStateResult> {
    params.validate()?;
    cfg.validate()?;
    if d == 0 {
        return Err(Error::InvalidParameter("bond dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = match init {
        Some(s) if s.dim() > d => {
            return Err(Error::InvalidParameter(format!("initial state has D={} > {d}", s.dim())));
        }
        Some(s) => s.clone(),
        None => {
            let rho0 = ((params.mu + 2.0 * params.u.norm()) / (2.0 * params.c)).max(0.1);
            CmpsState::random(d.min(2), rho0, &mut rng)?
        }
    };
    let mut tel = Telemetry {
        energy_trace: vec![],
        grad_trace: vec![],
        stages: vec![],
        stage_starts: vec![],
    };
    let mut iterations = 0;
    let schedule = growth_schedule(state.dim(), d);
    let mut last = None;
    for (i, &dk) in schedule.iter().enumerate() {
        if dk > state.dim() {
            state = state.embed(dk, cfg.growth_noise, &mut rng)?;
        }
        let final_stage = i + 1 == schedule.len();
        let tol = if final_stage { cfg.grad_tol } else { cfg.growth_tol.max(cfg.grad_tol) };
        tel.stages.push(dk);
        tel.stage_starts.push(tel.energy_trace.len());
        let st = minimize(state, params, cfg, tol, cfg.max_iters, &mut tel)?;
        iterations += st.iterations;
        state = st.state.clone();
        last = Some(st);
    }
    let st = last.expect("non-empty schedule");
    Ok(GroundStateResult {
        observables: observables(&st.state, params),
        params: *params,
        state: st.state,
        grad_norm_final: st.grad_norm,
        iterations,
        converged: st.converged,
        rank_limited: st.rank_limited,
        telemetry: tel,
    })
}

/// `c/ρ` of a state.
pub fn gamma_of(state: &CmpsState, params: &ModelParams) -> f64 {
    params.c / density(state)
}
