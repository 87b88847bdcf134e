//! Pipelines shared by the command line and the acceptance runs: topological branches in
//! units of `πρ`, composite curves against the Bethe solution, ΔN of the hole and the
//! pairing bound state against the two-kink threshold.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::bethe::BetheSolution;
use crate::cmps::{density, CmpsState, ModelParams};
use crate::error::{Error, Result};
use crate::excitation::spectrum::solve_with_operator;
use crate::excitation::{
    solve_particle_branch, BranchSample, CompositeCurves, EffectiveOperator, ExcitationOptions, ExcitationSector,
    SpectrumOptions,
};

/// The θ = π sector used for LL holes and particles and for pairing kinks.
pub fn kink_sector(state: &CmpsState, p: f64) -> Result<ExcitationSector> {
    ExcitationSector::topological(state, PI, p)
}

fn lowest(sector: &ExcitationSector, params: &ModelParams, k: usize, opts: &ExcitationOptions) -> Result<Vec<f64>> {
    let op = EffectiveOperator::new(sector, params, opts)?;
    let sp = solve_with_operator(
        &op,
        &SpectrumOptions {
            k,
            excitation: opts.clone(),
            overlaps: false,
            delta_n: false,
        },
    )?;
    Ok(sp.energies)
}

/// Lowest topological energy at `p = t·πρ` for each `t`.
pub fn hole_branch(
    state: &CmpsState,
    params: &ModelParams,
    ts: &[f64],
    opts: &ExcitationOptions,
) -> Vec<Result<BranchSample>> {
    let pf = PI * density(state);
    ts.par_iter()
        .map(|&t| {
            let p = t * pf;
            let e = lowest(&kink_sector(state, p)?, params, 1, opts)?[0];
            Ok(BranchSample { p, energy: e })
        })
        .collect()
}

/// Topological state with the largest field-insertion overlap at `p = t·πρ`, `|t| ≥ 1`. At
/// the umklapp points the particle and the hole meet in the lowest state, which is used there.
pub fn particle_branch(
    state: &CmpsState,
    params: &ModelParams,
    ts: &[f64],
    opts: &ExcitationOptions,
) -> Vec<Result<BranchSample>> {
    let pf = PI * density(state);
    ts.par_iter()
        .map(|&t| {
            let p = t * pf;
            if t.abs() < 1.0 - 1e-12 {
                return Err(Error::InvalidParameter(format!("particle branch needs |p| ≥ πρ, got {t}·πρ")));
            }
            let sector = kink_sector(state, p)?;
            let energy = if (t.abs() - 1.0).abs() <= 1e-12 {
                lowest(&sector, params, 1, opts)?[0]
            } else {
                solve_particle_branch(&sector, params, opts)?.energy
            };
            Ok(BranchSample { p, energy })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub curve: &'static str,
    pub p: f64,
    pub variational: f64,
    pub bethe: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BetheComparison {
    pub rows: Vec<ComparisonRow>,
    pub max_rel_type1: f64,
    pub max_rel_type2: f64,
    /// absolute error scale below which deviations are measured against instead of `|E|`
    pub floor: f64,
}

/// Relative deviation of the composite curves from Lieb's type I / II over `|P| ≤ 2πρ`.
/// Near the gapless points `|E|` vanishes, so errors are divided by
/// `max(|E_Bethe|, floor_fraction · max E_II)`.
pub fn compare_composites(curves: &CompositeCurves, bethe: &BetheSolution, floor_fraction: f64) -> BetheComparison {
    let pf = bethe.fermi_momentum();
    let e2_max = bethe.hole_energy(0.0).unwrap_or(0.0);
    let floor = floor_fraction * e2_max;
    let mut rows = Vec::new();
    let mut maxes = [0.0f64; 2];
    for (idx, (name, samples)) in [("type1", &curves.type1), ("type2", &curves.type2)].into_iter().enumerate() {
        for s in samples.iter().filter(|s| s.p.abs() <= 2.0 * pf * (1.0 + 1e-9)) {
            let exact = if idx == 0 {
                bethe.lieb_type1(s.p)
            } else {
                match bethe.lieb_type2(s.p.clamp(-2.0 * pf, 2.0 * pf)) {
                    Ok(v) => v,
                    Err(_) => continue,
                }
            };
            let rel = (s.energy - exact).abs() / exact.abs().max(floor).max(f64::MIN_POSITIVE);
            maxes[idx] = maxes[idx].max(rel);
            rows.push(ComparisonRow {
                curve: name,
                p: s.p,
                variational: s.energy,
                bethe: exact,
                rel_err: rel,
            });
        }
    }
    BetheComparison {
        rows,
        max_rel_type1: maxes[0],
        max_rel_type2: maxes[1],
        floor,
    }
}

/// Energy and particle-number change of the lowest topological state at `p = 0`.
pub fn hole_delta_n(state: &CmpsState, params: &ModelParams, opts: &ExcitationOptions) -> Result<(f64, f64)> {
    let sector = kink_sector(state, 0.0)?;
    let op = EffectiveOperator::new(&sector, params, opts)?;
    let sp = solve_with_operator(
        &op,
        &SpectrumOptions {
            k: 1,
            excitation: opts.clone(),
            overlaps: false,
            delta_n: true,
        },
    )?;
    let dn = sp.delta_n.as_ref().and_then(|v| v.first().copied()).expect("requested");
    Ok((sp.energies[0], dn))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KinkMinimum {
    pub p: f64,
    pub energy: f64,
}

/// Minimum over `p ∈ [0, p_max]` of the lowest topological energy: a grid of `n` points,
/// then one parabolic step around the best interior grid point.
pub fn kink_minimum(
    state: &CmpsState,
    params: &ModelParams,
    p_max: f64,
    n: usize,
    opts: &ExcitationOptions,
) -> Result<KinkMinimum> {
    let n = n.max(2);
    let ps: Vec<f64> = (0..n).map(|i| p_max * i as f64 / (n - 1) as f64).collect();
    let es: Vec<f64> = ps
        .par_iter()
        .map(|&p| Ok(lowest(&kink_sector(state, p)?, params, 1, opts)?[0]))
        .collect::<Result<_>>()?;
    let i = (0..n).min_by(|&a, &b| es[a].total_cmp(&es[b])).unwrap();
    let mut best = KinkMinimum { p: ps[i], energy: es[i] };
    if i > 0 && i + 1 < n {
        let (x0, x1, x2) = (ps[i - 1], ps[i], ps[i + 1]);
        let (y0, y1, y2) = (es[i - 1], es[i], es[i + 1]);
        let den = (x0 - x1) * (y0 - y2) - (x0 - x2) * (y0 - y1);
        if den.abs() > 0.0 {
            let num = (x0 - x1).powi(2) * (y0 - y2) - (x0 - x2).powi(2) * (y0 - y1);
            let xv = x0 - 0.5 * num / den;
            if xv > x0 && xv < x2 {
                let ev = lowest(&kink_sector(state, xv)?, params, 1, opts)?[0];
                if ev < best.energy {
                    best = KinkMinimum { p: xv, energy: ev };
                }
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundStateRow {
    pub d: usize,
    pub inv_d: f64,
    /// two lowest trivial energies at `p = 0`
    pub e_trivial: [f64; 2],
    pub kink: KinkMinimum,
    pub two_kink: f64,
}

impl BoundStateRow {
    /// `2·E_kink − E_trivial,1`; positive when the lowest trivial state is below the continuum.
    pub fn binding(&self) -> f64 {
        self.two_kink - self.e_trivial[0]
    }
}

/// One row of the bound-state convergence study; kinks are scanned over `[0, 2πρ]`.
pub fn bound_state_row(
    state: &CmpsState,
    params: &ModelParams,
    kink_grid: usize,
    opts: &ExcitationOptions,
) -> Result<BoundStateRow> {
    let d = state.dim();
    let triv = lowest(&ExcitationSector::trivial(state, 0.0), params, 2, opts)?;
    let kink = kink_minimum(state, params, 2.0 * PI * density(state), kink_grid, opts)?;
    Ok(BoundStateRow {
        d,
        inv_d: 1.0 / d as f64,
        e_trivial: [triv[0], triv[1]],
        kink,
        two_kink: 2.0 * kink.energy,
    })
}

/// Least-squares line `y = a + b x`; `(a, b)`, or `None` with fewer than two distinct abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}
