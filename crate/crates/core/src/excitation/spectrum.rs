//! Excitation spectra: lowest states per momentum, the particle branch, ΔN and CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cmps::{LocalTerm, ModelParams, TermKind};
use crate::error::{Error, Result};
use crate::linalg::eigs::{lowest_eigenpairs, max_overlap_eigenpair};
use crate::linalg::{inner, norm, ComplexMatrix, ONE};

use super::operator::{EffectiveOperator, ExcitationOptions, GaugeParam};
use super::sector::ExcitationSector;

#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    pub k: usize,
    pub excitation: ExcitationOptions,
    pub overlaps: bool,
    pub delta_n: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            k: 4,
            excitation: ExcitationOptions::default(),
            overlaps: true,
            delta_n: false,
        }
    }
}

/// Lowest eigenpairs of `H − E₀` at one momentum.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumPoint {
    pub p: f64,
    pub energies: Vec<f64>,
    #[serde(skip)]
    pub eigvecs: Vec<GaugeParam>,
    pub residuals: Vec<f64>,
    pub overlaps: Vec<f64>,
    pub delta_n: Option<Vec<f64>>,
    /// indices i with E_i ≈ E_{i+1}
    pub degenerate: Vec<usize>,
}

impl SpectrumPoint {
    /// Index of the state with the largest branch overlap, if overlaps were computed.
    pub fn particle_index(&self) -> Option<usize> {
        (0..self.overlaps.len()).max_by(|&a, &b| self.overlaps[a].total_cmp(&self.overlaps[b]))
    }
}

/// A state selected by its overlap with the field-insertion reference.
#[derive(Clone, Debug, Serialize)]
pub struct BranchPoint {
    pub p: f64,
    pub energy: f64,
    #[serde(skip)]
    pub vector: GaugeParam,
    pub overlap: f64,
    pub residual: f64,
}

/// `|⟨Y, Y_ref⟩| / (‖Y‖‖Y_ref‖)`; the norm form is the identity on the gauge slice.
pub fn overlap_with(y: &GaugeParam, reference: &GaugeParam) -> f64 {
    let den = norm(y) * norm(reference);
    if den == 0.0 {
        return 0.0;
    }
    inner(y, reference).norm() / den
}

/// Overlap of `Y` with the projected field insertion of the operator's sector.
pub fn branch_overlap(y: &GaugeParam, op: &EffectiveOperator) -> Result<f64> {
    Ok(overlap_with(y, &op.reference_direction()?))
}

/// The particle-number operator `N − ρL` on the gauge slice of a sector.
pub fn particle_number_operator(sector: &ExcitationSector, opts: &ExcitationOptions) -> Result<EffectiveOperator> {
    let density = LocalTerm {
        kind: TermKind::Density,
        coeff: ONE,
    };
    EffectiveOperator::with_terms(sector, &[density], opts)
}

/// `⟨Y, N Y⟩ / ⟨Y, Y⟩` for a particle-number operator.
pub fn delta_n_with(y: &GaugeParam, number_op: &EffectiveOperator) -> Result<f64> {
    let ny = number_op.apply(y)?;
    let num = inner(y, &ny);
    let den = inner(y, y).re;
    if den == 0.0 {
        return Err(Error::InvalidParameter("zero excitation vector".into()));
    }
    let val = num / den;
    if val.im.abs() > 1e-9 * (1.0 + val.re.abs()) {
        return Err(Error::NotHermitian(val.im.abs()));
    }
    Ok(val.re)
}

/// Change of the particle number carried by the excitation `Y`.
pub fn delta_particle_number(y: &GaugeParam, sector: &ExcitationSector, opts: &ExcitationOptions) -> Result<f64> {
    delta_n_with(y, &particle_number_operator(sector, opts)?)
}

fn as_op(op: &EffectiveOperator) -> impl Fn(&ComplexMatrix) -> Result<ComplexMatrix> + Sync + '_ {
    move |y| op.apply(y)
}

/// The `k` lowest excitation energies at the sector's momentum.
pub fn solve_spectrum(sector: &ExcitationSector, params: &ModelParams, opts: &SpectrumOptions) -> Result<SpectrumPoint> {
    let op = EffectiveOperator::new(sector, params, &opts.excitation)?;
    solve_with_operator(&op, opts)
}

pub fn solve_with_operator(op: &EffectiveOperator, opts: &SpectrumOptions) -> Result<SpectrumPoint> {
    let d = op.dim();
    let f = as_op(op);
    let res = lowest_eigenpairs(&f, d, opts.k, &opts.excitation.eig)?;
    let reference = if opts.overlaps { Some(op.reference_direction()?) } else { None };
    let overlaps = match &reference {
        Some(r) => res.pairs.iter().map(|pr| overlap_with(&pr.vector, r)).collect(),
        None => vec![],
    };
    let delta_n = if opts.delta_n {
        let nop = particle_number_operator(op.sector(), &opts.excitation)?;
        Some(res.pairs.iter().map(|pr| delta_n_with(&pr.vector, &nop)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(SpectrumPoint {
        p: op.sector().p(),
        energies: res.pairs.iter().map(|pr| pr.value).collect(),
        residuals: res.pairs.iter().map(|pr| pr.residual).collect(),
        eigvecs: res.pairs.into_iter().map(|pr| pr.vector).collect(),
        overlaps,
        delta_n,
        degenerate: res.degenerate,
    })
}

/// The eigenstate with maximal overlap with the field insertion, found without
/// computing the states below it.
pub fn solve_particle_branch(
    sector: &ExcitationSector,
    params: &ModelParams,
    opts: &ExcitationOptions,
) -> Result<BranchPoint> {
    let op = EffectiveOperator::new(sector, params, opts)?;
    let reference = op.reference_direction()?;
    let f = as_op(&op);
    let (pair, overlap) = max_overlap_eigenpair(&f, &reference, &opts.eig)?;
    Ok(BranchPoint {
        p: sector.p(),
        energy: pair.value,
        vector: pair.vector,
        overlap,
        residual: pair.residual,
    })
}

/// One momentum of a scan; failures are kept so the scan can continue.
#[derive(Debug)]
pub struct ScanPoint {
    pub p: f64,
    pub result: Result<SpectrumPoint>,
}

/// Spectra over a momentum grid, one independent task per momentum; output order
/// follows the grid.
pub fn scan_dispersion(
    template: &ExcitationSector,
    grid: &[f64],
    params: &ModelParams,
    opts: &SpectrumOptions,
) -> Vec<ScanPoint> {
    grid.par_iter()
        .map(|&p| ScanPoint {
            p,
            result: solve_spectrum(&template.with_momentum(p), params, opts),
        })
        .collect()
}

/// Particle branch over a momentum grid.
pub fn scan_particle_branch(
    template: &ExcitationSector,
    grid: &[f64],
    params: &ModelParams,
    opts: &ExcitationOptions,
) -> Vec<(f64, Result<BranchPoint>)> {
    grid.par_iter()
        .map(|&p| (p, solve_particle_branch(&template.with_momentum(p), params, opts)))
        .collect()
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Writes a scan as CSV: `p, p_over_rho, E_i…, E_over_rho2_i…, overlap_i…, delta_n_i…`.
/// Failed points keep their momentum with blank values.
pub fn write_spectrum_csv<W: Write>(out: W, points: &[ScanPoint], rho: f64, k: usize) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["p".to_string(), "p_over_rho".to_string()];
    for prefix in ["E", "E_over_rho2", "overlap", "delta_n"] {
        header.extend((1..=k).map(|i| format!("{prefix}_{i}")));
    }
    wtr.write_record(&header).map_err(csv_err)?;
    for pt in points {
        let mut row = vec![fmt(pt.p), fmt(pt.p / rho)];
        let cell = |v: Option<&Vec<f64>>, i: usize, scale: f64| v.and_then(|v| v.get(i)).map(|x| fmt(x * scale)).unwrap_or_default();
        let ok = pt.result.as_ref().ok();
        for (field, scale) in [(0, 1.0), (0, 1.0 / (rho * rho)), (1, 1.0), (2, 1.0)] {
            for i in 0..k {
                let v = ok.and_then(|s| match field {
                    0 => Some(&s.energies),
                    1 => Some(&s.overlaps),
                    _ => s.delta_n.as_ref(),
                });
                row.push(cell(v, i, scale));
            }
        }
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

/// Relative imbalance `|E(p) − E(−p)|` helper for symmetric grids.
pub fn parity_defect(a: &SpectrumPoint, b: &SpectrumPoint) -> f64 {
    a.energies
        .iter()
        .zip(&b.energies)
        .map(|(x, y)| (x - y).abs() / x.abs().max(1.0))
        .fold(0.0, f64::max)
}
