//! Quasiparticle excitations on top of a cMPS ground state.

pub mod composite;
pub mod operator;
pub mod sector;
pub mod spectrum;

pub use composite::{combine_topological, pair_cloud, BranchSample, CompositeCurves};
pub use operator::{
    apply_effective_h, gauge_residual, norm_overlap, y_to_vw, EffectiveOperator, ExcitationOptions, GaugeParam,
};
pub use sector::{ExcitationSector, SectorMode};
pub use spectrum::{
    branch_overlap, delta_particle_number, scan_dispersion, scan_particle_branch, solve_particle_branch,
    solve_spectrum, BranchPoint, ScanPoint, SpectrumOptions, SpectrumPoint,
};
