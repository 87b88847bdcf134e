//! Composite curves from topological branches: one particle plus one hole at the umklapp
//! points, and the all-pairs cloud of two topological excitations.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchSample {
    pub p: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositeCurves {
    /// particle at `q` plus the hole at `∓πρ`, total momentum `q ∓ πρ`
    pub type1: Vec<BranchSample>,
    /// hole at `h` plus the particle at `±πρ`, total momentum `h ± πρ`
    pub type2: Vec<BranchSample>,
}

fn at(samples: &[BranchSample], p: f64, tol: f64) -> Option<f64> {
    samples
        .iter()
        .filter(|s| (s.p - p).abs() <= tol)
        .min_by(|a, b| (a.p - p).abs().total_cmp(&(b.p - p).abs()))
        .map(|s| s.energy)
}

fn sorted(mut v: Vec<BranchSample>) -> Vec<BranchSample> {
    v.sort_by(|a, b| a.p.total_cmp(&b.p));
    v
}

/// Type I and Type II composites. The hole branch lives on `[−πρ, πρ]`, the particle
/// branch on `|q| ≥ πρ`; `tol` is the momentum tolerance for locating the endpoints.
pub fn combine_topological(
    hole: &[BranchSample],
    particle: &[BranchSample],
    rho: f64,
    tol: f64,
) -> Result<CompositeCurves> {
    let pf = std::f64::consts::PI * rho;
    let missing = |what: &str, p: f64| Error::MissingMomentum(format!("{what} momentum {p:.6}"));
    let mut type1 = Vec::new();
    for s in particle {
        if s.p >= pf - tol {
            let eh = at(hole, -pf, tol).ok_or_else(|| missing("hole", -pf))?;
            type1.push(BranchSample {
                p: s.p - pf,
                energy: eh + s.energy,
            });
        } else if s.p <= -pf + tol {
            let eh = at(hole, pf, tol).ok_or_else(|| missing("hole", pf))?;
            type1.push(BranchSample {
                p: s.p + pf,
                energy: eh + s.energy,
            });
        }
    }
    let mut type2 = Vec::new();
    if !hole.is_empty() {
        let ep = at(particle, pf, tol).ok_or_else(|| missing("particle", pf))?;
        let em = at(particle, -pf, tol);
        for s in hole.iter().filter(|s| s.p.abs() <= pf + tol) {
            type2.push(BranchSample {
                p: s.p + pf,
                energy: ep + s.energy,
            });
            if let Some(em) = em {
                type2.push(BranchSample {
                    p: s.p - pf,
                    energy: em + s.energy,
                });
            }
        }
    }
    Ok(CompositeCurves {
        type1: sorted(type1),
        type2: sorted(type2),
    })
}

/// Sums of every pair of topological excitations, `(p₁ + p₂, E₁ + E₂)`, pairs unordered.
pub fn pair_cloud(samples: &[BranchSample]) -> Vec<BranchSample> {
    let mut out = Vec::with_capacity(samples.len() * (samples.len() + 1) / 2);
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i..] {
            out.push(BranchSample {
                p: a.p + b.p,
                energy: a.energy + b.energy,
            });
        }
    }
    sorted(out)
}

/// Lowest cloud energy at total momentum `p` (within `tol`).
pub fn cloud_minimum(cloud: &[BranchSample], p: f64, tol: f64) -> Option<f64> {
    cloud
        .iter()
        .filter(|s| (s.p - p).abs() <= tol)
        .map(|s| s.energy)
        .min_by(f64::total_cmp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn curve(f: impl Fn(f64) -> f64, ps: &[f64]) -> Vec<BranchSample> {
        ps.iter().map(|&p| BranchSample { p, energy: f(p) }).collect()
    }

    #[test]
    fn free_fermion_composites() {
        let pf = PI;
        let hole_p: Vec<f64> = (0..=20).map(|i| pf * (i as f64 / 10.0 - 1.0)).collect();
        let part_p: Vec<f64> = (10..=30).map(|i| pf * i as f64 / 10.0).collect();
        let hole = curve(|q| pf * pf - q * q, &hole_p);
        let part = curve(|q| q * q - pf * pf, &part_p);
        let c = combine_topological(&hole, &part, 1.0, 1e-9).unwrap();
        for s in &c.type2 {
            // Lieb II for free fermions: 2 p_F P − P²
            assert!((s.energy - (2.0 * pf * s.p - s.p * s.p)).abs() < 1e-9);
        }
        assert!(c.type2.first().unwrap().energy.abs() < 1e-9);
        assert!(c.type2.last().unwrap().energy.abs() < 1e-9);
        for s in &c.type1 {
            assert!((s.energy - (2.0 * pf * s.p + s.p * s.p)).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_endpoint_is_reported() {
        let hole = vec![BranchSample { p: 0.0, energy: 1.0 }];
        let part = vec![BranchSample { p: 4.0, energy: 1.0 }];
        assert!(matches!(combine_topological(&hole, &part, 1.0, 1e-6), Err(Error::MissingMomentum(_))));
    }

    #[test]
    fn cloud_minimum_is_twice_the_branch_minimum() {
        let ps: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.2).collect();
        let kink = curve(|p| 0.7 + p * p, &ps);
        let cloud = pair_cloud(&kink);
        assert_eq!(cloud.len(), 21 * 22 / 2);
        assert!((cloud_minimum(&cloud, 0.0, 1e-9).unwrap() - 1.4).abs() < 1e-12);
    }
}
