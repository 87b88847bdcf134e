//! Lieb-Liniger dressed energy, root density and excitation branches from the
//! linear integral equations on the Fermi interval, by Nyström discretization.

use std::f64::consts::PI;
use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BetheOptions {
    pub n_quad: usize,
    /// relative tolerance on the Fermi rapidity
    pub tol: f64,
    /// re-solve with twice the nodes and fail if anything moves by more than this (0 disables)
    pub doubling_tol: f64,
}

impl Default for BetheOptions {
    fn default() -> Self {
        Self {
            n_quad: 256,
            tol: 1e-15,
            doubling_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BetheSolution {
    pub c: f64,
    pub mu: f64,
    /// Fermi rapidity K
    pub k_fermi: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rho_k: Vec<f64>,
    pub eps_k: Vec<f64>,
    pub rho: f64,
    /// `∫(k² − μ)ρ(k)dk`, the energy density including the chemical potential
    pub e: f64,
    pub gamma: f64,
}

fn kernel(c: f64, x: f64) -> f64 {
    2.0 * c / (c * c + x * x)
}

fn kernel_deriv(c: f64, x: f64) -> f64 {
    -4.0 * c * x / (c * c + x * x).powi(2)
}

struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn grid(n: usize, k: f64) -> Result<Grid> {
    let n = NonZeroUsize::new(n).filter(|n| n.get() >= 2).ok_or_else(|| Error::InvalidParameter("n_quad must be ≥ 2".into()))?;
    let rule = GaussLegendre::new(n);
    // symmetrize against rounding so evenness holds exactly
    let raw: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    let m = raw.len();
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mut sorted = raw.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in 0..m {
        let j = m - 1 - i;
        nodes[i] = 0.5 * (sorted[i].0 - sorted[j].0) * k;
        weights[i] = 0.5 * (sorted[i].1 + sorted[j].1) * k;
    }
    Ok(Grid { nodes, weights })
}

/// Solves `f(k) − (1/2π)∫ K(k−q) f(q) dq = g(k)` on the grid.
fn nystrom(c: f64, g: &Grid, rhs: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let n = g.nodes.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - g.weights[j] * kernel(c, g.nodes[i] - g.nodes[j]) / (2.0 * PI)
    });
    let b = DVector::from_iterator(n, g.nodes.iter().map(|&k| rhs(k)));
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NotConverged {
            what: "Nyström system",
            iterations: 0,
            residual: f64::NAN,
        })?;
    Ok(x.iter().copied().collect())
}

/// `ε(k)` at any k from the values on the grid (Nyström interpolation).
fn interp(c: f64, g: &Grid, vals: &[f64], k: f64, source: f64) -> f64 {
    let s: f64 = g
        .nodes
        .iter()
        .zip(&g.weights)
        .zip(vals)
        .map(|((q, w), v)| w * kernel(c, k - q) * v)
        .sum();
    source + s / (2.0 * PI)
}

fn eps_at_edge(c: f64, mu: f64, n: usize, k: f64) -> Result<f64> {
    let g = grid(n, k)?;
    let eps = nystrom(c, &g, |q| q * q - mu)?;
    Ok(interp(c, &g, &eps, k, k * k - mu))
}

/// Ground state at `(c, μ)`: Fermi rapidity from `ε(±K) = 0` in an expanding bracket, then the root density.
pub fn solve_ground(c: f64, mu: f64, opts: &BetheOptions) -> Result<BetheSolution> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("a Fermi sea needs μ > 0, got {mu}")));
    }
    let sol = solve_once(c, mu, opts.n_quad, opts.tol)?;
    if opts.doubling_tol > 0.0 {
        let fine = solve_once(c, mu, 2 * opts.n_quad, opts.tol)?;
        let dev = [
            (sol.rho, fine.rho),
            (sol.e, fine.e),
            (sol.k_fermi, fine.k_fermi),
        ]
        .iter()
        .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
        .fold(0.0, f64::max);
        if dev > opts.doubling_tol {
            return Err(Error::NotConverged {
                what: "Bethe quadrature (node doubling)",
                iterations: 2 * opts.n_quad,
                residual: dev,
            });
        }
    }
    Ok(sol)
}

fn solve_once(c: f64, mu: f64, n: usize, tol: f64) -> Result<BetheSolution> {
    let mut lo = 0.0;
    let mut hi = mu.sqrt().max(1e-8);
    let mut grow = 0;
    while eps_at_edge(c, mu, n, hi)? <= 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Bracketing("no sign change of ε(K)".into()));
        }
    }
    let f_lo = eps_at_edge(c, mu, n, lo)?;
    let f_hi = eps_at_edge(c, mu, n, hi)?;
    let k = illinois(|k| eps_at_edge(c, mu, n, k), (lo, f_lo), (hi, f_hi), tol)?;
    let g = grid(n, k)?;
    let eps_k = nystrom(c, &g, |q| q * q - mu)?;
    let rho_k = nystrom(c, &g, |_| 1.0 / (2.0 * PI))?;
    let rho: f64 = g.weights.iter().zip(&rho_k).map(|(w, r)| w * r).sum();
    let e: f64 = g
        .weights
        .iter()
        .zip(&rho_k)
        .zip(&g.nodes)
        .map(|((w, r), q)| w * r * (q * q - mu))
        .sum();
    Ok(BetheSolution {
        c,
        mu,
        k_fermi: k,
        nodes: g.nodes,
        weights: g.weights,
        rho_k,
        eps_k,
        rho,
        e,
        gamma: c / rho,
    })
}

impl BetheSolution {
    fn as_grid(&self) -> Grid {
        Grid {
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
        }
    }

    /// Dressed energy at any rapidity.
    pub fn eps_at(&self, k: f64) -> f64 {
        interp(self.c, &self.as_grid(), &self.eps_k, k, k * k - self.mu)
    }

    pub fn rho_at(&self, k: f64) -> f64 {
        interp(self.c, &self.as_grid(), &self.rho_k, k, 1.0 / (2.0 * PI))
    }

    /// Dressed momentum `p(k) = k + ∫ 2 arctan((k − q)/c) ρ(q) dq`, odd, with `p(K) = πρ`.
    pub fn momentum_at(&self, k: f64) -> f64 {
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.rho_k)
            .map(|((q, w), r)| w * 2.0 * ((k - q) / self.c).atan() * r)
            .sum();
        k + s
    }

    /// `e + μρ`, the interaction plus kinetic energy density.
    pub fn e_internal(&self) -> f64 {
        self.e + self.mu * self.rho
    }

    pub fn fermi_momentum(&self) -> f64 {
        PI * self.rho
    }

    /// `ε′(K) / p′(K)`.
    pub fn sound_velocity(&self) -> f64 {
        let k = self.k_fermi;
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.eps_k)
            .map(|((q, w), e)| w * kernel_deriv(self.c, k - q) * e)
            .sum();
        (2.0 * k + s / (2.0 * PI)) / (2.0 * PI * self.rho_at(k))
    }

    /// Rapidity with `p(k) = target` inside `[lo, hi]`; `p` is increasing.
    fn invert_momentum(&self, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.momentum_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Particle branch: a rapidity `|k| > K` added, `E = ε(k)` at `p = p(k)`, `|p| ≥ πρ`.
    pub fn particle_energy(&self, p: f64) -> Result<f64> {
        let pf = self.momentum_at(self.k_fermi);
        let q = p.abs();
        if q < pf * (1.0 - 1e-12) {
            return Err(Error::InvalidParameter(format!("particle branch needs |p| ≥ {pf}, got {p}")));
        }
        let q = q.max(pf);
        // p′(k) = 2πρ(k) ≥ 1 bounds the bracket
        let k = self.invert_momentum(q, self.k_fermi, self.k_fermi + (q - pf) + 1e-12);
        Ok(self.eps_at(k).max(0.0))
    }

    /// Hole branch: a rapidity `|k| < K` removed, `E = −ε(k)` at `p = p(k)`, `|p| ≤ πρ`.
    pub fn hole_energy(&self, p: f64) -> Result<f64> {
        let pf = self.momentum_at(self.k_fermi);
        if p.abs() > pf * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!("hole branch needs |p| ≤ {pf}, got {p}")));
        }
        let q = p.abs().min(pf);
        let k = self.invert_momentum(q, 0.0, self.k_fermi);
        Ok((-self.eps_at(k)).max(0.0))
    }

    /// Lieb's type I at total momentum `P`: a particle above the Fermi sea plus a hole at its edge.
    pub fn lieb_type1(&self, p: f64) -> f64 {
        self.particle_energy(p.abs() + self.fermi_momentum()).unwrap_or(f64::NAN)
    }

    /// Lieb's type II at total momentum `P ∈ [−2πρ, 2πρ]`: a hole inside the sea, particle at the edge.
    pub fn lieb_type2(&self, p: f64) -> Result<f64> {
        self.hole_energy(p.abs() - self.fermi_momentum())
    }
}

/// Particle branch on a grid (every |p| ≥ πρ).
pub fn type1_dispersion(sol: &BetheSolution, p_grid: &[f64]) -> Result<Vec<f64>> {
    p_grid.iter().map(|&p| sol.particle_energy(p)).collect()
}

/// Hole branch on a grid (every |p| ≤ πρ).
pub fn type2_dispersion(sol: &BetheSolution, p_grid: &[f64]) -> Result<Vec<f64>> {
    p_grid.iter().map(|&p| sol.hole_energy(p)).collect()
}

/// Chemical potential with `c/ρ = γ`, by a bracketed root search in `ln μ`.
pub fn mu_for_gamma(c: f64, gamma: f64, opts: &BetheOptions) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("γ must be positive, got {gamma}")));
    }
    let target = c / gamma;
    let rho_of = |mu: f64| solve_ground(c, mu, opts).map(|s| s.rho);
    // ρ grows with μ
    let mut lo = (PI * target).powi(2).min(2.0 * c * target) * 0.25;
    let mut hi = lo * 16.0;
    let mut n = 0;
    while rho_of(lo)? > target {
        lo *= 0.25;
        n += 1;
        if n > 60 {
            return Err(Error::Bracketing("μ lower bound".into()));
        }
    }
    while rho_of(hi)? < target {
        hi *= 4.0;
        n += 1;
        if n > 120 {
            return Err(Error::Bracketing("μ upper bound".into()));
        }
    }
    let (a, b) = (lo.ln(), hi.ln());
    let fa = rho_of(lo)? / target - 1.0;
    let fb = rho_of(hi)? / target - 1.0;
    let x = illinois(|x| Ok(rho_of(x.exp())? / target - 1.0), (a, fa), (b, fb), 1e-14)?;
    Ok(x.exp())
}

/// Root of `f` inside a sign-changing bracket by regula falsi with the Illinois fix.
fn illinois(f: impl Fn(f64) -> Result<f64>, (mut a, mut fa): (f64, f64), (mut b, mut fb): (f64, f64), tol: f64) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracketing("no sign change".into()));
    }
    let mut side = 0;
    for _ in 0..200 {
        let x = (a * fb - b * fa) / (fb - fa);
        if (b - a).abs() <= tol * a.abs().max(b.abs()).max(1e-300) {
            return Ok(x);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        // stop once the iterate no longer moves
        if (b - a).abs() <= tol * a.abs().max(b.abs()) || x == a && x == b {
            return Ok(x);
        }
    }
    Err(Error::NotConverged { what: "bracketed root", iterations: 200, residual: (b - a).abs() })
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub p: f64,
    pub p_over_rho: f64,
    /// particle branch (`|p| ≥ πρ`)
    pub type1: Option<f64>,
    /// hole branch (`|p| ≤ πρ`)
    pub type2: Option<f64>,
    pub lieb_type1: f64,
    pub lieb_type2: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleTable {
    pub c: f64,
    pub mu: f64,
    pub rho: f64,
    pub gamma: f64,
    pub rows: Vec<OracleRow>,
}

pub fn oracle_table(c: f64, mu: f64, p_grid: &[f64], opts: &BetheOptions) -> Result<OracleTable> {
    let sol = solve_ground(c, mu, opts)?;
    Ok(table_from(&sol, p_grid))
}

pub fn table_from(sol: &BetheSolution, p_grid: &[f64]) -> OracleTable {
    let rows = p_grid
        .iter()
        .map(|&p| OracleRow {
            p,
            p_over_rho: p / sol.rho,
            type1: sol.particle_energy(p).ok(),
            type2: sol.hole_energy(p).ok(),
            lieb_type1: sol.lieb_type1(p),
            lieb_type2: sol.lieb_type2(p).ok(),
        })
        .collect();
    OracleTable {
        c: sol.c,
        mu: sol.mu,
        rho: sol.rho,
        gamma: sol.gamma,
        rows,
    }
}

impl OracleTable {
    /// Columns `p, p_over_rho` then each branch raw and over `ρ²`; blank outside a branch.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let rr = self.rho * self.rho;
        w.write_record([
            "p",
            "p_over_rho",
            "type1",
            "type1_over_rho2",
            "type2",
            "type2_over_rho2",
            "lieb_type1",
            "lieb_type1_over_rho2",
            "lieb_type2",
            "lieb_type2_over_rho2",
        ])
        .map_err(crate::excitation::spectrum::csv_err)?;
        let f = |x: Option<f64>| x.filter(|v| v.is_finite()).map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.p),
                format!("{:e}", r.p_over_rho),
                f(r.type1),
                f(r.type1.map(|v| v / rr)),
                f(r.type2),
                f(r.type2.map(|v| v / rr)),
                f(Some(r.lieb_type1)),
                f(Some(r.lieb_type1 / rr)),
                f(r.lieb_type2),
                f(r.lieb_type2.map(|v| v / rr)),
            ])
            .map_err(crate::excitation::spectrum::csv_err)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }
}
