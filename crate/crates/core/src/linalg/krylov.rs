//! Restarted GMRES on D×D matrices and the projected shifted transfer solves built on it.

use nalgebra::{DMatrix, Schur};

use super::transfer::{Deflation, Side, TransferBlock};
use super::{axpy, check_square, dagger, from_nalgebra, inner, norm, to_nalgebra, ComplexMatrix, C64, ONE, ZERO};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    /// Relative residual target `‖b − A x‖ / ‖b‖`.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    /// Precondition shifted transfer solves with the Sylvester part `Q_a x + x Q_b†`.
    pub precondition: bool,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: 40,
            max_iter: 3000,
            precondition: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GmresInfo {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn givens(a: C64, b: C64) -> (f64, C64, C64) {
    // returns (c, s, r) with [c s; -s̄ c] [a; b] = [r; 0]
    let na = a.norm();
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, ZERO, a);
    }
    if na == 0.0 {
        return (0.0, ONE, b);
    }
    let t = (na * na + nb * nb).sqrt();
    let phase = a / na;
    let c = na / t;
    let s = phase * b.conj() / t;
    (c, s, phase * t)
}

/// Right-preconditioned restarted GMRES. `prec` approximates `A⁻¹`.
/// Returns the iterate even when the budget runs out; `info.converged` tells which.
pub fn gmres(
    op: &dyn Fn(&ComplexMatrix) -> ComplexMatrix,
    prec: Option<&dyn Fn(&ComplexMatrix) -> ComplexMatrix>,
    b: &ComplexMatrix,
    x0: Option<&ComplexMatrix>,
    opts: &KrylovOptions,
) -> (ComplexMatrix, GmresInfo) {
    let bnorm = norm(b);
    let mut x = x0.cloned().unwrap_or_else(|| ComplexMatrix::zeros(b.raw_dim()));
    if bnorm == 0.0 {
        return (
            ComplexMatrix::zeros(b.raw_dim()),
            GmresInfo {
                iterations: 0,
                residual: 0.0,
                converged: true,
            },
        );
    }
    let apply_prec = |v: &ComplexMatrix| match prec {
        Some(p) => p(v),
        None => v.clone(),
    };
    let m = opts.restart.max(1);
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < opts.max_iter {
        let r = b - &op(&x);
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            return (
                x,
                GmresInfo {
                    iterations: total,
                    residual: rel,
                    converged: true,
                },
            );
        }
        let mut basis: Vec<ComplexMatrix> = vec![r.mapv(|z| z / beta)];
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for j in 0..m {
            if total >= opts.max_iter {
                break;
            }
            total += 1;
            let mut w = op(&apply_prec(&basis[j]));
            let mut col = vec![ZERO; j + 2];
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = inner(v, &w);
                    col[i] += hij;
                    axpy(-hij, v, &mut w);
                }
                if pass == 0 && norm(&w) > 0.5 * col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() {
                    break;
                }
            }
            let wn = norm(&w);
            col[j + 1] = C64::new(wn, 0.0);
            for (i, &(c, s)) in cs.iter().enumerate() {
                let a = col[i];
                let bb = col[i + 1];
                col[i] = a * c + s * bb;
                col[i + 1] = -s.conj() * a + bb * c;
            }
            let (c, s, rr) = givens(col[j], col[j + 1]);
            col[j] = rr;
            col[j + 1] = ZERO;
            cs.push((c, s));
            let gj = g[j];
            g[j] = gj * c;
            g[j + 1] = -s.conj() * gj;
            h.push(col);
            k_used = j + 1;
            rel = g[j + 1].norm() / bnorm;
            if rel <= opts.tol || wn <= 1e-300 {
                break;
            }
            basis.push(w.mapv(|z| z / wn));
        }
        // back substitution on the triangular factor
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                s -= h[jj][i] * yj;
            }
            y[i] = s / h[i][i];
        }
        let mut u = ComplexMatrix::zeros(b.raw_dim());
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &basis[i], &mut u);
        }
        x = x + apply_prec(&u);
    }
    let r = b - &op(&x);
    let res = norm(&r) / bnorm;
    (
        x,
        GmresInfo {
            iterations: total,
            residual: res.min(rel.max(res)),
            converged: res <= opts.tol,
        },
    )
}

/// Solver for `A Z + Z B − s Z = C` with `A`, `B` fixed, through complex Schur forms.
#[derive(Clone, Debug)]
pub struct Sylvester {
    ua: ComplexMatrix,
    ta: DMatrix<C64>,
    ua_dag: ComplexMatrix,
    ub: ComplexMatrix,
    tb: DMatrix<C64>,
    ub_dag: ComplexMatrix,
}

impl Sylvester {
    pub fn new(a: &ComplexMatrix, b: &ComplexMatrix) -> Self {
        let (ua, ta) = Schur::new(to_nalgebra(a)).unpack();
        let (ub, tb) = Schur::new(to_nalgebra(b)).unpack();
        let ua = from_nalgebra(&ua);
        let ub = from_nalgebra(&ub);
        Self {
            ua_dag: dagger(&ua),
            ub_dag: dagger(&ub),
            ua,
            ta,
            ub,
            tb,
        }
    }

    pub fn solve(&self, c: &ComplexMatrix, s: C64) -> ComplexMatrix {
        let n = c.nrows();
        let ct = self.ua_dag.dot(c).dot(&self.ub);
        let mut y = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            let mut rhs: Vec<C64> = (0..n).map(|i| ct[(i, j)]).collect();
            for k in 0..j {
                let t = self.tb[(k, j)];
                if t != ZERO {
                    for (i, ri) in rhs.iter_mut().enumerate() {
                        *ri -= y[(i, k)] * t;
                    }
                }
            }
            let shift = self.tb[(j, j)] - s;
            for i in (0..n).rev() {
                let mut acc = rhs[i];
                for kk in i + 1..n {
                    acc -= self.ta[(i, kk)] * y[(kk, j)];
                }
                let mut den = self.ta[(i, i)] + shift;
                if den.norm() < 1e-14 {
                    den = C64::new(1e-14, 0.0);
                }
                y[(i, j)] = acc / den;
            }
        }
        self.ua.dot(&from_nalgebra(&y)).dot(&self.ub_dag)
    }
}

/// Shifted solver bound to one transfer block and side, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct ShiftedSolver {
    block: TransferBlock,
    side: Side,
    shift: C64,
    deflation: Option<Deflation>,
    sylvester: Option<Sylvester>,
    opts: KrylovOptions,
}

impl ShiftedSolver {
    pub fn new(
        block: &TransferBlock,
        shift: C64,
        side: Side,
        deflation: Option<&Deflation>,
        opts: &KrylovOptions,
    ) -> Result<Self> {
        if let Some(d) = deflation {
            check_square(&d.l, block.dim(), "deflation l")?;
            check_square(&d.r, block.dim(), "deflation r")?;
        }
        let sylvester = opts.precondition.then(|| match side {
            Side::Right => Sylvester::new(block.qa(), block.qb_dag()),
            Side::Left => Sylvester::new(block.qb_dag(), block.qa()),
        });
        Ok(Self {
            block: block.clone(),
            side,
            shift,
            deflation: deflation.cloned(),
            sylvester,
            opts: *opts,
        })
    }

    /// `(s − T) x` plus the rank-one completion when deflating.
    fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = x.mapv(|z| z * self.shift) - self.block.apply(x, self.side);
        if let Some(d) = &self.deflation {
            let w = d.weight(x, self.side);
            let target = match self.side {
                Side::Right => &d.r,
                Side::Left => &d.l,
            };
            axpy(w, target, &mut out);
        }
        out
    }

    pub fn solve(&self, rhs: &ComplexMatrix, x0: Option<&ComplexMatrix>) -> Result<ComplexMatrix> {
        self.solve_with_info(rhs, x0).map(|(x, _)| x)
    }

    pub fn solve_with_info(&self, rhs: &ComplexMatrix, x0: Option<&ComplexMatrix>) -> Result<(ComplexMatrix, GmresInfo)> {
        check_square(rhs, self.block.dim(), "rhs")?;
        let b = match &self.deflation {
            Some(d) => d.project(rhs, self.side),
            None => rhs.clone(),
        };
        let (x, info) = self.solve_raw(&b, x0)?;
        let x = match &self.deflation {
            Some(d) => d.project(&x, self.side),
            None => x,
        };
        Ok((x, info))
    }

    /// Solves the bordered system `(s − T) x + w(x)·t = rhs` without projecting, where
    /// `w(x)` and `t` come from the deflation pair (`Tr(l x)` and `r` on the right side).
    /// With `s = 0` and `rhs = t` this yields the zero mode normalized by `w(x) = 1`.
    pub fn solve_bordered(&self, rhs: &ComplexMatrix, x0: Option<&ComplexMatrix>) -> Result<(ComplexMatrix, GmresInfo)> {
        check_square(rhs, self.block.dim(), "rhs")?;
        self.solve_raw(rhs, x0)
    }

    fn solve_raw(&self, b: &ComplexMatrix, x0: Option<&ComplexMatrix>) -> Result<(ComplexMatrix, GmresInfo)> {
        let op = |x: &ComplexMatrix| self.apply(x);
        let prec_fn = |x: &ComplexMatrix| {
            // (s − Q_a − Q_b†)⁻¹ x, i.e. solve Q_a z + z Q_b† − s z = −x
            let neg = x.mapv(|z| -z);
            self.sylvester.as_ref().unwrap().solve(&neg, self.shift)
        };
        let prec: Option<&dyn Fn(&ComplexMatrix) -> ComplexMatrix> =
            if self.sylvester.is_some() { Some(&prec_fn) } else { None };
        let (x, info) = gmres(&op, prec, b, x0, &self.opts);
        if !info.converged || !super::all_finite(&x) {
            return Err(Error::NotConverged {
                what: "shifted transfer solve",
                iterations: info.iterations,
                residual: info.residual,
            });
        }
        Ok((x, info))
    }
}

/// Solves `(s − T_ab) x = P·rhs` for a shift `s` (typically `ip`), with `P = 1 − |r⟩⟨l|`
/// when a deflation pair is supplied (identity otherwise). With deflation the result is
/// itself projected, which realizes the pseudo-inverse `(s − T)^P`.
pub fn solve_shifted_transfer(
    block: &TransferBlock,
    shift: C64,
    rhs: &ComplexMatrix,
    side: Side,
    deflation: Option<&Deflation>,
    opts: &KrylovOptions,
) -> Result<ComplexMatrix> {
    ShiftedSolver::new(block, shift, side, deflation, opts)?.solve(rhs, None)
}
