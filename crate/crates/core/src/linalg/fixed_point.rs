//! Leading eigenvalue and left/right fixed points of a diagonal transfer matrix.

use super::dense::{dense_operator, eig_general, null_vector, unvectorize};
use super::krylov::{gmres, KrylovOptions};
use super::transfer::{Side, TransferBlock};
use super::{
    dagger, hermitian_part, herm_eig, norm, trace, trace_prod, ComplexMatrix, C64, ONE, ZERO,
};
use crate::error::{Error, Result};

/// Largest D for which the transfer matrix is diagonalized densely.
pub const DENSE_FIXED_POINT_MAX_D: usize = 8;

#[derive(Clone, Debug)]
pub struct FixedPoints {
    pub eta: f64,
    pub l: ComplexMatrix,
    pub r: ComplexMatrix,
}

/// Turns an approximate eigenmatrix into a hermitian one with positive trace.
fn hermitize(x: &ComplexMatrix) -> ComplexMatrix {
    let t = trace(x);
    let phase = if t.norm() > 1e-300 { t.conj() / t.norm() } else { ONE };
    let h = hermitian_part(&x.mapv(|z| z * phase));
    let tr = trace(&h).re;
    h.mapv(|z| z / tr)
}

fn normalize_pair(l: ComplexMatrix, r: ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let lr = trace_prod(&l, &r).re;
    if !(lr > 0.0) {
        return Err(Error::DegenerateFixedPoint(format!("Tr(l r) = {lr:.3e} is not positive")));
    }
    Ok((l.mapv(|z| z / lr), r))
}

fn residual(block: &TransferBlock, x: &ComplexMatrix, eta: f64, side: Side) -> f64 {
    let tx = block.apply(x, side) - x.mapv(|z| z * eta);
    norm(&tx) / norm(x)
}

/// `eta` is the real part of the leading eigenvalue of `T = T(Q,R;Q,R)`, `l` and `r`
/// its left and right eigenmatrices, hermitian with `Tr r = 1` and `Tr(l r) = 1`.
/// `tol` bounds the residuals `‖(T − eta) r‖ / ‖r‖` and the left analogue.
pub fn leading_fixed_points(q: &ComplexMatrix, r: &ComplexMatrix, tol: f64) -> Result<FixedPoints> {
    let block = TransferBlock::diagonal(q, r)?;
    let d = block.dim();
    let fp = if d <= DENSE_FIXED_POINT_MAX_D {
        dense_fixed_points(&block)?
    } else {
        iterative_fixed_points(&block, tol)?
    };
    let res = residual(&block, &fp.r, fp.eta, Side::Right).max(residual(&block, &fp.l, fp.eta, Side::Left));
    let scale = 1.0 + norm(q) + norm(r) * norm(r);
    if !(res <= tol * scale) {
        return Err(Error::NotConverged {
            what: "fixed point",
            iterations: 0,
            residual: res,
        });
    }
    Ok(fp)
}

fn dense_fixed_points(block: &TransferBlock) -> Result<FixedPoints> {
    let d = block.dim();
    let t = dense_operator(d, |x| block.apply_right(x));
    let (vals, _) = eig_general(&t);
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].re.total_cmp(&vals[a].re));
    let lead = vals[order[0]];
    let scale = 1.0 + vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if vals.len() > 1 && (vals[order[1]] - lead).norm() < 1e-9 * scale {
        return Err(Error::DegenerateFixedPoint(format!(
            "eigenvalues {} and {} coincide",
            lead, vals[order[1]]
        )));
    }
    let eta = lead.re;
    let n = d * d;
    let shifted = &t - &ndarray::Array2::from_shape_fn((n, n), |(i, j)| if i == j { C64::new(eta, 0.0) } else { ZERO });
    let (rv, _) = null_vector(&shifted);
    // a left vector x pairs as vec(xᵀ), so l is the transposed null vector of Tᵀ
    let (lv, _) = null_vector(&shifted.t().to_owned());
    let r = hermitize(&unvectorize(&rv, d));
    let l = hermitize(&unvectorize(&lv, d).t().to_owned());
    let (l, r) = normalize_pair(l, r)?;
    Ok(FixedPoints { eta, l, r })
}

/// Rayleigh-quotient-style inverse iteration on one side, with GMRES inner solves.
fn inverse_iteration(block: &TransferBlock, side: Side, tol: f64, sigma0: f64) -> Result<(f64, ComplexMatrix)> {
    let d = block.dim();
    let mut x = super::eye(d).mapv(|z| z / d as f64);
    let mut eta;
    let mut sigma = sigma0;
    let scale = 1.0 + sigma0.abs();
    let opts = KrylovOptions {
        tol: 1e-12,
        restart: 60,
        max_iter: 600,
        precondition: false,
    };
    let mut res = f64::INFINITY;
    for it in 0..200 {
        let op = |v: &ComplexMatrix| v.mapv(|z| z * sigma) - block.apply(v, side);
        let (y, _) = gmres(&op, None, &x, Some(&x), &opts);
        x = hermitize(&y);
        eta = trace(&block.apply(&x, side)).re / trace(&x).re;
        res = residual(block, &x, eta, side);
        if res <= 0.1 * tol * scale {
            return Ok((eta, x));
        }
        // keep the shift above the estimate so the shifted map stays invertible
        let offset = (10.0 * res).max(1e-9 * scale);
        if it >= 2 {
            sigma = eta + offset.min(sigma - eta).max(1e-9 * scale);
        }
    }
    Err(Error::NotConverged {
        what: "fixed point inverse iteration",
        iterations: 200,
        residual: res,
    })
}

fn iterative_fixed_points(block: &TransferBlock, tol: f64) -> Result<FixedPoints> {
    let q = block.qa();
    let r = block.ra();
    // eta <= lambda_max(Q + Q† + R†R), so sigma0 lies strictly to the right of the spectrum
    let m = q + &dagger(q) + dagger(r).dot(r);
    let (vals, _) = herm_eig(&m);
    let sigma0 = vals.last().unwrap() + 1.0;
    let (eta_r, rr) = inverse_iteration(block, Side::Right, tol, sigma0)?;
    let (eta_l, ll) = inverse_iteration(block, Side::Left, tol, sigma0)?;
    if (eta_r - eta_l).abs() > 1e-6 * (1.0 + eta_r.abs()) {
        return Err(Error::DegenerateFixedPoint(format!(
            "left ({eta_l}) and right ({eta_r}) iterations found different leading eigenvalues"
        )));
    }
    let (l, r) = normalize_pair(ll, rr)?;
    Ok(FixedPoints {
        eta: 0.5 * (eta_r + eta_l),
        l,
        r,
    })
}
